//! Dense matrix helpers: exponentials, Hermitian eigendecomposition and a
//! Krylov approximation of `exp(a H) v` for operators only available as a
//! matrix-vector product.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TtnError};
use crate::tensor::{C64, ZERO};

/// Dense matrix exponential (scaling and squaring with Padé approximants).
pub fn expm(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    if !m.is_square() {
        return Err(TtnError::Operator(format!(
            "cannot exponentiate a {}x{} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().all(|z| *z == ZERO) {
        return Ok(DMatrix::identity(m.nrows(), m.ncols()));
    }
    let e = m.exp();
    if !e.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(TtnError::NonFinite("matrix exponential".into()));
    }
    Ok(e)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigh(m: &DMatrix<C64>) -> Result<(Vec<f64>, DMatrix<C64>)> {
    if !m.is_square() {
        return Err(TtnError::Operator("Hermitian eigensolver needs a square matrix".into()));
    }
    let n = m.nrows();
    // symmetrise so that round-off in the input cannot bias the solver
    let fm = faer::Mat::<C64>::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    let eig = fm
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| TtnError::NonFinite(format!("eigensolver did not converge: {e:?}")))?;
    let (fs, fu) = (eig.S().column_vector(), eig.U());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| fs[i].re.total_cmp(&fs[j].re));
    let vals = order.iter().map(|&i| fs[i].re).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| fu[(r, order[c])]);
    Ok((vals, vecs))
}

/// `exp(-i t H) v` for Hermitian `H` via its eigendecomposition.
pub fn hermitian_evolve(
    eigenvalues: &[f64],
    eigenvectors: &DMatrix<C64>,
    v: &DVector<C64>,
    t: f64,
) -> DVector<C64> {
    let mut coeffs = eigenvectors.ad_mul(v);
    for (c, &e) in coeffs.iter_mut().zip(eigenvalues) {
        *c *= C64::new(0.0, -e * t).exp();
    }
    eigenvectors * coeffs
}

pub(crate) fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    pub tol: f64,
    pub max_dim: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_dim: 50,
        }
    }
}

/// Approximates `exp(a H) v` where `apply` computes `H x`.
///
/// Builds an orthonormal Krylov basis by Arnoldi iteration with full
/// reorthogonalisation. When the basis reaches `max_dim` without meeting the
/// error estimate, the step is split and the remainder restarted from the
/// partially evolved vector.
pub fn expm_krylov<F>(mut apply: F, v: &[C64], a: C64, opts: KrylovOptions) -> Result<Vec<C64>>
where
    F: FnMut(&[C64]) -> Result<Vec<C64>>,
{
    let n = v.len();
    let mut w = v.to_vec();
    let mut remaining = 1.0f64;
    let max_dim = opts.max_dim.clamp(1, n.max(1));
    let mut guard = 0;
    while remaining > 0.0 {
        guard += 1;
        if guard > 10_000 {
            return Err(TtnError::NonFinite(
                "Krylov exponential failed to converge".into(),
            ));
        }
        let beta = vec_norm(&w);
        if beta == 0.0 {
            return Ok(w);
        }
        let mut basis: Vec<Vec<C64>> = vec![w.iter().map(|z| z / beta).collect()];
        let mut h = DMatrix::from_element(max_dim + 1, max_dim, ZERO);
        let mut done: Option<(usize, f64, DVector<C64>)> = None;
        for j in 0..max_dim {
            let mut q = apply(&basis[j])?;
            if q.len() != n {
                return Err(TtnError::Incompatible("operator changed vector length".into()));
            }
            for _ in 0..2 {
                for (i, b) in basis.iter().enumerate() {
                    let c = vdot(b, &q);
                    h[(i, j)] += c;
                    for (x, y) in q.iter_mut().zip(b) {
                        *x -= c * y;
                    }
                }
            }
            let hn = vec_norm(&q);
            if !hn.is_finite() {
                return Err(TtnError::NonFinite("Krylov iteration".into()));
            }
            h[(j + 1, j)] = C64::new(hn, 0.0);
            let m = j + 1;
            let hm = h.view((0, 0), (m, m)).into_owned();
            let invariant = hn < 1e-13 * (1.0 + hm.norm());
            // try the whole remaining step first, halving on failure once the
            // basis is exhausted
            let mut frac = remaining;
            loop {
                let e1 = expm(&(hm.clone() * (a * frac)))?.column(0).into_owned();
                let err = beta * hn * e1[m - 1].norm();
                if invariant || err < opts.tol {
                    done = Some((m, frac, e1));
                    break;
                }
                if m < max_dim || frac < 1e-8 * remaining {
                    break;
                }
                frac *= 0.5;
            }
            if done.is_some() {
                break;
            }
            basis.push(q.iter().map(|z| z / hn).collect());
        }
        let (m, frac, e1) = done.ok_or_else(|| {
            TtnError::NonFinite("Krylov exponential did not reach tolerance".into())
        })?;
        let mut out = vec![ZERO; n];
        for (k, b) in basis.iter().take(m).enumerate() {
            let c = e1[k] * beta;
            for (x, y) in out.iter_mut().zip(b) {
                *x += c * y;
            }
        }
        w = out;
        remaining -= frac;
        if remaining < 1e-14 {
            remaining = 0.0;
        }
    }
    Ok(w)
}
