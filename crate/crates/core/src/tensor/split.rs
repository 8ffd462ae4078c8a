//! QR and SVD splitting of tensors along a bipartition of their legs.

use nalgebra::{DMatrix, DVector};

use super::{check_partition, DenseTensor, C64, ZERO};
use crate::error::{Result, TtnError};

/// Singular values below this multiple of the largest one count as zero when
/// splitting in [`SplitMode::Reduced`].
pub const REDUCED_ZERO_THRESHOLD: f64 = 1e-15;

/// Size of the new bond created by a split, with `m` the product of the
/// first-factor dimensions and `n` the product of the second-factor ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitMode {
    /// `D = m`
    Full,
    /// `D = n`
    Keep,
    /// `D = min(m, n)`
    Reduced,
}

/// Which factor absorbs the singular values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ContractionMode {
    IntoU,
    IntoV,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvdParameters {
    pub max_bond_dim: usize,
    pub rel_tol: f64,
    pub total_tol: f64,
    pub renorm: bool,
}

impl Default for SvdParameters {
    fn default() -> Self {
        Self {
            max_bond_dim: usize::MAX,
            rel_tol: 0.0,
            total_tol: 0.0,
            renorm: false,
        }
    }
}

impl SvdParameters {
    pub fn with_max_bond_dim(mut self, d: usize) -> Self {
        self.max_bond_dim = d;
        self
    }

    pub fn with_rel_tol(mut self, tol: f64) -> Self {
        self.rel_tol = tol;
        self
    }

    pub fn with_total_tol(mut self, tol: f64) -> Self {
        self.total_tol = tol;
        self
    }

    pub fn with_renorm(mut self, renorm: bool) -> Self {
        self.renorm = renorm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_bond_dim == 0 {
            return Err(TtnError::Incompatible(
                "max_bond_dim must be at least 1".into(),
            ));
        }
        if !(self.rel_tol >= 0.0 && self.total_tol >= 0.0) {
            return Err(TtnError::Incompatible(
                "truncation tolerances must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Number of leading values of a descending `s` that survive truncation.
    /// Returns `(kept, everything_truncated)`; never returns zero kept values
    /// for non-empty input.
    pub fn kept_count(&self, s: &[f64]) -> (usize, bool) {
        if s.is_empty() {
            return (0, false);
        }
        let s_max = s[0];
        let survives = |x: f64| !(x < self.rel_tol * s_max) && !(x < self.total_tol);
        let passed = s.iter().take_while(|&&x| survives(x)).count();
        let kept = passed.min(self.max_bond_dim);
        if kept == 0 {
            (1, true)
        } else {
            (kept, false)
        }
    }
}

/// Result of a truncated SVD.
#[derive(Clone, Debug)]
pub struct TruncatedSvd {
    pub u: DenseTensor,
    pub s: Vec<f64>,
    pub v: DenseTensor,
    /// Singular values that were dropped, descending.
    pub discarded: Vec<f64>,
    /// Set when every singular value failed the tolerance filters and the
    /// largest one was kept anyway.
    pub all_truncated: bool,
}

impl TruncatedSvd {
    pub fn truncation_error(&self) -> f64 {
        self.discarded.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// QR split. `Q` carries `q_legs` then the new bond; `R` carries the new bond
/// then `r_legs`.
pub fn tensor_qr(
    a: &DenseTensor,
    q_legs: &[usize],
    r_legs: &[usize],
    mode: SplitMode,
) -> Result<(DenseTensor, DenseTensor)> {
    let mat = a.to_matrix(q_legs, r_legs)?;
    let (m, n) = mat.shape();
    let (q, r) = match mode {
        SplitMode::Reduced => {
            let qr = mat.qr();
            (qr.q(), qr.r())
        }
        SplitMode::Full | SplitMode::Keep => {
            let (q_full, r_full) = full_qr(&mat);
            if mode == SplitMode::Full {
                (q_full, r_full)
            } else if n <= m {
                (
                    q_full.columns(0, n).into_owned(),
                    r_full.rows(0, n).into_owned(),
                )
            } else {
                // more columns than rows: pad the bond with zero directions
                let mut q = DMatrix::from_element(m, n, ZERO);
                q.columns_mut(0, m).copy_from(&q_full);
                let mut r = DMatrix::from_element(n, n, ZERO);
                r.rows_mut(0, m).copy_from(&r_full);
                (q, r)
            }
        }
    };
    let d = q.ncols();
    let q_shape: Vec<usize> = q_legs
        .iter()
        .map(|&l| a.dim(l))
        .chain(std::iter::once(d))
        .collect();
    let r_shape: Vec<usize> = std::iter::once(d)
        .chain(r_legs.iter().map(|&l| a.dim(l)))
        .collect();
    Ok((
        DenseTensor::from_matrix(&q).into_reshape(&q_shape)?,
        DenseTensor::from_matrix(&r).into_reshape(&r_shape)?,
    ))
}

/// QR with a square `m x m` unitary factor, obtained by factoring `[A | I]`.
fn full_qr(mat: &DMatrix<C64>) -> (DMatrix<C64>, DMatrix<C64>) {
    let (m, n) = mat.shape();
    let mut aug = DMatrix::from_element(m, n + m, ZERO);
    aug.columns_mut(0, n).copy_from(mat);
    for i in 0..m {
        aug[(i, n + i)] = C64::new(1.0, 0.0);
    }
    let qr = aug.qr();
    let q = qr.q();
    let r = qr.r().columns(0, n).into_owned();
    (q, r)
}

/// Thin SVD of a matrix with singular values sorted descending.
pub(crate) fn matrix_svd(mat: &DMatrix<C64>) -> Result<(DMatrix<C64>, Vec<f64>, DMatrix<C64>)> {
    let (m, n) = mat.shape();
    let fm = faer::Mat::<C64>::from_fn(m, n, |i, j| mat[(i, j)]);
    let svd = fm
        .thin_svd()
        .map_err(|e| TtnError::NonFinite(format!("SVD did not converge: {e:?}")))?;
    let k = m.min(n);
    let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
    let u = DMatrix::from_fn(m, k, |i, j| fu[(i, j)]);
    let v_t = DMatrix::from_fn(k, n, |i, j| fv[(j, i)].conj());
    let s: Vec<f64> = (0..k).map(|i| fs[i].re).collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    if order.iter().enumerate().all(|(k, &i)| k == i) {
        return Ok((u, s, v_t));
    }
    let u_sorted = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v_sorted = DMatrix::from_fn(order.len(), v_t.ncols(), |r, c| v_t[(order[r], c)]);
    let s_sorted = order.iter().map(|&i| s[i]).collect();
    Ok((u_sorted, s_sorted, v_sorted))
}

fn svd_factors(
    a: &DenseTensor,
    u_legs: &[usize],
    v_legs: &[usize],
) -> Result<(DMatrix<C64>, Vec<f64>, DMatrix<C64>)> {
    check_partition(u_legs, v_legs, a.degree())?;
    let mat = a.to_matrix(u_legs, v_legs)?;
    if !mat.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(TtnError::NonFinite("SVD input".into()));
    }
    matrix_svd(&mat)
}

fn factors_to_tensors(
    a: &DenseTensor,
    u_legs: &[usize],
    v_legs: &[usize],
    u: &DMatrix<C64>,
    v: &DMatrix<C64>,
    keep: usize,
) -> Result<(DenseTensor, DenseTensor)> {
    let u_k = u.columns(0, keep).into_owned();
    let v_k = v.rows(0, keep).into_owned();
    let u_shape: Vec<usize> = u_legs
        .iter()
        .map(|&l| a.dim(l))
        .chain(std::iter::once(keep))
        .collect();
    let v_shape: Vec<usize> = std::iter::once(keep)
        .chain(v_legs.iter().map(|&l| a.dim(l)))
        .collect();
    Ok((
        DenseTensor::from_matrix(&u_k).into_reshape(&u_shape)?,
        DenseTensor::from_matrix(&v_k).into_reshape(&v_shape)?,
    ))
}

/// SVD split. `U` carries `u_legs` then the bond; `V` carries the bond then
/// `v_legs`. Full and Keep retain all `min(m, n)` singular values including
/// zeros; Reduced drops the numerically zero ones.
pub fn tensor_svd(
    a: &DenseTensor,
    u_legs: &[usize],
    v_legs: &[usize],
    mode: SplitMode,
) -> Result<(DenseTensor, Vec<f64>, DenseTensor)> {
    let (u, s, v) = svd_factors(a, u_legs, v_legs)?;
    let keep = match mode {
        SplitMode::Full | SplitMode::Keep => s.len(),
        SplitMode::Reduced => {
            let s_max = s.first().copied().unwrap_or(0.0);
            s.iter()
                .take_while(|&&x| x >= REDUCED_ZERO_THRESHOLD * s_max && x > 0.0)
                .count()
                .max(1)
        }
    };
    let (ut, vt) = factors_to_tensors(a, u_legs, v_legs, &u, &v, keep)?;
    Ok((ut, s[..keep].to_vec(), vt))
}

pub fn truncated_svd(
    a: &DenseTensor,
    u_legs: &[usize],
    v_legs: &[usize],
    params: &SvdParameters,
) -> Result<TruncatedSvd> {
    params.validate()?;
    let (u, s, v) = svd_factors(a, u_legs, v_legs)?;
    let (keep, all_truncated) = params.kept_count(&s);
    let (ut, vt) = factors_to_tensors(a, u_legs, v_legs, &u, &v, keep)?;
    let mut kept = s[..keep].to_vec();
    if params.renorm {
        let before = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        let after = kept.iter().map(|x| x * x).sum::<f64>().sqrt();
        if after > 0.0 {
            let f = before / after;
            kept.iter_mut().for_each(|x| *x *= f);
        }
    }
    Ok(TruncatedSvd {
        u: ut,
        s: kept,
        v: vt,
        discarded: s[keep..].to_vec(),
        all_truncated,
    })
}

/// Truncated SVD with the singular values multiplied into one factor.
pub fn contr_truncated_svd_splitting(
    a: &DenseTensor,
    u_legs: &[usize],
    v_legs: &[usize],
    params: &SvdParameters,
    mode: ContractionMode,
) -> Result<(DenseTensor, DenseTensor)> {
    let TruncatedSvd { u, s, v, .. } = truncated_svd(a, u_legs, v_legs, params)?;
    Ok(match mode {
        ContractionMode::IntoU => (scale_last_leg(u, &s), v),
        ContractionMode::IntoV => (u, scale_first_leg(v, &s)),
    })
}

pub(crate) fn scale_last_leg(mut t: DenseTensor, s: &[f64]) -> DenseTensor {
    let d = s.len();
    for (k, z) in t.data_mut().iter_mut().enumerate() {
        *z *= s[k % d];
    }
    t
}

pub(crate) fn scale_first_leg(mut t: DenseTensor, s: &[f64]) -> DenseTensor {
    let block = t.len() / s.len();
    for (k, z) in t.data_mut().iter_mut().enumerate() {
        *z *= s[k / block];
    }
    t
}

/// Diagonal matrix of singular values as a degree-2 tensor.
pub fn diag_tensor(s: &[f64]) -> DenseTensor {
    let v = DVector::from_iterator(s.len(), s.iter().map(|&x| C64::new(x, 0.0)));
    DenseTensor::from_matrix(&DMatrix::from_diagonal(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ONE;

    fn recontract_qr(q: &DenseTensor, r: &DenseTensor) -> DenseTensor {
        DenseTensor::contract(q, r, &[q.degree() - 1], &[0]).unwrap()
    }

    #[test]
    fn svd_of_sparse_kronecker_structure() {
        // a tall, highly structured matrix: the Kronecker product of Pauli
        // matrices, matricised across a non-contiguous cut
        let y = DenseTensor::new(vec![2, 2], vec![ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), ZERO]).unwrap();
        let z = DenseTensor::new(vec![2, 2], vec![ONE, ZERO, ZERO, -ONE]).unwrap();
        let mut t = DenseTensor::scalar(C64::new(1.3, 0.0));
        for f in [&z, &z, &z, &y, &z, &y] {
            t = DenseTensor::outer(&t, f);
        }
        let u_legs: Vec<usize> = (0..12).rev().filter(|&l| l != 4 && l != 5).collect();
        let (u, s, v) = tensor_svd(&t, &u_legs, &[5, 4], SplitMode::Reduced).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0] - t.norm()).abs() < 1e-12);
        let back = DenseTensor::contract(&scale_last_leg(u, &s), &v, &[10], &[0]).unwrap();
        let mut perm = u_legs.clone();
        perm.extend([5, 4]);
        assert!(back.max_abs_diff(&t.transpose(&perm).unwrap()) < 1e-12);
        for mode in [SplitMode::Keep, SplitMode::Reduced] {
            let (q, r) = tensor_qr(&t, &u_legs, &[5, 4], mode).unwrap();
            assert!(recontract_qr(&q, &r).max_abs_diff(&t.transpose(&perm).unwrap()) < 1e-12);
            if mode == SplitMode::Reduced {
                assert!(isometry_defect(&q) < 1e-12);
            }
        }
    }

    fn isometry_defect(q: &DenseTensor) -> f64 {
        let legs: Vec<usize> = (0..q.degree() - 1).collect();
        let g = DenseTensor::contract(&q.conj(), q, &legs, &legs).unwrap();
        g.max_abs_diff(&DenseTensor::identity(q.dim(q.degree() - 1)))
    }

    #[test]
    fn qr_modes_give_expected_bond_dims() {
        let a = DenseTensor::random(&[2, 3, 4, 5], 1).unwrap();
        let expected = [
            (SplitMode::Reduced, 10),
            (SplitMode::Full, 10),
            (SplitMode::Keep, 12),
        ];
        for (mode, d) in expected {
            let (q, r) = tensor_qr(&a, &[0, 3], &[1, 2], mode).unwrap();
            assert_eq!(q.shape(), &[2, 5, d]);
            assert_eq!(r.shape(), &[d, 3, 4]);
            let back = recontract_qr(&q, &r).transpose(&[0, 2, 3, 1]).unwrap();
            assert!(back.rel_diff(&a) < 1e-12, "{mode:?}");
        }
    }

    #[test]
    fn qr_full_is_unitary_for_tall_input() {
        let a = DenseTensor::random(&[6, 2], 9).unwrap();
        let (q, r) = tensor_qr(&a, &[0], &[1], SplitMode::Full).unwrap();
        assert_eq!(q.shape(), &[6, 6]);
        assert!(isometry_defect(&q) < 1e-12);
        assert!(recontract_qr(&q, &r).rel_diff(&a) < 1e-12);
        let (q, r) = tensor_qr(&a, &[0], &[1], SplitMode::Keep).unwrap();
        assert_eq!(q.shape(), &[6, 2]);
        assert!(isometry_defect(&q) < 1e-12);
        assert!(recontract_qr(&q, &r).rel_diff(&a) < 1e-12);
    }

    #[test]
    fn qr_of_identity() {
        let a = DenseTensor::identity(4);
        let (q, r) = tensor_qr(&a, &[0], &[1], SplitMode::Reduced).unwrap();
        for i in 0..4 {
            assert!((r.get(&[i, i]).norm() - 1.0).abs() < 1e-12);
        }
        assert!(isometry_defect(&q) < 1e-12);
    }

    #[test]
    fn qr_square_random_isometry() {
        let a = DenseTensor::random(&[4, 4], 3).unwrap();
        let (q, _) = tensor_qr(&a, &[0], &[1], SplitMode::Reduced).unwrap();
        assert!(isometry_defect(&q) < 1e-12);
    }

    #[test]
    fn qr_rejects_bad_partition() {
        let a = DenseTensor::random(&[2, 3, 4], 3).unwrap();
        assert!(tensor_qr(&a, &[0, 1], &[1, 2], SplitMode::Reduced).is_err());
        assert!(tensor_qr(&a, &[0], &[2], SplitMode::Reduced).is_err());
    }

    fn diag_degree4() -> DenseTensor {
        // diag(1, 0.5, 0.2, 0) as a (2,2,2,2) tensor
        let vals = [1.0, 0.5, 0.2, 0.0];
        let mut m = DenseTensor::zeros(&[4, 4]);
        for (i, &v) in vals.iter().enumerate() {
            m.set(&[i, i], C64::new(v, 0.0));
        }
        m.reshape(&[2, 2, 2, 2]).unwrap()
    }

    #[test]
    fn svd_recovers_diagonal_values() {
        let a = diag_degree4();
        let (_, s, _) = tensor_svd(&a, &[0, 1], &[2, 3], SplitMode::Full).unwrap();
        let expected = [1.0, 0.5, 0.2, 0.0];
        assert_eq!(s.len(), 4);
        for (x, y) in s.iter().zip(expected) {
            assert!((x - y).abs() < 1e-14);
        }
        let (u, s, v) = tensor_svd(&a, &[0, 1], &[2, 3], SplitMode::Reduced).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(u.shape(), &[2, 2, 3]);
        assert_eq!(v.shape(), &[3, 2, 2]);
    }

    #[test]
    fn svd_rank_one() {
        let x = DenseTensor::vector(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
        let y = DenseTensor::vector(vec![C64::new(1.0, 0.0), ZERO, ZERO]).unwrap();
        let a = DenseTensor::outer(&x, &y);
        let (_, s, _) = tensor_svd(&a, &[0], &[1], SplitMode::Reduced).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn svd_norm_identity_and_reconstruction() {
        let a = DenseTensor::random(&[3, 5], 17).unwrap();
        let (u, s, v) = tensor_svd(&a, &[0], &[1], SplitMode::Reduced).unwrap();
        let sq: f64 = s.iter().map(|x| x * x).sum();
        assert!((sq - a.norm().powi(2)).abs() < 1e-12 * sq);
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        let us = scale_last_leg(u, &s);
        let back = DenseTensor::contract(&us, &v, &[1], &[0]).unwrap();
        assert!(back.rel_diff(&a) < 1e-12);
    }

    #[test]
    fn truncation_policies() {
        let s = [1.0, 0.1, 0.05, 0.0];
        let p = SvdParameters::default().with_total_tol(1e-2);
        assert_eq!(p.kept_count(&s), (3, false));
        let p = p.with_rel_tol(0.1);
        assert_eq!(p.kept_count(&s), (2, false));
        let p = SvdParameters::default().with_max_bond_dim(1);
        assert_eq!(p.kept_count(&s), (1, false));
        let p = SvdParameters::default().with_total_tol(10.0);
        assert_eq!(p.kept_count(&s), (1, true));
    }

    #[test]
    fn truncated_svd_error_matches_discarded_weight() {
        let a = DenseTensor::random(&[4, 3, 5], 5).unwrap();
        let p = SvdParameters::default().with_max_bond_dim(2);
        let t = truncated_svd(&a, &[0, 1], &[2], &p).unwrap();
        assert_eq!(t.s.len(), 2);
        let us = scale_last_leg(t.u.clone(), &t.s);
        let back = DenseTensor::contract(&us, &t.v, &[2], &[0]).unwrap();
        let err = back.sub(&a).unwrap().norm();
        assert!((err - t.truncation_error()).abs() < 1e-12);
    }

    #[test]
    fn renorm_preserves_norm() {
        let a = DenseTensor::random(&[4, 4], 8).unwrap();
        let p = SvdParameters::default()
            .with_max_bond_dim(2)
            .with_renorm(true);
        let t = truncated_svd(&a, &[0], &[1], &p).unwrap();
        let kept: f64 = t.s.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((kept - a.norm()).abs() < 1e-12);
    }

    #[test]
    fn contracted_splitting_modes() {
        let a = DenseTensor::random(&[3, 4, 2], 21).unwrap();
        let p = SvdParameters::default();
        for mode in [ContractionMode::IntoU, ContractionMode::IntoV] {
            let (x, y) = contr_truncated_svd_splitting(&a, &[0, 2], &[1], &p, mode).unwrap();
            let back = DenseTensor::contract(&x, &y, &[2], &[0])
                .unwrap()
                .transpose(&[0, 2, 1])
                .unwrap();
            assert!(back.rel_diff(&a) < 1e-12);
        }

        let p = SvdParameters::default().with_max_bond_dim(2);
        let t = truncated_svd(&a, &[0, 2], &[1], &p).unwrap();
        let reference = DenseTensor::contract(&scale_last_leg(t.u, &t.s), &t.v, &[2], &[0]).unwrap();
        let (x, y) =
            contr_truncated_svd_splitting(&a, &[0, 2], &[1], &p, ContractionMode::IntoU).unwrap();
        let back = DenseTensor::contract(&x, &y, &[2], &[0]).unwrap();
        assert!(back.rel_diff(&reference) < 1e-12);

        // rank one: the norm ends up in V
        let x = DenseTensor::random(&[3], 1).unwrap();
        let y = DenseTensor::random(&[2], 2).unwrap();
        let a = DenseTensor::outer(&x, &y);
        let (u, v) = contr_truncated_svd_splitting(
            &a,
            &[0],
            &[1],
            &SvdParameters::default().with_rel_tol(1e-12),
            ContractionMode::IntoV,
        )
        .unwrap();
        assert_eq!(u.dim(1), 1);
        assert!((u.norm() - 1.0).abs() < 1e-12);
        assert!((v.norm() - a.norm()).abs() < 1e-12);
    }

    #[test]
    fn diag_tensor_shape() {
        let d = diag_tensor(&[2.0, 1.0]);
        assert_eq!(d.shape(), &[2, 2]);
        assert_eq!(d.get(&[1, 1]), C64::new(1.0, 0.0));
    }
}
