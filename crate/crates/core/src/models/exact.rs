//! State-vector reference dynamics and comparison helpers.

use nalgebra::DVector;

use crate::error::{Result, TtnError};
use crate::linalg::{expm_krylov, hermitian_eigh, hermitian_evolve, KrylovOptions};
use crate::operators::{apply_tensor_product, Hamiltonian, SiteDims, SymbolTable, TensorProduct, DEFAULT_DENSE_CAP};
use crate::tensor::C64;
use crate::tree::NodeId;

/// Largest Hilbert dimension evolved through a full eigendecomposition;
/// above it every step is a Krylov exponential of the term-wise action.
pub const EXACT_EIGH_CAP: usize = 1 << 10;

/// `exp(-i H t_k) psi0` for `t_k = k dt`, `k = 0..=floor(T / dt)`.
pub fn exact_evolution(
    h: &Hamiltonian,
    site_order: &[NodeId],
    dims: &SiteDims,
    psi0: &DVector<C64>,
    dt: f64,
    final_time: f64,
) -> Result<Vec<DVector<C64>>> {
    if !(dt.is_finite() && dt > 0.0 && final_time.is_finite() && final_time >= 0.0) {
        return Err(TtnError::Incompatible(format!(
            "invalid time grid: dt = {dt}, T = {final_time}"
        )));
    }
    let n: usize = site_order
        .iter()
        .map(|s| dims.get(s).copied().ok_or_else(|| TtnError::UnknownNode(s.clone())))
        .product::<Result<usize>>()?;
    if n > DEFAULT_DENSE_CAP {
        return Err(TtnError::CapExceeded {
            size: n,
            cap: DEFAULT_DENSE_CAP,
        });
    }
    if psi0.len() != n {
        return Err(TtnError::Incompatible(format!(
            "initial vector has length {} but the system has dimension {n}",
            psi0.len()
        )));
    }
    h.validate(dims)?;
    let steps = (final_time / dt + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(psi0.clone());
    if n <= EXACT_EIGH_CAP {
        let m = h.to_dense(site_order, dims, DEFAULT_DENSE_CAP)?;
        let (vals, vecs) = hermitian_eigh(&m)?;
        for k in 1..=steps {
            out.push(hermitian_evolve(&vals, &vecs, psi0, k as f64 * dt));
        }
    } else {
        let opts = KrylovOptions {
            tol: 1e-12,
            ..KrylovOptions::default()
        };
        let mut cur = psi0.as_slice().to_vec();
        for _ in 0..steps {
            cur = expm_krylov(|x| h.apply(x, site_order, dims), &cur, C64::new(0.0, -dt), opts)?;
            out.push(DVector::from_vec(cur.clone()));
        }
    }
    Ok(out)
}

/// `<psi|tp|psi>` along a series of dense states.
pub fn dense_expectation_series(
    states: &[DVector<C64>],
    tp: &TensorProduct,
    site_order: &[NodeId],
    dims: &SiteDims,
    symbols: &SymbolTable,
) -> Result<Vec<C64>> {
    states
        .iter()
        .map(|v| {
            let w = apply_tensor_product(tp, v.as_slice(), site_order, dims, symbols)?;
            Ok(v.iter().zip(&w).map(|(a, b)| a.conj() * b).sum())
        })
        .collect()
}

/// Pointwise `|a_k - b_k|` of two series on the same grid.
pub fn error_series(reference: &[C64], approx: &[C64]) -> Result<Vec<f64>> {
    if reference.len() != approx.len() {
        return Err(TtnError::Incompatible(format!(
            "series lengths differ: {} vs {}",
            reference.len(),
            approx.len()
        )));
    }
    Ok(reference.iter().zip(approx).map(|(a, b)| (a - b).norm()).collect())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(TtnError::Incompatible("a slope needs at least two matching points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(TtnError::NonFinite("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(TtnError::Incompatible("all abscissae coincide".into()));
    }
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{pauli_library, random_pauli_hamiltonian};
    use crate::tensor::{ONE, ZERO};
    use std::f64::consts::PI;

    fn qubits(names: &[&str]) -> (Vec<NodeId>, SiteDims) {
        let order: Vec<NodeId> = names.iter().map(|s| NodeId::new(*s)).collect();
        let dims = order.iter().map(|n| (n.clone(), 2)).collect();
        (order, dims)
    }

    #[test]
    fn zero_hamiltonian_is_constant() {
        let (order, dims) = qubits(&["a", "b"]);
        let h = Hamiltonian::new(pauli_library());
        let v = DVector::from_vec(vec![ONE, ZERO, ZERO, ZERO]);
        let s = exact_evolution(&h, &order, &dims, &v, 0.1, 1.0).unwrap();
        assert_eq!(s.len(), 11);
        assert!(s.iter().all(|w| (w - &v).norm() < 1e-15));
    }

    #[test]
    fn rabi_flip() {
        let (order, dims) = qubits(&["a"]);
        let h = Hamiltonian::new(pauli_library()).with_term(ONE, TensorProduct::from_symbols([("a", "X")]));
        let v = DVector::from_vec(vec![ONE, ZERO]);
        let s = exact_evolution(&h, &order, &dims, &v, PI / 2.0 / 50.0, PI / 2.0).unwrap();
        let last = s.last().unwrap();
        assert!((last[1] - C64::new(0.0, -1.0)).norm() < 1e-12);
        assert!(last[0].norm() < 1e-12);
    }

    #[test]
    fn krylov_and_eigh_paths_agree_and_are_unitary() {
        let names: Vec<String> = (0..11).map(|i| format!("q{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let (order, dims) = qubits(&refs);
        let h = random_pauli_hamiltonian(&order, 12, 5);
        let n = 1 << 11;
        let mut v = DVector::from_fn(n, |i, _| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()));
        v /= C64::from(v.norm());
        let krylov = exact_evolution(&h, &order, &dims, &v, 0.05, 0.2).unwrap();
        let m = h.to_dense(&order, &dims, DEFAULT_DENSE_CAP).unwrap();
        let (vals, vecs) = hermitian_eigh(&m).unwrap();
        for (k, w) in krylov.iter().enumerate() {
            assert!((w.norm() - 1.0).abs() < 1e-12);
            let r = hermitian_evolve(&vals, &vecs, &v, k as f64 * 0.05);
            assert!((w - r).norm() < 1e-9, "step {k}");
        }
    }

    #[test]
    fn error_series_properties() {
        let a = vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.0)];
        assert_eq!(error_series(&a, &a).unwrap(), vec![0.0, 0.0]);
        let b: Vec<C64> = a.iter().map(|z| z.conj()).collect();
        assert_eq!(error_series(&a, &b).unwrap(), vec![4.0, 0.0]);
        assert!(error_series(&a, &b[..1]).is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [0.1, 0.05, 0.02];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
    }
}
