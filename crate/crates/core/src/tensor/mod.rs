//! Dense complex tensors stored in row-major order.
//!
//! A [`DenseTensor`] is the numeric payload of every node in a tree tensor
//! network. Legs are addressed by position; the leg order of a result is always
//! documented by the operation that produced it.

mod io;
pub(crate) mod split;

pub use io::{read_tensor, write_tensor};
pub use split::{
    contr_truncated_svd_splitting, diag_tensor, tensor_qr, tensor_svd, truncated_svd, ContractionMode,
    SplitMode, SvdParameters, TruncatedSvd, REDUCED_ZERO_THRESHOLD,
};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, TtnError};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        check_shape(&shape)?;
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TtnError::EntryCount {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![ZERO; n],
        }
    }

    pub fn scalar(value: C64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// The `d x d` identity matrix.
    pub fn identity(d: usize) -> Self {
        let mut t = Self::zeros(&[d, d]);
        for i in 0..d {
            t.data[i * d + i] = ONE;
        }
        t
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> C64) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for k in 0..t.data.len() {
            t.data[k] = f(&idx);
            increment(&mut idx, shape);
        }
        t
    }

    /// Complex-normal random tensor: entries `(a + ib)/sqrt(2)` with `a`, `b`
    /// independent standard normals. Deterministic for a fixed seed.
    pub fn random(shape: &[usize], seed: u64) -> Result<Self> {
        check_shape(shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self::random_with(shape, &mut rng))
    }

    pub fn random_with<R: rand::Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let data = (0..n)
            .map(|_| {
                let a: f64 = StandardNormal.sample(rng);
                let b: f64 = StandardNormal.sample(rng);
                C64::new(a * s, b * s)
            })
            .collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    /// A column vector as a degree-1 tensor.
    pub fn vector(data: Vec<C64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn degree(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn dim(&self, leg: usize) -> usize {
        self.shape[leg]
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn get(&self, index: &[usize]) -> C64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: C64) {
        let k = self.offset(index);
        self.data[k] = value;
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index degree mismatch");
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                assert!(i < d, "index {i} out of range for dimension {d}");
                acc * d + i
            })
    }

    /// Value of a degree-0 tensor (or the single entry of any size-1 tensor).
    pub fn scalar_value(&self) -> C64 {
        assert_eq!(self.data.len(), 1, "tensor is not a scalar");
        self.data[0]
    }

    /// Reorders legs: leg `k` of the result is leg `perm[k]` of `self`.
    pub fn transpose(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.degree())?;
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(self.clone());
        }
        let old_strides = self.strides();
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src_strides: Vec<usize> = perm.iter().map(|&p| old_strides[p]).collect();
        let n = self.data.len();
        let mut data = Vec::with_capacity(n);
        let deg = new_shape.len();
        let mut idx = vec![0usize; deg];
        let mut src = 0usize;
        for _ in 0..n {
            data.push(self.data[src]);
            // odometer increment with running source offset
            let mut k = deg;
            while k > 0 {
                k -= 1;
                idx[k] += 1;
                src += src_strides[k];
                if idx[k] < new_shape[k] {
                    break;
                }
                src -= src_strides[k] * new_shape[k];
                idx[k] = 0;
            }
        }
        Ok(Self {
            shape: new_shape,
            data,
        })
    }

    pub fn reshape(&self, new_shape: &[usize]) -> Result<Self> {
        self.clone().into_reshape(new_shape)
    }

    pub fn into_reshape(self, new_shape: &[usize]) -> Result<Self> {
        let n: usize = new_shape.iter().product();
        if n != self.data.len() || new_shape.contains(&0) {
            return Err(TtnError::InvalidReshape {
                from: self.shape,
                to: new_shape.to_vec(),
            });
        }
        Ok(Self {
            shape: new_shape.to_vec(),
            data: self.data,
        })
    }

    pub fn conj(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_in_place(&mut self, factor: C64) {
        self.data.iter_mut().for_each(|z| *z *= factor);
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(TtnError::Incompatible(format!(
                "shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `sum conj(self_i) * other_i` over the flattened entries.
    pub fn inner(&self, other: &Self) -> C64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.shape != other.shape {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Relative Frobenius distance `|self - other| / max(|other|, tiny)`.
    pub fn rel_diff(&self, other: &Self) -> f64 {
        if self.shape != other.shape {
            return f64::INFINITY;
        }
        let diff: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        diff / other.norm().max(f64::MIN_POSITIVE)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Contracts `legs_a` of `a` with `legs_b` of `b` pairwise.
    ///
    /// The result carries the uncontracted legs of `a` in order followed by
    /// the uncontracted legs of `b` in order.
    pub fn contract(a: &Self, b: &Self, legs_a: &[usize], legs_b: &[usize]) -> Result<Self> {
        if legs_a.len() != legs_b.len() {
            return Err(TtnError::InvalidPartition(format!(
                "contracting {} legs against {} legs",
                legs_a.len(),
                legs_b.len()
            )));
        }
        for (&la, &lb) in legs_a.iter().zip(legs_b) {
            if la >= a.degree() {
                return Err(TtnError::LegOutOfRange {
                    leg: la,
                    degree: a.degree(),
                });
            }
            if lb >= b.degree() {
                return Err(TtnError::LegOutOfRange {
                    leg: lb,
                    degree: b.degree(),
                });
            }
            if a.shape[la] != b.shape[lb] {
                return Err(TtnError::DimensionMismatch {
                    leg_a: la,
                    dim_a: a.shape[la],
                    leg_b: lb,
                    dim_b: b.shape[lb],
                });
            }
        }
        check_distinct(legs_a, a.degree())?;
        check_distinct(legs_b, b.degree())?;

        let free_a: Vec<usize> = (0..a.degree()).filter(|l| !legs_a.contains(l)).collect();
        let free_b: Vec<usize> = (0..b.degree()).filter(|l| !legs_b.contains(l)).collect();

        let perm_a: Vec<usize> = free_a.iter().chain(legs_a).copied().collect();
        let perm_b: Vec<usize> = legs_b.iter().chain(&free_b).copied().collect();
        let at = a.transpose(&perm_a)?;
        let bt = b.transpose(&perm_b)?;

        let m: usize = free_a.iter().map(|&l| a.shape[l]).product();
        let k: usize = legs_a.iter().map(|&l| a.shape[l]).product();
        let n: usize = free_b.iter().map(|&l| b.shape[l]).product();

        let data = matmul(&at.data, &bt.data, m, k, n);
        let shape: Vec<usize> = free_a
            .iter()
            .map(|&l| a.shape[l])
            .chain(free_b.iter().map(|&l| b.shape[l]))
            .collect();
        Ok(Self { shape, data })
    }

    /// Outer (tensor) product: legs of `a` followed by legs of `b`.
    pub fn outer(a: &Self, b: &Self) -> Self {
        let mut data = Vec::with_capacity(a.len() * b.len());
        for &x in &a.data {
            for &y in &b.data {
                data.push(x * y);
            }
        }
        Self {
            shape: a.shape.iter().chain(&b.shape).copied().collect(),
            data,
        }
    }

    /// Matricises the tensor: rows combine `row_legs`, columns combine
    /// `col_legs`, both in the given order.
    pub fn to_matrix(&self, row_legs: &[usize], col_legs: &[usize]) -> Result<DMatrix<C64>> {
        check_partition(row_legs, col_legs, self.degree())?;
        let perm: Vec<usize> = row_legs.iter().chain(col_legs).copied().collect();
        let t = self.transpose(&perm)?;
        let rows: usize = row_legs.iter().map(|&l| self.shape[l]).product();
        let cols: usize = col_legs.iter().map(|&l| self.shape[l]).product();
        Ok(DMatrix::from_row_slice(rows, cols, &t.data))
    }

    /// Square matrix view of a degree-2 tensor.
    pub fn as_matrix(&self) -> Result<DMatrix<C64>> {
        if self.degree() != 2 {
            return Err(TtnError::Operator(format!(
                "expected a matrix, found shape {:?}",
                self.shape
            )));
        }
        Ok(DMatrix::from_row_slice(
            self.shape[0],
            self.shape[1],
            &self.data,
        ))
    }

    pub fn from_matrix(m: &DMatrix<C64>) -> Self {
        let (r, c) = m.shape();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                data.push(m[(i, j)]);
            }
        }
        Self {
            shape: vec![r, c],
            data,
        }
    }
}

/// Row-major `m x k` times `k x n`.
pub(crate) fn matmul(a: &[C64], b: &[C64], m: usize, k: usize, n: usize) -> Vec<C64> {
    let mut c = vec![ZERO; m * n];
    if k == 0 {
        return c;
    }
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (l, &av) in arow.iter().enumerate() {
            if av == ZERO {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
    c
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.contains(&0) {
        return Err(TtnError::DegenerateShape(shape.to_vec()));
    }
    Ok(())
}

fn check_permutation(perm: &[usize], degree: usize) -> Result<()> {
    let mut seen = vec![false; degree];
    let ok = perm.len() == degree
        && perm.iter().all(|&p| {
            if p >= degree || seen[p] {
                false
            } else {
                seen[p] = true;
                true
            }
        });
    if ok {
        Ok(())
    } else {
        Err(TtnError::InvalidPermutation {
            perm: perm.to_vec(),
            degree,
        })
    }
}

fn check_distinct(legs: &[usize], degree: usize) -> Result<()> {
    let mut seen = vec![false; degree];
    for &l in legs {
        if seen[l] {
            return Err(TtnError::InvalidPartition(format!("leg {l} listed twice")));
        }
        seen[l] = true;
    }
    Ok(())
}

pub(crate) fn check_partition(first: &[usize], second: &[usize], degree: usize) -> Result<()> {
    let mut seen = vec![false; degree];
    for &l in first.iter().chain(second) {
        if l >= degree {
            return Err(TtnError::InvalidPartition(format!(
                "leg {l} out of range for degree {degree}"
            )));
        }
        if seen[l] {
            return Err(TtnError::InvalidPartition(format!("leg {l} claimed twice")));
        }
        seen[l] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(TtnError::InvalidPartition(format!(
            "leg {missing} is not claimed"
        )));
    }
    Ok(())
}
