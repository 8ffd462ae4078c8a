//! Symbolic operators: per-site tensor products, sums of them, and their
//! dense realisations.

use indexmap::IndexMap;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, TtnError};
use crate::linalg::expm;
use crate::tensor::{DenseTensor, C64, ONE, ZERO};
use crate::tree::{NodeId, TreeTopology};

/// Physical dimension per site.
pub type SiteDims = IndexMap<NodeId, usize>;

/// Default cap on the total Hilbert-space dimension of dense realisations.
pub const DEFAULT_DENSE_CAP: usize = 1 << 14;

/// Cap on the total dimension of a local exponential.
pub const LOCAL_EXP_CAP: usize = 1 << 10;

#[derive(Clone, Debug, PartialEq)]
pub enum LocalOperator {
    Symbol(String),
    Matrix(DenseTensor),
}

impl LocalOperator {
    pub fn symbol(s: impl Into<String>) -> Self {
        Self::Symbol(s.into())
    }
}

impl From<&str> for LocalOperator {
    fn from(s: &str) -> Self {
        Self::Symbol(s.to_owned())
    }
}

impl From<DenseTensor> for LocalOperator {
    fn from(m: DenseTensor) -> Self {
        Self::Matrix(m)
    }
}

/// Name of the identity symbol on a `d`-dimensional site.
pub fn identity_symbol(d: usize) -> String {
    format!("I{d}")
}

/// Symbol -> matrix dictionary. Symbols of the form `I<d>` resolve to the
/// `d x d` identity even when not listed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SymbolTable {
    map: IndexMap<String, DenseTensor>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, m: DenseTensor) -> Result<()> {
        let name = name.into();
        if m.degree() != 2 || m.dim(0) != m.dim(1) {
            return Err(TtnError::Operator(format!(
                "symbol `{name}` must be a square matrix, found shape {:?}",
                m.shape()
            )));
        }
        self.map.insert(name, m);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<DenseTensor> {
        if let Some(m) = self.map.get(name) {
            return Ok(m.clone());
        }
        if let Some(d) = name.strip_prefix('I').and_then(|r| r.parse::<usize>().ok()) {
            if d > 0 {
                return Ok(DenseTensor::identity(d));
            }
        }
        Err(TtnError::UnknownSymbol(name.to_owned()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &DenseTensor)> {
        self.map.iter()
    }

    pub fn resolve(&self, op: &LocalOperator) -> Result<DenseTensor> {
        match op {
            LocalOperator::Symbol(s) => self.get(s),
            LocalOperator::Matrix(m) => {
                if m.degree() != 2 || m.dim(0) != m.dim(1) {
                    return Err(TtnError::Operator(format!(
                        "operator factor must be square, found shape {:?}",
                        m.shape()
                    )));
                }
                Ok(m.clone())
            }
        }
    }

    /// Merges another table into this one; entries of `other` win.
    pub fn extend(&mut self, other: &SymbolTable) {
        for (k, v) in &other.map {
            self.map.insert(k.clone(), v.clone());
        }
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn pauli_x() -> DenseTensor {
    DenseTensor::new(vec![2, 2], vec![ZERO, ONE, ONE, ZERO]).expect("2x2")
}

pub fn pauli_y() -> DenseTensor {
    DenseTensor::new(vec![2, 2], vec![ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]).expect("2x2")
}

pub fn pauli_z() -> DenseTensor {
    DenseTensor::new(vec![2, 2], vec![ONE, ZERO, ZERO, c(-1.0, 0.0)]).expect("2x2")
}

/// `X`, `Y`, `Z` and `I2`.
pub fn pauli_library() -> SymbolTable {
    let mut t = SymbolTable::new();
    t.insert("X", pauli_x()).expect("square");
    t.insert("Y", pauli_y()).expect("square");
    t.insert("Z", pauli_z()).expect("square");
    t.insert("I2", DenseTensor::identity(2)).expect("square");
    t
}

/// A product of single-site operators; absent sites act as the identity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorProduct {
    factors: IndexMap<NodeId, LocalOperator>,
}

impl TensorProduct {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_symbols<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut tp = Self::new();
        for (n, s) in pairs {
            tp.insert(n, LocalOperator::symbol(s));
        }
        tp
    }

    pub fn with(mut self, node: impl Into<NodeId>, op: impl Into<LocalOperator>) -> Self {
        self.insert(node, op);
        self
    }

    pub fn insert(&mut self, node: impl Into<NodeId>, op: impl Into<LocalOperator>) {
        self.factors.insert(node.into(), op.into());
    }

    pub fn get(&self, node: &NodeId) -> Option<&LocalOperator> {
        self.factors.get(node)
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &LocalOperator)> {
        self.factors.iter()
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeId> {
        self.factors.keys()
    }

    /// Sites whose factor is not an identity.
    pub fn support(&self, symbols: &SymbolTable) -> Result<Vec<NodeId>> {
        let mut out = Vec::new();
        for (n, op) in &self.factors {
            if !is_identity(op, symbols)? {
                out.push(n.clone());
            }
        }
        Ok(out)
    }

    /// Resolved factor matrices in insertion order.
    pub fn matrices(&self, symbols: &SymbolTable) -> Result<Vec<(NodeId, DenseTensor)>> {
        self.factors
            .iter()
            .map(|(n, op)| Ok((n.clone(), symbols.resolve(op)?)))
            .collect()
    }
}

fn is_identity(op: &LocalOperator, symbols: &SymbolTable) -> Result<bool> {
    let m = symbols.resolve(op)?;
    Ok(m.max_abs_diff(&DenseTensor::identity(m.dim(0))) == 0.0)
}

/// Adds explicit identity factors (as `I<d>` symbols) on every tree node
/// without a factor.
pub fn pad_with_identities(tp: &TensorProduct, tree: &TreeTopology, dims: &SiteDims) -> Result<TensorProduct> {
    let mut out = TensorProduct::new();
    for n in tree.nodes() {
        match tp.get(n) {
            Some(op) => out.insert(n.clone(), op.clone()),
            None => {
                let d = dims.get(n).ok_or_else(|| {
                    TtnError::Operator(format!("no physical dimension given for `{n}`"))
                })?;
                out.insert(n.clone(), LocalOperator::Symbol(identity_symbol(*d)));
            }
        }
    }
    for n in tp.nodes() {
        if !tree.contains(n) {
            return Err(TtnError::UnknownNode(n.clone()));
        }
    }
    Ok(out)
}

fn total_dim(site_order: &[NodeId], dims: &SiteDims, cap: usize) -> Result<usize> {
    let mut n = 1usize;
    for s in site_order {
        let d = *dims
            .get(s)
            .ok_or_else(|| TtnError::Operator(format!("no physical dimension given for `{s}`")))?;
        n = n.saturating_mul(d);
    }
    if n > cap {
        return Err(TtnError::CapExceeded { size: n, cap });
    }
    Ok(n)
}

fn check_factors(tp: &TensorProduct, site_order: &[NodeId], dims: &SiteDims, symbols: &SymbolTable) -> Result<()> {
    for (n, op) in tp.iter() {
        if !site_order.contains(n) {
            return Err(TtnError::UnknownNode(n.clone()));
        }
        let m = symbols.resolve(op)?;
        if m.dim(0) != dims[n] {
            return Err(TtnError::Operator(format!(
                "factor on `{n}` has dimension {}, the site has {}",
                m.dim(0),
                dims[n]
            )));
        }
    }
    Ok(())
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// Dense matrix of a tensor product: Kronecker product over `site_order`
/// with the first site as the most significant index.
pub fn tensor_product_to_dense(
    tp: &TensorProduct,
    site_order: &[NodeId],
    dims: &SiteDims,
    symbols: &SymbolTable,
    cap: usize,
) -> Result<DMatrix<C64>> {
    total_dim(site_order, dims, cap)?;
    check_factors(tp, site_order, dims, symbols)?;
    let mut out = DMatrix::from_element(1, 1, ONE);
    for s in site_order {
        let m = match tp.get(s) {
            Some(op) => symbols.resolve(op)?.as_matrix()?,
            None => DMatrix::identity(dims[s], dims[s]),
        };
        out = kron(&out, &m);
    }
    Ok(out)
}

/// Applies a tensor product to a state vector laid out over `site_order`.
pub fn apply_tensor_product(
    tp: &TensorProduct,
    v: &[C64],
    site_order: &[NodeId],
    dims: &SiteDims,
    symbols: &SymbolTable,
) -> Result<Vec<C64>> {
    check_factors(tp, site_order, dims, symbols)?;
    let n: usize = site_order.iter().map(|s| dims[s]).product();
    if v.len() != n {
        return Err(TtnError::Incompatible(format!(
            "vector of length {} on a space of dimension {n}",
            v.len()
        )));
    }
    let mut cur = v.to_vec();
    let mut left = 1usize;
    for s in site_order {
        let d = dims[s];
        let right = n / (left * d);
        if let Some(op) = tp.get(s) {
            let m = symbols.resolve(op)?;
            let md = m.data();
            let mut next = vec![ZERO; n];
            for l in 0..left {
                for i in 0..d {
                    for j in 0..d {
                        let a = md[i * d + j];
                        if a == ZERO {
                            continue;
                        }
                        let dst = (l * d + i) * right;
                        let src = (l * d + j) * right;
                        for r in 0..right {
                            next[dst + r] += a * cur[src + r];
                        }
                    }
                }
            }
            cur = next;
        }
        left *= d;
    }
    Ok(cur)
}

/// A sum of weighted tensor products together with the symbols they use.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Hamiltonian {
    pub terms: Vec<(C64, TensorProduct)>,
    pub symbols: SymbolTable,
}

impl Hamiltonian {
    pub fn new(symbols: SymbolTable) -> Self {
        Self {
            terms: Vec::new(),
            symbols,
        }
    }

    pub fn add_term(&mut self, coeff: C64, tp: TensorProduct) {
        self.terms.push((coeff, tp));
    }

    pub fn with_term(mut self, coeff: C64, tp: TensorProduct) -> Self {
        self.add_term(coeff, tp);
        self
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Checks that every symbol resolves and every factor sits on a known site
    /// with the right dimension.
    pub fn validate(&self, dims: &SiteDims) -> Result<()> {
        let order: Vec<NodeId> = dims.keys().cloned().collect();
        for (_, tp) in &self.terms {
            check_factors(tp, &order, dims, &self.symbols)?;
        }
        Ok(())
    }

    /// Every term padded with identities on all tree nodes.
    pub fn padded(&self, tree: &TreeTopology, dims: &SiteDims) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|(c, tp)| Ok((*c, pad_with_identities(tp, tree, dims)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            terms,
            symbols: self.symbols.clone(),
        })
    }

    /// Coefficient-weighted sum of the dense term matrices.
    pub fn to_dense(&self, site_order: &[NodeId], dims: &SiteDims, cap: usize) -> Result<DMatrix<C64>> {
        let n = total_dim(site_order, dims, cap)?;
        let mut out = DMatrix::from_element(n, n, ZERO);
        for (coeff, tp) in &self.terms {
            out += tensor_product_to_dense(tp, site_order, dims, &self.symbols, cap)? * *coeff;
        }
        Ok(out)
    }

    /// `H v` computed term by term without forming the matrix.
    pub fn apply(&self, v: &[C64], site_order: &[NodeId], dims: &SiteDims) -> Result<Vec<C64>> {
        let mut out = vec![ZERO; v.len()];
        for (coeff, tp) in &self.terms {
            let w = apply_tensor_product(tp, v, site_order, dims, &self.symbols)?;
            for (o, x) in out.iter_mut().zip(w) {
                *o += coeff * x;
            }
        }
        Ok(out)
    }
}

/// A dense gate acting on a few sites: legs are the outputs of `sites` in
/// order, then the inputs in the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalGate {
    pub sites: Vec<NodeId>,
    pub tensor: DenseTensor,
}

impl LocalGate {
    pub fn arity(&self) -> usize {
        self.sites.len()
    }

    /// The gate as a square matrix (outputs as rows).
    pub fn matrix(&self) -> Result<DMatrix<C64>> {
        let k = self.sites.len();
        let n: usize = self.tensor.shape()[..k].iter().product();
        Ok(DMatrix::from_row_slice(n, n, self.tensor.data()))
    }
}

/// `exp(factor * (kron of the factors of tp))` reshaped into a gate.
pub fn exp_local(tp: &TensorProduct, factor: C64, symbols: &SymbolTable) -> Result<LocalGate> {
    let mats = tp.matrices(symbols)?;
    if mats.is_empty() {
        return Err(TtnError::Operator("cannot exponentiate an empty product".into()));
    }
    let dims: Vec<usize> = mats.iter().map(|(_, m)| m.dim(0)).collect();
    let n: usize = dims.iter().product();
    if n > LOCAL_EXP_CAP {
        return Err(TtnError::CapExceeded {
            size: n,
            cap: LOCAL_EXP_CAP,
        });
    }
    let mut k = DMatrix::from_element(1, 1, ONE);
    for (_, m) in &mats {
        k = kron(&k, &m.as_matrix()?);
    }
    let u = expm(&(k * factor))?;
    let shape: Vec<usize> = dims.iter().chain(dims.iter()).copied().collect();
    let tensor = DenseTensor::from_matrix(&u).into_reshape(&shape)?;
    Ok(LocalGate {
        sites: mats.into_iter().map(|(n, _)| n).collect(),
        tensor,
    })
}

/// Random Hamiltonian with `n_terms` terms; every term assigns one of
/// `X`, `Y`, `Z`, `I2` to each site and carries a standard-normal real
/// coefficient.
pub fn random_pauli_hamiltonian(sites: &[NodeId], n_terms: usize, seed: u64) -> Hamiltonian {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_pauli_hamiltonian_with(sites, n_terms, &mut rng)
}

pub fn random_pauli_hamiltonian_with<R: Rng + ?Sized>(
    sites: &[NodeId],
    n_terms: usize,
    rng: &mut R,
) -> Hamiltonian {
    const SYMBOLS: [&str; 4] = ["X", "Y", "Z", "I2"];
    let mut h = Hamiltonian::new(pauli_library());
    for _ in 0..n_terms {
        let mut tp = TensorProduct::new();
        for s in sites {
            let k = rng.random_range(0..SYMBOLS.len());
            tp.insert(s.clone(), LocalOperator::symbol(SYMBOLS[k]));
        }
        let coeff: f64 = StandardNormal.sample(rng);
        h.add_term(C64::new(coeff, 0.0), tp);
    }
    h
}
