//! JSON run configuration and its translation into engine inputs.

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use treetn_core::evolution::{Method, Observable, TdvpOrder, TimeEvoConfig, TrotterSplitting};
use treetn_core::models::{
    build_q_tree, neel_like_initial_state, tfi_hamiltonian, tfi_strang_splitting, total_magnetisation, TfiSpec,
};
use treetn_core::operators::{pauli_library, random_pauli_hamiltonian, Hamiltonian, SiteDims, SymbolTable, TensorProduct};
use treetn_core::tensor::{SvdParameters, C64};
use treetn_core::{DenseTensor, NodeId, TreeTopology, Ttno, Ttns};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialStateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodSpec>,
    /// Measured quantities by column name. A TFI model with no entry here
    /// measures the total magnetisation as `M`.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub operators: IndexMap<String, OperatorSpec>,
    /// File stem for the outputs; each command has its own default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `build-ttno`: compare the compiled operator with the dense sum.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dense_check: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trotter_scan: Option<TrotterScanSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Tfi {
        #[serde(rename = "L")]
        l: usize,
        #[serde(rename = "J")]
        j: f64,
        g: f64,
        #[serde(default)]
        four_site: bool,
    },
}

/// An explicit tree with a Hamiltonian given term by term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub tree: TreeSpec,
    /// Extra local operators as rows of `[re, im]` pairs. Pauli matrices
    /// (`X`, `Y`, `Z`) and identities (`I2`, ...) are always available.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub symbols: IndexMap<String, Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<TermSpec>,
    /// Adds this many random Pauli strings drawn with the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_terms: Option<usize>,
}

/// A node and its subtree; children are listed in leg order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSpec {
    pub id: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeSpec>,
}

fn default_dim() -> usize {
    2
}

impl TreeSpec {
    fn visit<'a>(&'a self, parent: Option<&'a str>, out: &mut Vec<(Option<&'a str>, &'a TreeSpec)>) {
        out.push((parent, self));
        for c in &self.children {
            c.visit(Some(&self.id), out);
        }
    }

    /// Nodes in pre-order together with their parent ids.
    fn flatten(&self) -> Vec<(Option<&str>, &TreeSpec)> {
        let mut out = Vec::new();
        self.visit(None, &mut out);
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    /// `[re, im]`.
    pub coeff: [f64; 2],
    /// Site id to symbol; an empty map is the identity.
    #[serde(default)]
    pub factors: IndexMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialStateSpec {
    /// Root in `|0>`, flipped at every step away from it (TFI model only).
    Neel,
    /// Product state; unlisted sites are in level 0.
    Product(IndexMap<String, LocalState>),
    /// Normalised random state with uniform bond dimension, drawn with the
    /// run seed.
    Random { bond_dim: usize },
}

/// A basis level written as a decimal string, or explicit amplitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LocalState {
    Level(String),
    Amplitudes(Vec<[f64; 2]>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum MethodName {
    #[serde(rename = "tebd")]
    #[value(name = "tebd")]
    Tebd,
    #[serde(rename = "tdvp1")]
    #[value(name = "tdvp1")]
    Tdvp1,
    #[serde(rename = "tdvp1-2nd")]
    #[value(name = "tdvp1-2nd")]
    Tdvp1Second,
    #[serde(rename = "tdvp2")]
    #[value(name = "tdvp2")]
    Tdvp2,
}

impl MethodName {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Tebd => "tebd",
            MethodName::Tdvp1 => "tdvp1",
            MethodName::Tdvp1Second => "tdvp1-2nd",
            MethodName::Tdvp2 => "tdvp2",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<MethodName>,
    pub dt: f64,
    pub final_time: f64,
    /// Truncation cap for TEBD and two-site TDVP; padding target for
    /// one-site TDVP.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bond_dim: Option<usize>,
    #[serde(default)]
    pub rel_tol: f64,
    #[serde(default)]
    pub total_tol: f64,
    #[serde(default)]
    pub renorm: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    /// Tensor product of `Z` over all sites (TFI model only).
    Magnetisation,
    Product { factors: IndexMap<String, String> },
    /// The system Hamiltonian itself.
    Energy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrotterScanSpec {
    #[serde(default = "default_scan_dts")]
    pub dts: Vec<f64>,
    #[serde(default = "default_scan_time")]
    pub final_time: f64,
}

impl Default for TrotterScanSpec {
    fn default() -> Self {
        Self {
            dts: default_scan_dts(),
            final_time: default_scan_time(),
        }
    }
}

fn default_scan_dts() -> Vec<f64> {
    vec![0.1, 0.05, 0.02, 0.01, 0.005]
}

fn default_scan_time() -> f64 {
    1.0
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Schema-level checks that need no engine objects.
    pub fn validate(&self) -> CliResult<()> {
        if self.model.is_some() && self.system.is_some() {
            return config_err("give either `model` or `system`, not both");
        }
        if let Some(ModelSpec::Tfi { l, j, g, .. }) = &self.model {
            if *l == 0 {
                return config_err("model.L must be at least 1");
            }
            if !(j.is_finite() && g.is_finite()) {
                return config_err("model couplings must be finite");
            }
        }
        if let Some(sys) = &self.system {
            if sys.tree.flatten().iter().any(|(_, n)| n.dim == 0) {
                return config_err("physical dimensions must be positive");
            }
            if sys.terms.iter().any(|t| !(t.coeff[0].is_finite() && t.coeff[1].is_finite())) {
                return config_err("term coefficients must be finite");
            }
        }
        if let Some(m) = &self.method {
            if !(m.dt.is_finite() && m.dt > 0.0) {
                return config_err("method.dt must be positive");
            }
            if !(m.final_time.is_finite() && m.final_time >= 0.0) {
                return config_err("method.final_time must be non-negative");
            }
            if m.max_bond_dim == Some(0) {
                return config_err("method.max_bond_dim must be positive");
            }
            if !(m.rel_tol >= 0.0 && m.total_tol >= 0.0) {
                return config_err("tolerances must be non-negative");
            }
        }
        if let Some(InitialStateSpec::Random { bond_dim: 0 }) = &self.initial_state {
            return config_err("initial_state.bond_dim must be positive");
        }
        if let Some(s) = &self.trotter_scan {
            if s.dts.is_empty() || s.dts.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                return config_err("trotter_scan.dts must be a non-empty list of positive steps");
            }
            if !(s.final_time.is_finite() && s.final_time > 0.0) {
                return config_err("trotter_scan.final_time must be positive");
            }
        }
        Ok(())
    }

    pub fn seed(&self, flag: Option<u64>) -> u64 {
        flag.or(self.seed).unwrap_or(0)
    }

    fn tfi_spec(&self) -> Option<TfiSpec> {
        self.model.as_ref().map(|ModelSpec::Tfi { l, j, g, four_site }| {
            TfiSpec::new(*l, *j, *g).with_four_site(*four_site)
        })
    }

    /// Tree, dimensions and Hamiltonian of the configured system.
    pub fn build_system(&self, seed: u64) -> CliResult<System> {
        if let Some(spec) = self.tfi_spec() {
            let (tree, dims) = build_q_tree(spec.l)?;
            return Ok(System {
                hamiltonian: tfi_hamiltonian(&spec)?,
                tree,
                dims,
                tfi: Some(spec),
            });
        }
        let Some(sys) = &self.system else {
            return config_err("a `model` or `system` section is required");
        };
        let mut tree = TreeTopology::new();
        let nodes = sys.tree.flatten();
        for (parent, n) in &nodes {
            match parent {
                None => tree.add_root(n.id.as_str())?,
                Some(p) => tree.add_child(*p, n.id.as_str())?,
            }
        }
        let dims: SiteDims = nodes.iter().map(|(_, n)| (NodeId::new(n.id.as_str()), n.dim)).collect();
        let mut symbols = pauli_library();
        for (name, rows) in &sys.symbols {
            symbols.insert(name.as_str(), matrix_from_rows(name, rows)?)?;
        }
        let mut h = Hamiltonian::new(symbols);
        for t in &sys.terms {
            h.add_term(C64::new(t.coeff[0], t.coeff[1]), product(&t.factors));
        }
        if let Some(n) = sys.random_terms {
            let sites: Vec<NodeId> = tree.nodes().cloned().collect();
            h.terms.extend(random_pauli_hamiltonian(&sites, n, seed).terms);
        }
        h.validate(&dims)?;
        Ok(System {
            tree,
            dims,
            hamiltonian: h,
            tfi: None,
        })
    }
}

fn basis_vector(d: usize, k: usize) -> Vec<C64> {
    (0..d).map(|i| C64::from(if i == k { 1.0 } else { 0.0 })).collect()
}

fn product(factors: &IndexMap<String, String>) -> TensorProduct {
    factors.iter().fold(TensorProduct::new(), |tp, (k, o)| tp.with(k.as_str(), o.as_str()))
}

fn config_err<T>(msg: &str) -> CliResult<T> {
    Err(CliError::Config(msg.to_string()))
}

fn matrix_from_rows(name: &str, rows: &[Vec<[f64; 2]>]) -> CliResult<DenseTensor> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Config(format!("symbol `{name}` must be a non-empty square matrix")));
    }
    let data = rows.iter().flatten().map(|[re, im]| C64::new(*re, *im)).collect();
    Ok(DenseTensor::new(vec![n, n], data)?)
}

pub struct System {
    pub tree: TreeTopology,
    pub dims: SiteDims,
    pub hamiltonian: Hamiltonian,
    pub tfi: Option<TfiSpec>,
}

impl System {
    pub fn symbols(&self) -> &SymbolTable {
        &self.hamiltonian.symbols
    }

    pub fn ttno(&self) -> CliResult<Ttno> {
        Ok(Ttno::from_hamiltonian(&self.hamiltonian, &self.tree, &self.dims)?)
    }

    pub fn initial_state(&self, spec: Option<&InitialStateSpec>, seed: u64) -> CliResult<Ttns> {
        let default = if self.tfi.is_some() {
            InitialStateSpec::Neel
        } else {
            InitialStateSpec::Product(IndexMap::new())
        };
        match spec.unwrap_or(&default) {
            InitialStateSpec::Neel => match &self.tfi {
                Some(t) => Ok(neel_like_initial_state(t.l)?),
                None => config_err("the `neel` initial state needs the TFI model"),
            },
            InitialStateSpec::Product(sites) => {
                let mut locals: IndexMap<NodeId, Vec<C64>> = IndexMap::new();
                for id in self.tree.nodes() {
                    let d = self.dims[id];
                    let v = match sites.get(id.as_str()) {
                        None => basis_vector(d, 0),
                        Some(LocalState::Level(s)) => match s.parse::<usize>() {
                            Ok(k) if k < d => basis_vector(d, k),
                            _ => return Err(CliError::Config(format!("level `{s}` is invalid on `{id}` (dimension {d})"))),
                        },
                        Some(LocalState::Amplitudes(a)) if a.len() == d => {
                            a.iter().map(|[re, im]| C64::new(*re, *im)).collect()
                        }
                        Some(LocalState::Amplitudes(a)) => {
                            return Err(CliError::Config(format!(
                                "`{id}` has dimension {d} but {} amplitudes were given",
                                a.len()
                            )))
                        }
                    };
                    locals.insert(id.clone(), v);
                }
                if let Some(k) = sites.keys().find(|k| !self.tree.contains(&NodeId::new(k.as_str()))) {
                    return Err(CliError::Config(format!("initial_state names unknown site `{k}`")));
                }
                Ok(Ttns::product_state(&self.tree, &locals)?)
            }
            InitialStateSpec::Random { bond_dim } => {
                let mut psi = Ttns::random(&self.tree, &self.dims, *bond_dim, seed)?;
                psi.normalize()?;
                Ok(psi)
            }
        }
    }

    /// Named observables, with the TFI magnetisation as the default.
    pub fn observables(&self, specs: &IndexMap<String, OperatorSpec>) -> CliResult<IndexMap<String, Observable>> {
        let fallback: IndexMap<String, OperatorSpec> = match (&self.tfi, specs.is_empty()) {
            (Some(_), true) => [("M".to_string(), OperatorSpec::Magnetisation)].into_iter().collect(),
            _ => IndexMap::new(),
        };
        let specs = if specs.is_empty() { &fallback } else { specs };
        specs
            .iter()
            .map(|(name, s)| {
                let obs = match s {
                    OperatorSpec::Magnetisation => match &self.tfi {
                        Some(t) => Observable::Product(total_magnetisation(t.l)),
                        None => return config_err("`magnetisation` needs the TFI model"),
                    },
                    OperatorSpec::Product { factors } => Observable::Product(product(factors)),
                    OperatorSpec::Energy => Observable::Operator(self.ttno()?),
                };
                Ok((name.clone(), obs))
            })
            .collect()
    }

    pub fn method(&self, name: MethodName) -> CliResult<Method> {
        Ok(match name {
            MethodName::Tebd => Method::Tebd(self.splitting()?),
            MethodName::Tdvp1 => Method::Tdvp1 {
                hamiltonian: self.ttno()?,
                order: TdvpOrder::First,
            },
            MethodName::Tdvp1Second => Method::Tdvp1 {
                hamiltonian: self.ttno()?,
                order: TdvpOrder::Second,
            },
            MethodName::Tdvp2 => Method::Tdvp2 {
                hamiltonian: self.ttno()?,
            },
        })
    }

    /// Strang-ordered TFI program, or a first-order splitting term by term for
    /// explicit systems.
    fn splitting(&self) -> CliResult<TrotterSplitting> {
        match &self.tfi {
            Some(spec) => Ok(tfi_strang_splitting(spec)?),
            None => Ok(TrotterSplitting::first_order(&self.hamiltonian)),
        }
    }
}

/// Engine settings of the `method` section.
pub fn time_evo_config(m: &MethodSpec, name: MethodName, observables: IndexMap<String, Observable>, symbols: &SymbolTable) -> TimeEvoConfig {
    let mut cfg = TimeEvoConfig::new(m.dt, m.final_time);
    cfg.operators = observables;
    cfg.symbols = symbols.clone();
    cfg.record_bond_dims = true;
    let mut params = SvdParameters::default()
        .with_rel_tol(m.rel_tol)
        .with_total_tol(m.total_tol)
        .with_renorm(m.renorm);
    if let Some(d) = m.max_bond_dim {
        params = params.with_max_bond_dim(d);
    }
    cfg.svd_params = params;
    if matches!(name, MethodName::Tdvp1 | MethodName::Tdvp1Second) {
        cfg.max_bond_dim = m.max_bond_dim;
    }
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    const TFI: &str = r#"{
        "model": {"name": "tfi", "L": 2, "J": 1.0, "g": 0.1},
        "method": {"name": "tebd", "dt": 0.01, "final_time": 1.0, "max_bond_dim": 2},
        "seed": 3
    }"#;

    const SYSTEM: &str = r#"{
        "system": {
            "tree": {"id": "a", "children": [{"id": "b"}, {"id": "c", "dim": 3}]},
            "symbols": {"N": [[[0,0],[0,0],[0,0]],[[0,0],[1,0],[0,0]],[[0,0],[0,0],[2,0]]]},
            "terms": [{"coeff": [0.5, 0], "factors": {"a": "X", "c": "N"}}, {"coeff": [1, 0]}]
        },
        "initial_state": {"random": {"bond_dim": 2}},
        "operators": {"E": {"kind": "energy"}, "Xa": {"kind": "product", "factors": {"a": "X"}}}
    }"#;

    #[test]
    fn round_trip_is_identity() {
        for text in [TFI, SYSTEM] {
            let a = RunConfig::parse(text).unwrap();
            let b = RunConfig::parse(&a.to_json()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for bad in [
            r#"{"modle": {}}"#,
            r#"{"model": {"name": "tfi", "L": 2, "J": 1, "g": 0.1, "h": 3}}"#,
            r#"{"method": {"dt": 0.1, "final_time": 1, "order": 2}}"#,
            r#"{"initial_state": {"random": {"bond_dim": 2, "flip": true}}}"#,
        ] {
            assert!(matches!(RunConfig::parse(bad), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn semantic_checks() {
        for bad in [
            r#"{"model": {"name": "tfi", "L": 0, "J": 1, "g": 0.1}}"#,
            r#"{"method": {"dt": 0, "final_time": 1}}"#,
            r#"{"system": {"tree": {"id": "a", "dim": 0}}}"#,
            r#"{"trotter_scan": {"dts": []}}"#,
        ] {
            assert!(RunConfig::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn explicit_system_builds() {
        let cfg = RunConfig::parse(SYSTEM).unwrap();
        let sys = cfg.build_system(1).unwrap();
        assert_eq!(sys.tree.len(), 3);
        assert_eq!(sys.hamiltonian.len(), 2);
        assert_eq!(sys.dims[&NodeId::new("c")], 3);
        let obs = sys.observables(&cfg.operators).unwrap();
        assert_eq!(obs.len(), 2);
        let psi = sys.initial_state(cfg.initial_state.as_ref(), 1).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tfi_defaults() {
        let cfg = RunConfig::parse(TFI).unwrap();
        let sys = cfg.build_system(0).unwrap();
        let obs = sys.observables(&cfg.operators).unwrap();
        assert_eq!(obs.keys().collect::<Vec<_>>(), ["M"]);
        assert!(sys.initial_state(None, 0).is_ok());
        assert_eq!(cfg.seed(None), 3);
        assert_eq!(cfg.seed(Some(9)), 9);
    }
}
