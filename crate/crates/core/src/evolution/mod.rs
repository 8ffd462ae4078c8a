//! Time evolution of tree states: Trotterised gate application (TEBD) and
//! one- and two-site TDVP, with a common driver that records expectation
//! values and bond dimensions on a uniform time grid.

mod environment;
mod tdvp;
mod tebd;
mod trotter;

pub use environment::{from_scratch_block, local_expm_apply, EffectiveHamiltonianCache, DENSE_LOCAL_DIM};
pub use tdvp::{tdvp1_step, tdvp2_step, TdvpOrder, TdvpSweeper};
pub use tebd::{apply_gate, apply_swap, tebd_step};
pub use trotter::{exponentiate_splitting, GateStep, SplittingEntry, SwapList, TrotterSplitting, TrotterStep, GATE_SITE_CAP};

use std::io::Write;

use indexmap::IndexMap;

use crate::error::{Result, TtnError};
use crate::operators::{SymbolTable, TensorProduct};
use crate::tensor::{SvdParameters, C64};
use crate::tree::NodeId;
use crate::ttno::Ttno;
use crate::ttns::Ttns;

/// A quantity measured along a run.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    Product(TensorProduct),
    Operator(Ttno),
}

/// The stepping scheme of a run together with its inputs.
#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    Tebd(TrotterSplitting),
    Tdvp1 { hamiltonian: Ttno, order: TdvpOrder },
    Tdvp2 { hamiltonian: Ttno },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Tebd(_) => "tebd",
            Method::Tdvp1 {
                order: TdvpOrder::First,
                ..
            } => "tdvp1",
            Method::Tdvp1 {
                order: TdvpOrder::Second,
                ..
            } => "tdvp1-2nd",
            Method::Tdvp2 { .. } => "tdvp2",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TimeEvoConfig {
    pub dt: f64,
    pub final_time: f64,
    /// Named observables, measured in this order.
    pub operators: IndexMap<String, Observable>,
    /// Symbols used by product observables and by Trotter steps.
    pub symbols: SymbolTable,
    pub record_bond_dims: bool,
    /// Truncation for TEBD and two-site TDVP.
    pub svd_params: SvdParameters,
    /// Bond dimension the initial state is padded to before one-site TDVP.
    pub max_bond_dim: Option<usize>,
}

impl TimeEvoConfig {
    pub fn new(dt: f64, final_time: f64) -> Self {
        Self {
            dt,
            final_time,
            operators: IndexMap::new(),
            symbols: crate::operators::pauli_library(),
            record_bond_dims: false,
            svd_params: SvdParameters::default(),
            max_bond_dim: None,
        }
    }

    pub fn with_operator(mut self, name: impl Into<String>, op: Observable) -> Self {
        self.operators.insert(name.into(), op);
        self
    }

    /// Number of steps: `floor(final_time / dt)`, with a small allowance for
    /// round-off in the ratio.
    pub fn num_steps(&self) -> usize {
        (self.final_time / self.dt + 1e-9).floor().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(TtnError::Incompatible(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.final_time.is_finite() && self.final_time >= 0.0) {
            return Err(TtnError::Incompatible(format!(
                "final time must be non-negative, got {}",
                self.final_time
            )));
        }
        if self.max_bond_dim == Some(0) {
            return Err(TtnError::Incompatible("maximal bond dimension must be positive".into()));
        }
        self.svd_params.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeEvolutionResult {
    pub times: Vec<f64>,
    pub values: IndexMap<String, Vec<C64>>,
    /// Per `(parent, child)` edge, when recorded.
    pub bond_dims: Option<IndexMap<(NodeId, NodeId), Vec<usize>>>,
}

impl TimeEvolutionResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn series(&self, name: &str) -> Option<&[C64]> {
        self.values.get(name).map(Vec::as_slice)
    }

    /// Writes `t,<name>_re,<name>_im,...,bond:<parent>-<child>,...` rows
    /// with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        for name in self.values.keys() {
            header.push(format!("{name}_re"));
            header.push(format!("{name}_im"));
        }
        if let Some(b) = &self.bond_dims {
            header.extend(b.keys().map(|(p, c)| format!("bond:{p}-{c}")));
        }
        writeln!(w, "{}", header.join(","))?;
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t:.16e}")];
            for v in self.values.values() {
                row.push(format!("{:.16e}", v[k].re));
                row.push(format!("{:.16e}", v[k].im));
            }
            if let Some(b) = &self.bond_dims {
                row.extend(b.values().map(|s| s[k].to_string()));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Evolves `psi` with `method`, measuring every observable at `t = 0` and
/// after every step. All inputs are checked before the first step.
pub fn run(psi: &mut Ttns, method: &Method, cfg: &TimeEvoConfig) -> Result<TimeEvolutionResult> {
    cfg.validate()?;
    for obs in cfg.operators.values() {
        check_observable(psi, obs, &cfg.symbols)?;
    }
    let steps = cfg.num_steps();
    let mut stepper = Stepper::prepare(psi, method, cfg)?;
    let mut result = TimeEvolutionResult {
        times: Vec::with_capacity(steps + 1),
        values: cfg.operators.keys().map(|k| (k.clone(), Vec::with_capacity(steps + 1))).collect(),
        bond_dims: cfg.record_bond_dims.then(|| {
            psi.bond_dims()
                .into_keys()
                .map(|e| (e, Vec::with_capacity(steps + 1)))
                .collect()
        }),
    };
    record(psi, cfg, 0.0, &mut result)?;
    for k in 1..=steps {
        stepper.step(psi, method, cfg)?;
        let norm = psi.norm();
        if !norm.is_finite() {
            return Err(TtnError::NonFinite(format!("state norm after step {k}")));
        }
        record(psi, cfg, k as f64 * cfg.dt, &mut result)?;
    }
    Ok(result)
}

enum Stepper {
    Tebd(Vec<GateStep>),
    Tdvp(Box<TdvpSweeper>),
}

impl Stepper {
    fn prepare(psi: &mut Ttns, method: &Method, cfg: &TimeEvoConfig) -> Result<Self> {
        match method {
            Method::Tebd(splitting) => {
                let program = exponentiate_splitting(splitting, cfg.dt, &cfg.symbols)?;
                for g in &program {
                    for n in g.gate.sites.iter().chain(g.swaps_before.iter().chain(g.swaps_after.iter()).flat_map(|(a, b)| [a, b])) {
                        if !psi.contains(n) {
                            return Err(TtnError::UnknownNode(n.clone()));
                        }
                    }
                    if g.gate.arity() > 2 {
                        return Err(TtnError::Unsupported(format!(
                            "gate on {} sites; TEBD applies gates on at most two neighbouring sites, \
                             use TDVP for wider terms",
                            g.gate.arity()
                        )));
                    }
                }
                if psi.orthogonality_center().is_none() {
                    let root = psi.root().ok_or_else(|| TtnError::InvalidTree("empty network".into()))?.clone();
                    psi.canonical_form(&root)?;
                }
                Ok(Stepper::Tebd(program))
            }
            Method::Tdvp1 { hamiltonian, .. } => {
                if let Some(d) = cfg.max_bond_dim {
                    psi.pad_uniform(d)?;
                }
                Self::tdvp(psi, hamiltonian)
            }
            Method::Tdvp2 { hamiltonian } => Self::tdvp(psi, hamiltonian),
        }
    }

    fn tdvp(psi: &mut Ttns, h: &Ttno) -> Result<Self> {
        if psi.orthogonality_center().is_none() {
            let start = psi.topology().tdvp_update_path()[0].clone();
            psi.canonical_form(&start)?;
        }
        Ok(Stepper::Tdvp(Box::new(TdvpSweeper::new(psi, h)?)))
    }

    fn step(&mut self, psi: &mut Ttns, method: &Method, cfg: &TimeEvoConfig) -> Result<()> {
        match (self, method) {
            (Stepper::Tebd(program), Method::Tebd(_)) => tebd_step(psi, program, &cfg.svd_params),
            (Stepper::Tdvp(s), Method::Tdvp1 { hamiltonian, order }) => s.step_one_site(psi, hamiltonian, cfg.dt, *order),
            (Stepper::Tdvp(s), Method::Tdvp2 { hamiltonian }) => s.step_two_site(psi, hamiltonian, cfg.dt, &cfg.svd_params),
            _ => unreachable!("stepper prepared for this method"),
        }
    }
}

fn check_observable(psi: &Ttns, obs: &Observable, symbols: &SymbolTable) -> Result<()> {
    let dims = psi.physical_dims();
    match obs {
        Observable::Product(tp) => {
            for (n, op) in tp.iter() {
                let d = *dims.get(n).ok_or_else(|| TtnError::UnknownNode(n.clone()))?;
                let m = symbols.resolve(op)?;
                if m.dim(0) != d {
                    return Err(TtnError::Operator(format!(
                        "observable factor on `{n}` has dimension {} but the site has {d}",
                        m.dim(0)
                    )));
                }
            }
        }
        Observable::Operator(op) => {
            if op.physical_dims() != dims {
                return Err(TtnError::Incompatible("observable lives on a different system".into()));
            }
        }
    }
    Ok(())
}

/// Measures on a copy so that the state's gauge (and any environment cache
/// built on it) is left alone.
fn record(psi: &Ttns, cfg: &TimeEvoConfig, t: f64, result: &mut TimeEvolutionResult) -> Result<()> {
    result.times.push(t);
    let mut probe = psi.clone();
    for (name, obs) in &cfg.operators {
        let v = match obs {
            Observable::Product(tp) => probe.expectation_value(tp, &cfg.symbols)?,
            Observable::Operator(op) => psi.expectation_value_ttno(op)?,
        };
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(TtnError::NonFinite(format!("expectation value of `{name}` at t = {t}")));
        }
        result.values[name].push(v);
    }
    if let Some(b) = &mut result.bond_dims {
        let now = psi.bond_dims();
        for (e, series) in b.iter_mut() {
            series.push(now[e]);
        }
    }
    Ok(())
}
