//! The four subcommands. Each reads a validated [`RunConfig`] and writes its
//! results under the output directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use indexmap::IndexMap;
use serde_json::{json, Value};

use treetn_core::evolution::{run, TimeEvolutionResult};
use treetn_core::models::{
    dense_expectation_series, error_series, exact_evolution, loglog_slope, SplittingOrder, TwoQubitModel,
};
use treetn_core::tensor::{SvdParameters, C64};
use treetn_core::ttno::ttno_from_dense;
use treetn_core::{NodeId, TtnError};
use nalgebra::DVector;

use crate::config::{time_evo_config, MethodName, MethodSpec, OperatorSpec, RunConfig, System, TrotterScanSpec};
use crate::error::{CliError, CliResult};

/// Largest Hilbert dimension for which `build-ttno` forms dense matrices.
pub const DENSE_CHECK_CAP: usize = 1 << 10;

/// Options shared by every subcommand.
#[derive(Clone, Debug)]
pub struct Context {
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub method: Option<MethodName>,
    pub compare_svd: bool,
    pub quiet: bool,
    pub jobs: usize,
}

impl Context {
    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn path(&self, cfg: &RunConfig, default_stem: &str, ext: &str) -> PathBuf {
        let stem = cfg.output.as_deref().unwrap_or(default_stem);
        self.out_dir.join(format!("{stem}.{ext}"))
    }
}

fn edge_key(e: &(NodeId, NodeId)) -> String {
    format!("{}-{}", e.0, e.1)
}

fn write_json(path: &Path, value: &Value) -> CliResult<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn sidecar(cfg: &RunConfig, command: &str, seed: u64, started: Instant, extra: Value) -> Value {
    let mut v = json!({
        "command": command,
        "config": serde_json::to_value(cfg).expect("config serialises"),
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
        "runtime_seconds": started.elapsed().as_secs_f64(),
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut v, extra) {
        m.extend(e);
    }
    v
}

pub fn build_ttno(cfg: &RunConfig, ctx: &Context) -> CliResult<PathBuf> {
    let seed = cfg.seed(ctx.seed);
    let sys = cfg.build_system(seed)?;
    let ttno = sys.ttno()?;
    let bonds = ttno.bond_dims();

    let order = sys.tree.pre_order();
    let want_dense = cfg.dense_check || ctx.compare_svd;
    let dense = if want_dense {
        Some(sys.hamiltonian.to_dense(&order, &sys.dims, DENSE_CHECK_CAP)?)
    } else {
        None
    };
    let dense_check = match (&dense, cfg.dense_check) {
        (Some(h), true) => {
            let diff = (ttno.to_dense(&order, DENSE_CHECK_CAP)? - h).camax();
            json!({ "max_abs_diff": diff, "passed": diff < 1e-12 })
        }
        _ => Value::Null,
    };
    let svd_comparison = match (&dense, ctx.compare_svd) {
        (Some(h), true) => {
            let svd = ttno_from_dense(h, &sys.tree, &order, &sys.dims, &SvdParameters::default())?;
            let svd_bonds = svd.bond_dims();
            let equal = bonds.iter().all(|(e, d)| svd_bonds.get(e) == Some(d));
            ctx.say(format!("equal on all edges: {equal}"));
            json!({
                "bond_dims": svd_bonds.iter().map(|(e, d)| (edge_key(e), json!(d))).collect::<serde_json::Map<_, _>>(),
                "total_entries": svd.total_entries(),
                "equal_on_all_edges": equal,
            })
        }
        _ => Value::Null,
    };

    let report = json!({
        "num_terms": sys.hamiltonian.len(),
        "bond_dims": bonds.iter().map(|(e, d)| (edge_key(e), json!(d))).collect::<serde_json::Map<_, _>>(),
        "max_bond_dim": bonds.values().copied().max().unwrap_or(1),
        "total_entries": ttno.total_entries(),
        "dense_check": dense_check,
        "svd_comparison": svd_comparison,
    });
    let path = ctx.path(cfg, "ttno_report", "json");
    write_json(&path, &report)?;
    ctx.say(format!("total entries: {}", ttno.total_entries()));
    if let Some(p) = dense_check.get("passed") {
        ctx.say(format!("dense check passed: {p}"));
    }
    ctx.say(format!("wrote {}", path.display()));
    Ok(path)
}

fn method_spec(cfg: &RunConfig) -> CliResult<&MethodSpec> {
    cfg.method
        .as_ref()
        .ok_or_else(|| CliError::Config("a `method` section is required".into()))
}

fn method_name(cfg: &RunConfig, ctx: &Context) -> MethodName {
    ctx.method
        .or_else(|| cfg.method.as_ref().and_then(|m| m.name))
        .unwrap_or(MethodName::Tebd)
}

/// One tensor network run of the configured system.
fn evolve_system(cfg: &RunConfig, ctx: &Context, sys: &System) -> CliResult<TimeEvolutionResult> {
    let seed = cfg.seed(ctx.seed);
    let spec = method_spec(cfg)?;
    let name = method_name(cfg, ctx);
    let method = sys.method(name)?;
    let observables = sys.observables(&cfg.operators)?;
    let evo = time_evo_config(spec, name, observables, sys.symbols());
    let mut psi = sys.initial_state(cfg.initial_state.as_ref(), seed)?;
    Ok(run(&mut psi, &method, &evo)?)
}

pub fn evolve(cfg: &RunConfig, ctx: &Context) -> CliResult<PathBuf> {
    let started = Instant::now();
    let seed = cfg.seed(ctx.seed);
    let sys = cfg.build_system(seed)?;
    let result = evolve_system(cfg, ctx, &sys)?;
    let csv = ctx.path(cfg, "evolve", "csv");
    result.write_csv(BufWriter::new(File::create(&csv)?))?;
    let final_bonds = result.bond_dims.as_ref().map(|b| {
        b.iter()
            .map(|(e, s)| (edge_key(e), json!(s.last().copied().unwrap_or(0))))
            .collect::<serde_json::Map<_, _>>()
    });
    let extra = json!({
        "method": method_name(cfg, ctx).as_str(),
        "rows": result.len(),
        "final_bond_dims": final_bonds,
        "csv": csv.file_name().map(|f| f.to_string_lossy().into_owned()),
    });
    write_json(&ctx.path(cfg, "evolve", "json"), &sidecar(cfg, "evolve", seed, started, extra))?;
    ctx.say(format!("{} rows written to {}", result.len(), csv.display()));
    Ok(csv)
}

/// Exact reference series of the measured quantity `spec`.
fn dense_series(sys: &System, states: &[DVector<C64>], spec: &OperatorSpec) -> CliResult<Vec<C64>> {
    let order = sys.tree.pre_order();
    match spec {
        OperatorSpec::Energy => states
            .iter()
            .map(|v| {
                let w = sys.hamiltonian.apply(v.as_slice(), &order, &sys.dims)?;
                Ok(v.iter().zip(&w).map(|(a, b)| a.conj() * b).sum())
            })
            .collect(),
        _ => {
            let name = "q";
            let obs = sys.observables(&[(name.to_string(), spec.clone())].into_iter().collect())?;
            match &obs[name] {
                treetn_core::evolution::Observable::Product(tp) => {
                    Ok(dense_expectation_series(states, tp, &order, &sys.dims, sys.symbols())?)
                }
                treetn_core::evolution::Observable::Operator(_) => unreachable!("only energy is an operator"),
            }
        }
    }
}

/// Compares the first measured quantity against the state-vector oracle.
pub fn compare_exact(cfg: &RunConfig, ctx: &Context) -> CliResult<(PathBuf, f64)> {
    let started = Instant::now();
    let seed = cfg.seed(ctx.seed);
    let sys = cfg.build_system(seed)?;
    let spec = method_spec(cfg)?;

    let order = sys.tree.pre_order();
    let psi0 = sys.initial_state(cfg.initial_state.as_ref(), seed)?;
    let v0 = psi0.to_dense(&order, treetn_core::operators::DEFAULT_DENSE_CAP)?;
    let states = exact_evolution(&sys.hamiltonian, &order, &sys.dims, &v0, spec.dt, spec.final_time)?;

    let default_ops: IndexMap<String, OperatorSpec> = [("M".to_string(), OperatorSpec::Magnetisation)].into_iter().collect();
    let ops = if cfg.operators.is_empty() && sys.tfi.is_some() {
        &default_ops
    } else {
        &cfg.operators
    };
    let Some((name, op)) = ops.first() else {
        return Err(CliError::Config("compare-exact needs at least one entry in `operators`".into()));
    };
    let reference = dense_series(&sys, &states, op)?;
    let result = evolve_system(cfg, ctx, &sys)?;
    let approx = result
        .series(name)
        .ok_or_else(|| TtnError::Incompatible(format!("no series `{name}` in the run")))?;
    let errors = error_series(&reference, approx)?;
    let max_error = errors.iter().copied().fold(0.0, f64::max);

    let csv = ctx.path(cfg, "compare_exact", "csv");
    let mut w = BufWriter::new(File::create(&csv)?);
    writeln!(w, "t,error")?;
    for (t, e) in result.times.iter().zip(&errors) {
        writeln!(w, "{t:.16e},{e:.16e}")?;
    }
    w.flush()?;
    let extra = json!({
        "method": method_name(cfg, ctx).as_str(),
        "operator": name,
        "max_error": max_error,
    });
    write_json(&ctx.path(cfg, "compare_exact", "json"), &sidecar(cfg, "compare-exact", seed, started, extra))?;
    ctx.say(format!("max error: {max_error:.6e}"));
    Ok((csv, max_error))
}

/// One row of the splitting-error scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub splitting: SplittingOrder,
    pub state: String,
    pub dt: f64,
    pub error: f64,
}

/// Final-time splitting error of the random two-qubit model for each
/// splitting order, reference state and step size. Rows come back in that
/// nesting order whatever the number of worker threads.
pub fn scan_rows(model: &TwoQubitModel, scan: &TrotterScanSpec, jobs: usize) -> CliResult<Vec<ScanRow>> {
    let states = TwoQubitModel::reference_states();
    let mut tasks = Vec::new();
    for order in [SplittingOrder::First, SplittingOrder::Strang] {
        for (label, v) in &states {
            for &dt in &scan.dts {
                tasks.push((order, label.as_str(), v, dt));
            }
        }
    }
    let eval = |&(order, label, v, dt): &(SplittingOrder, &str, &DVector<C64>, f64)| -> CliResult<ScanRow> {
        Ok(ScanRow {
            splitting: order,
            state: label.to_string(),
            dt,
            error: model.final_error(v, dt, scan.final_time, order)?,
        })
    };
    let jobs = jobs.clamp(1, tasks.len().max(1));
    if jobs == 1 {
        return tasks.iter().map(eval).collect();
    }
    let chunk = tasks.len().div_ceil(jobs);
    let parts: Vec<CliResult<Vec<ScanRow>>> = std::thread::scope(|s| {
        let handles: Vec<_> = tasks
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(eval).collect::<CliResult<Vec<_>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("scan worker panicked")).collect()
    });
    let mut rows = Vec::with_capacity(tasks.len());
    for p in parts {
        rows.extend(p?);
    }
    Ok(rows)
}

/// Log-log slopes of the state-averaged error, or `None` with a single step.
pub fn scan_slopes(rows: &[ScanRow], dts: &[f64]) -> CliResult<IndexMap<&'static str, Option<f64>>> {
    let mut out = IndexMap::new();
    for order in [SplittingOrder::First, SplittingOrder::Strang] {
        if dts.len() < 2 {
            out.insert(order.name(), None);
            continue;
        }
        let means: Vec<f64> = dts
            .iter()
            .map(|dt| {
                let errs: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.splitting == order && r.dt == *dt)
                    .map(|r| r.error)
                    .collect();
                errs.iter().sum::<f64>() / errs.len() as f64
            })
            .collect();
        out.insert(order.name(), Some(loglog_slope(dts, &means)?));
    }
    Ok(out)
}

/// Largest ratio between the errors of two reference states at one step size.
fn state_spread(rows: &[ScanRow], order: SplittingOrder, dts: &[f64]) -> f64 {
    dts.iter()
        .map(|dt| {
            let errs = rows.iter().filter(|r| r.splitting == order && r.dt == *dt).map(|r| r.error);
            let (lo, hi) = errs.fold((f64::INFINITY, 0.0f64), |(lo, hi), e| (lo.min(e), hi.max(e)));
            hi / lo
        })
        .fold(1.0, f64::max)
}

pub fn trotter_scan(cfg: &RunConfig, ctx: &Context) -> CliResult<PathBuf> {
    let started = Instant::now();
    let seed = cfg.seed(ctx.seed);
    let scan = cfg.trotter_scan.clone().unwrap_or_default();
    let model = TwoQubitModel::random(seed);
    let rows = scan_rows(&model, &scan, ctx.jobs)?;

    let csv = ctx.path(cfg, "trotter_scan", "csv");
    let mut w = BufWriter::new(File::create(&csv)?);
    writeln!(w, "splitting,state,dt,error")?;
    for r in &rows {
        writeln!(w, "{},{},{:.16e},{:.16e}", r.splitting.name(), r.state, r.dt, r.error)?;
    }
    w.flush()?;

    let slopes = scan_slopes(&rows, &scan.dts)?;
    let spread: serde_json::Map<_, _> = [SplittingOrder::First, SplittingOrder::Strang]
        .into_iter()
        .map(|o| (o.name().to_string(), json!(state_spread(&rows, o, &scan.dts))))
        .collect();
    let extra = json!({ "slopes": slopes, "state_spread": spread, "rows": rows.len() });
    write_json(&ctx.path(cfg, "trotter_scan", "json"), &sidecar(cfg, "trotter-scan", seed, started, extra))?;
    for (k, v) in &slopes {
        match v {
            Some(s) => ctx.say(format!("{k} slope: {s:.4}")),
            None => ctx.say(format!("{k} slope: n/a (single step size)")),
        }
    }
    Ok(csv)
}
