//! Configuration-driven experiments: build the perturbed register, run every
//! requested scheme and write traces, scalars and bound overlays.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use ddsim::analysis::{critical_x, pauli_twirl_rate, residual_norm_bound, residual_norm_bound_small};
use ddsim::engine::disorder_rng;
use ddsim::model::MAX_DENSE_QUBITS;
use ddsim::{
    build_hamiltonian, find_undecoupled_term, initial_coherent_state, monte_carlo, oa_cycle_9q,
    sample_params, BoundInputs, BoundsTable, CouplingGraph, DecouplingCycle, DeltaMode,
    DenseOperator, FidelityTrace, PauliString, PauliSumHamiltonian, PerturbationParams,
    PropagatorCache, SchemeKind, SchemeSpec, StateVector,
};

/// Environment variable overriding the number of worker threads.
pub const WORKERS_ENV: &str = "DDSIM_WORKERS";

fn default_coupling_bound() -> f64 {
    ddsim::model::DEFAULT_COUPLING_BOUND
}

fn default_n_runs() -> usize {
    200
}

fn default_pulse_interval() -> f64 {
    1.0
}

/// One experiment, read from a JSON document.
///
/// Only `n_qubits`, `schemes` and `master_seed` are required. The lattice is
/// either `rows` x `cols` or an explicit `edges` list; the decoupling cycle
/// defaults to the 32-frame orthogonal-array cycle on 9 qubits and otherwise
/// comes from `cycle_file`, resolved relative to the config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_qubits: usize,
    #[serde(default)]
    pub rows: Option<usize>,
    #[serde(default)]
    pub cols: Option<usize>,
    #[serde(default)]
    pub edges: Option<Vec<(usize, usize)>>,
    #[serde(default = "default_coupling_bound")]
    pub coupling_bound: f64,
    #[serde(default)]
    pub delta_mode: DeltaModeConfig,
    #[serde(default = "default_pulse_interval")]
    pub pulse_interval: f64,
    #[serde(default)]
    pub cycle_file: Option<PathBuf>,
    pub schemes: Vec<SchemeEntry>,
    /// Steps for schemes that do not set their own.
    #[serde(default)]
    pub n_steps: Option<usize>,
    /// Recording stride for schemes that do not set their own; defaults to
    /// one step for free/PAREC and one cycle for bang-bang/embedded.
    #[serde(default)]
    pub record_stride: Option<usize>,
    #[serde(default = "default_n_runs")]
    pub n_runs: usize,
    pub master_seed: u64,
    /// Seed for the perturbation draw alone; defaults to `master_seed`.
    #[serde(default)]
    pub disorder_seed: Option<u64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaModeConfig {
    #[default]
    Sample,
    Zero,
}

impl From<DeltaModeConfig> for DeltaMode {
    fn from(m: DeltaModeConfig) -> Self {
        match m {
            DeltaModeConfig::Sample => DeltaMode::Sample,
            DeltaModeConfig::Zero => DeltaMode::Zero,
        }
    }
}

/// A scheme name, or an object overriding the horizon of that scheme.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemeEntry {
    Name(String),
    Detailed {
        scheme: String,
        #[serde(default)]
        n_steps: Option<usize>,
        #[serde(default)]
        record_stride: Option<usize>,
    },
}

/// A fully resolved scheme run.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeRun {
    pub kind: SchemeKind,
    pub n_steps: usize,
    pub record_stride: usize,
}

impl SchemeRun {
    pub fn record_times(&self, dt: f64) -> Vec<f64> {
        (0..=self.n_steps / self.record_stride)
            .map(|i| (i * self.record_stride) as f64 * dt)
            .collect()
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("malformed experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("malformed experiment config {}", path.display()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        cfg.validate().with_context(|| format!("in {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            (1..=MAX_DENSE_QUBITS).contains(&self.n_qubits),
            "n_qubits must be in 1..={MAX_DENSE_QUBITS}, got {}",
            self.n_qubits
        );
        ensure!(self.n_runs >= 1, "n_runs must be at least 1");
        ensure!(
            self.coupling_bound >= 0.0 && self.coupling_bound.is_finite(),
            "coupling_bound must be finite and nonnegative"
        );
        ensure!(
            self.pulse_interval > 0.0 && self.pulse_interval.is_finite(),
            "pulse_interval must be positive"
        );
        ensure!(!self.schemes.is_empty(), "no schemes requested");
        match (self.rows, self.cols, &self.edges) {
            (Some(r), Some(c), None) => ensure!(
                r * c == self.n_qubits,
                "rows * cols = {} does not match n_qubits = {}",
                r * c,
                self.n_qubits
            ),
            (None, None, Some(_)) => {}
            (None, None, None) => bail!("give either rows and cols or an edge list"),
            _ => bail!("give either rows and cols or an edge list, not both"),
        }
        let mut seen = BTreeSet::new();
        for run in self.scheme_runs_unchecked()? {
            ensure!(seen.insert(run.kind.as_str()), "scheme {} listed twice", run.kind);
        }
        Ok(())
    }

    pub fn graph(&self) -> Result<CouplingGraph> {
        Ok(match (&self.edges, self.rows, self.cols) {
            (Some(edges), _, _) => CouplingGraph::new(self.n_qubits, edges.clone())?,
            (None, Some(r), Some(c)) => CouplingGraph::grid(r, c),
            _ => bail!("no lattice given"),
        })
    }

    fn scheme_runs_unchecked(&self) -> Result<Vec<SchemeRun>> {
        self.schemes
            .iter()
            .map(|entry| {
                let (name, steps, stride) = match entry {
                    SchemeEntry::Name(n) => (n.as_str(), None, None),
                    SchemeEntry::Detailed {
                        scheme,
                        n_steps,
                        record_stride,
                    } => (scheme.as_str(), *n_steps, *record_stride),
                };
                let kind: SchemeKind = name.parse()?;
                let n_steps = steps
                    .or(self.n_steps)
                    .with_context(|| format!("no n_steps for scheme {kind}"))?;
                let natural = if kind.needs_cycle() { self.cycle_len() } else { 1 };
                let record_stride = stride.or(self.record_stride).unwrap_or(natural);
                ensure!(n_steps >= 1, "scheme {kind}: n_steps must be positive");
                ensure!(
                    record_stride >= 1 && n_steps % record_stride == 0,
                    "scheme {kind}: record_stride {record_stride} must divide n_steps {n_steps}"
                );
                Ok(SchemeRun {
                    kind,
                    n_steps,
                    record_stride,
                })
            })
            .collect()
    }

    fn cycle_len(&self) -> usize {
        match &self.cycle_file {
            Some(path) => self
                .resolve(path)
                .and_then(|p| fs::read_to_string(p).ok())
                .and_then(|t| t.split_whitespace().next().and_then(|n| n.parse().ok()))
                .unwrap_or(1),
            None if self.n_qubits == 9 => 32,
            None => 1,
        }
    }

    fn resolve(&self, path: &Path) -> Option<PathBuf> {
        Some(match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        })
    }

    /// The schemes to run, in config order, with defaults applied.
    pub fn scheme_runs(&self) -> Result<Vec<SchemeRun>> {
        self.scheme_runs_unchecked()
    }

    pub fn needs_cycle(&self) -> Result<bool> {
        Ok(self.scheme_runs()?.iter().any(|r| r.kind.needs_cycle()))
    }

    pub fn disorder_seed(&self) -> u64 {
        self.disorder_seed.unwrap_or(self.master_seed)
    }

    /// The decoupling cycle, if the config names or implies one.
    pub fn cycle(&self) -> Result<Option<DecouplingCycle>> {
        match &self.cycle_file {
            Some(path) => {
                let path = self.resolve(path).expect("always resolves");
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading cycle file {}", path.display()))?;
                let cycle = DecouplingCycle::from_text(&text, self.pulse_interval)
                    .with_context(|| format!("in {}", path.display()))?;
                ensure!(
                    cycle.n_qubits() == self.n_qubits,
                    "cycle acts on {} qubits, config has {}",
                    cycle.n_qubits(),
                    self.n_qubits
                );
                Ok(Some(cycle))
            }
            None if self.n_qubits == 9 => Ok(Some(oa_cycle_9q(self.pulse_interval)?)),
            None => Ok(None),
        }
    }
}

/// Derived scalars of an instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Scalars {
    pub h0_norm: f64,
    pub delta_h0: f64,
    pub hbar_norm: Option<f64>,
    pub delta_hbar: Option<f64>,
    pub dt: f64,
    pub t_c: Option<f64>,
    pub parec_rate: f64,
    pub embedded_rate: Option<f64>,
    pub parec_twirl_rate: f64,
    pub embedded_twirl_rate: Option<f64>,
}

impl Scalars {
    /// `x = ||H0|| T_c`.
    pub fn x(&self) -> Option<f64> {
        self.t_c.map(|t| self.h0_norm * t)
    }

    pub fn bound_inputs(&self) -> Result<BoundInputs> {
        let (Some(t_c), Some(hbar_norm), Some(delta_hbar)) = (self.t_c, self.hbar_norm, self.delta_hbar) else {
            bail!("bounds need a decoupling cycle");
        };
        Ok(BoundInputs::new(
            self.h0_norm,
            self.delta_h0,
            delta_hbar,
            hbar_norm,
            t_c,
            self.dt,
        )?)
    }

    /// `name,value` lines, fixed order.
    pub fn to_csv(&self) -> Result<String> {
        let mut rows: Vec<(&str, f64)> = vec![
            ("h0_norm", self.h0_norm),
            ("delta_h0", self.delta_h0),
            ("dt", self.dt),
            ("parec_rate", self.parec_rate),
            ("parec_twirl_rate", self.parec_twirl_rate),
            ("parec_bound_slope", self.h0_norm * self.h0_norm * self.dt),
        ];
        if let (Some(t_c), Some(hn), Some(dh), Some(gb), Some(gbt)) = (
            self.t_c,
            self.hbar_norm,
            self.delta_hbar,
            self.embedded_rate,
            self.embedded_twirl_rate,
        ) {
            let small = residual_norm_bound_small(self.h0_norm, t_c);
            rows.extend([
                ("t_c", t_c),
                ("hbar_norm", hn),
                ("delta_hbar", dh),
                ("embedded_rate", gb),
                ("embedded_twirl_rate", gbt),
                ("x", self.h0_norm * t_c),
                ("x_critical", critical_x()),
                ("residual_norm_bound", residual_norm_bound(self.h0_norm, t_c).unwrap_or(f64::NAN)),
                ("residual_norm_bound_small", small),
                ("det_bound_coefficient", small),
                ("embedded_bound_slope", small * small * t_c),
            ]);
        }
        let mut out = String::from("name,value\n");
        for (name, v) in rows {
            writeln!(out, "{name},{v:.16e}")?;
        }
        Ok(out)
    }
}

/// The perturbed register with everything needed to evolve it.
#[derive(Clone, Debug)]
pub struct Instance {
    pub graph: CouplingGraph,
    pub params: PerturbationParams,
    pub hamiltonian: PauliSumHamiltonian,
    pub h0: DenseOperator,
    pub psi0: StateVector,
    pub cache: PropagatorCache,
    pub scalars: Scalars,
}

impl Instance {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let graph = cfg.graph()?;
        let mut rng = disorder_rng(cfg.disorder_seed());
        let params = sample_params(&mut rng, cfg.coupling_bound, &graph, cfg.delta_mode.into())?;
        let hamiltonian = build_hamiltonian(&params, &graph)?;
        let h0 = hamiltonian.to_dense()?;
        let psi0 = initial_coherent_state(cfg.n_qubits)?;
        let mut cache = PropagatorCache::new(&h0, cfg.pulse_interval)?;
        if let Some(cycle) = cfg.cycle()? {
            cache = cache
                .with_cycle(&cycle)
                .context("cannot extract the residual Hamiltonian")?;
        } else if cfg.needs_cycle()? {
            bail!(
                "bang_bang and embedded need a decoupling cycle; set cycle_file for {} qubits",
                cfg.n_qubits
            );
        }

        let dt = cfg.pulse_interval;
        let h0_norm = ddsim::linalg::spectral_norm(&h0)?;
        let delta_h0 = ddsim::energy_uncertainty(&h0, &psi0)?;
        let (hbar_norm, delta_hbar, t_c, embedded_rate, embedded_twirl_rate) = match (cache.residual(), cache.cycle()) {
            (Some(hbar), Some(cycle)) => {
                let t_c = cycle.cycle_time();
                let dh = ddsim::energy_uncertainty(hbar, &psi0)?;
                (
                    Some(ddsim::linalg::spectral_norm(hbar)?),
                    Some(dh),
                    Some(t_c),
                    Some(ddsim::embedded_rate(dh, t_c)),
                    Some(pauli_twirl_rate(hbar, &psi0, t_c)?),
                )
            }
            _ => (None, None, None, None, None),
        };
        let scalars = Scalars {
            h0_norm,
            delta_h0,
            hbar_norm,
            delta_hbar,
            dt,
            t_c,
            parec_rate: ddsim::parec_rate(delta_h0, dt),
            embedded_rate,
            parec_twirl_rate: pauli_twirl_rate(&h0, &psi0, dt)?,
            embedded_twirl_rate,
        };
        Ok(Self {
            graph,
            params,
            hamiltonian,
            h0,
            psi0,
            cache,
            scalars,
        })
    }

    pub fn scheme_spec(&self, kind: SchemeKind) -> Result<SchemeSpec> {
        let n = self.graph.n_qubits();
        let dt = self.cache.step();
        Ok(match kind {
            SchemeKind::Free => SchemeSpec::free(n, dt),
            SchemeKind::Parec => SchemeSpec::parec(n, dt),
            SchemeKind::BangBang | SchemeKind::Embedded => {
                let cycle = self
                    .cache
                    .cycle()
                    .cloned()
                    .with_context(|| format!("scheme {kind} needs a decoupling cycle"))?;
                SchemeSpec::new(kind, n, dt, Some(cycle))?
            }
        })
    }

    pub fn run(&self, run: &SchemeRun, n_runs: usize, master_seed: u64) -> Result<FidelityTrace> {
        let spec = self.scheme_spec(run.kind)?;
        Ok(monte_carlo(
            &self.cache,
            &spec,
            &self.psi0,
            run.n_steps,
            run.record_stride,
            n_runs,
            master_seed,
        )?)
    }
}

/// Everything `run` produced.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub instance: Instance,
    pub traces: Vec<(SchemeRun, FidelityTrace)>,
}

impl ExperimentOutput {
    pub fn trace(&self, kind: SchemeKind) -> Option<&FidelityTrace> {
        self.traces.iter().find(|(r, _)| r.kind == kind).map(|(_, t)| t)
    }
}

pub fn trace_file_name(kind: SchemeKind) -> String {
    format!("trace_{}.csv", kind.as_str())
}

/// Runs every scheme in memory.
pub fn simulate(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let instance = Instance::build(cfg)?;
    let mut traces = Vec::new();
    for run in cfg.scheme_runs()? {
        let trace = instance
            .run(&run, cfg.n_runs, cfg.master_seed)
            .with_context(|| format!("running scheme {}", run.kind))?;
        traces.push((run, trace));
    }
    Ok(ExperimentOutput { instance, traces })
}

/// Runs every scheme and writes traces, scalars, the Hamiltonian and the cycle to `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentOutput> {
    let output = simulate(cfg)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (run, trace) in &output.traces {
        let path = out.join(trace_file_name(run.kind));
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        trace.write_csv(BufWriter::new(file))?;
    }
    let inst = &output.instance;
    fs::write(out.join("scalars.csv"), inst.scalars.to_csv()?)?;
    fs::write(out.join("hamiltonian.txt"), inst.hamiltonian.to_text())?;
    if let Some(cycle) = inst.cache.cycle() {
        fs::write(out.join("cycle.txt"), cycle.to_text())?;
    }
    Ok(output)
}

/// Union of all recording times of the configured schemes.
pub fn time_grid(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    let mut steps = BTreeSet::new();
    for run in cfg.scheme_runs()? {
        steps.extend((0..=run.n_steps).step_by(run.record_stride));
    }
    Ok(steps.into_iter().map(|s| s as f64 * cfg.pulse_interval).collect())
}

/// Bounds and approximations on the configured time grid.
pub fn bounds_table(cfg: &ExperimentConfig) -> Result<BoundsTable> {
    let instance = Instance::build(cfg)?;
    let inputs = instance.scalars.bound_inputs()?;
    residual_norm_bound(inputs.h0_norm, inputs.t_c).context("residual-norm bound")?;
    Ok(BoundsTable::new(&inputs, &time_grid(cfg)?))
}

pub fn write_bounds(cfg: &ExperimentConfig, out: &Path) -> Result<BoundsTable> {
    let table = bounds_table(cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    table.write_csv(BufWriter::new(file))?;
    Ok(table)
}

/// Outcome of checking a cycle file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CycleVerdict {
    Decoupled,
    Violation(PauliString),
}

pub fn verify_cycle_text(text: &str, locality: usize) -> ddsim::Result<CycleVerdict> {
    let cycle = DecouplingCycle::from_text(text, 1.0)?;
    Ok(match find_undecoupled_term(&cycle, locality)? {
        None => CycleVerdict::Decoupled,
        Some(p) => CycleVerdict::Violation(p),
    })
}
