//! Exact time evolution under the decoupling schemes.
//!
//! Every step applies `g_j^dag E g_j` to the state, where `E = e^{-i H0 tau}`
//! and `g_j` is the scheme's frame. Free, bang-bang, PAREC and embedded runs
//! share this one code path; only the frame generator differs. The frames
//! are signed permutations, so the only dense work per step is one product
//! with `E`.
//!
//! Monte Carlo runs are stacked as the rows of a matrix and advanced together
//! with a single gemm per step. Run `r` always draws from its own generator
//! `(master_seed, stream r + 1)` and always sits in the same fixed-size batch,
//! so a trace depends only on its inputs, never on worker count or schedule.

use std::io::{self, BufRead, Write};

use ndarray::linalg::general_mat_mul;
use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{expm_hermitian, hermitian_eig, unitary_log, DenseOperator, Spectrum};
use crate::model::{inner, PauliSumHamiltonian, StateVector};
use crate::pauli::PauliString;
use crate::schemes::{DecouplingCycle, SchemeKind, SchemeSpec};

/// Runs per gemm batch. Part of the reproducibility contract: changing it
/// changes the floating-point grouping of results.
pub const MC_BATCH: usize = 50;

/// Header of the trace CSV.
pub const TRACE_CSV_HEADER: &str = "time_tau,mean_fidelity,std_error,n_runs";

/// Generator for Monte Carlo run `run`. Stream 0 is left for the disorder draw.
pub fn run_rng(master_seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(run as u64 + 1);
    rng
}

/// Generator for the static perturbation parameters.
pub fn disorder_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug)]
struct CycleData {
    cycle: DecouplingCycle,
    unitary: DenseOperator,
    unitary_t: Array2<C64>,
    residual: DenseOperator,
}

/// Step unitary of `H0` and, optionally, the cycle unitary and its residual Hamiltonian.
#[derive(Clone, Debug)]
pub struct PropagatorCache {
    n_qubits: usize,
    step: f64,
    spectrum: Spectrum<f64>,
    step_unitary: DenseOperator,
    step_unitary_t: Array2<C64>,
    cycle: Option<CycleData>,
}

impl PropagatorCache {
    pub fn new(h0: &DenseOperator, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::invalid(format!("step {step} must be positive")));
        }
        let spectrum = hermitian_eig(h0)?;
        let step_unitary = spectrum.propagator(step)?;
        let step_unitary_t = step_unitary.matrix().t().to_owned();
        Ok(Self {
            n_qubits: h0.dim().trailing_zeros() as usize,
            step,
            spectrum,
            step_unitary,
            step_unitary_t,
            cycle: None,
        })
    }

    pub fn from_hamiltonian(h0: &PauliSumHamiltonian, step: f64) -> Result<Self> {
        Self::new(&h0.to_dense()?, step)
    }

    /// Adds the cycle unitary `U_c` and residual `H_bar`; fails with
    /// [`Error::BranchAmbiguity`] when `T_c` is too long for a unique logarithm.
    pub fn with_cycle(mut self, cycle: &DecouplingCycle) -> Result<Self> {
        if cycle.n_qubits() != self.n_qubits {
            return Err(Error::QubitMismatch {
                expected: self.n_qubits,
                found: cycle.n_qubits(),
            });
        }
        let cycle = cycle.with_step(self.step)?;
        let unitary = cycle_propagator_with(&self.step_unitary, &cycle)?;
        let residual = residual_hamiltonian(&unitary, cycle.cycle_time())?;
        let unitary_t = unitary.matrix().t().to_owned();
        self.cycle = Some(CycleData {
            cycle,
            unitary,
            unitary_t,
            residual,
        });
        Ok(self)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn spectrum(&self) -> &Spectrum<f64> {
        &self.spectrum
    }

    pub fn step_unitary(&self) -> &DenseOperator {
        &self.step_unitary
    }

    pub fn cycle(&self) -> Option<&DecouplingCycle> {
        self.cycle.as_ref().map(|c| &c.cycle)
    }

    pub fn cycle_unitary(&self) -> Option<&DenseOperator> {
        self.cycle.as_ref().map(|c| &c.unitary)
    }

    pub fn residual(&self) -> Option<&DenseOperator> {
        self.cycle.as_ref().map(|c| &c.residual)
    }
}

/// `P M`, with `P` acting on the row index.
fn pauli_times_matrix(p: &PauliString, m: &Array2<C64>) -> Array2<C64> {
    let (rows, cols) = m.dim();
    let mut out = Array2::zeros((rows, cols));
    let mut src = vec![C64::new(0.0, 0.0); rows];
    let mut dst = vec![C64::new(0.0, 0.0); rows];
    for c in 0..cols {
        src.iter_mut().zip(m.column(c)).for_each(|(s, v)| *s = *v);
        p.apply_into(&src, &mut dst);
        out.column_mut(c).iter_mut().zip(&dst).for_each(|(o, v)| *o = *v);
    }
    out
}

fn cycle_propagator_with(step_unitary: &DenseOperator, cycle: &DecouplingCycle) -> Result<DenseOperator> {
    let dim = step_unitary.dim();
    if cycle.frames()[0].dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: cycle.frames()[0].dim(),
        });
    }
    let e = step_unitary.matrix();
    let mut acc: Array2<C64> = Array2::eye(dim);
    for d in cycle.frames() {
        let moved = pauli_times_matrix(d, &acc);
        let evolved = e.dot(&moved);
        acc = pauli_times_matrix(&d.adjoint(), &evolved);
    }
    DenseOperator::unitary_polished(acc)
}

/// `U_c = prod_j d_j^dag E d_j`, latest interval leftmost.
pub fn cycle_propagator(h0: &DenseOperator, cycle: &DecouplingCycle) -> Result<DenseOperator> {
    let e = expm_hermitian(h0, cycle.step())?;
    cycle_propagator_with(&e, cycle)
}

/// `H_bar = (i / T_c) log U_c`, principal branch.
pub fn residual_hamiltonian(u_c: &DenseOperator, cycle_time: f64) -> Result<DenseOperator> {
    unitary_log(u_c, cycle_time)
}

/// Fidelity samples of one or more runs.
#[derive(Clone, Debug, PartialEq)]
pub struct FidelityTrace {
    pub times: Vec<f64>,
    pub mean_fidelity: Vec<f64>,
    pub std_error: Vec<f64>,
    pub n_runs: usize,
}

impl FidelityTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `1 - f` at each recorded time.
    pub fn deficits(&self) -> Vec<f64> {
        self.mean_fidelity.iter().map(|f| 1.0 - f).collect()
    }

    /// Index of the sample at time `t`, if recorded.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{TRACE_CSV_HEADER}")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{}",
                self.times[i], self.mean_fidelity[i], self.std_error[i], self.n_runs
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let io_err = |line: usize, e: io::Error| Error::Parse {
            line,
            message: e.to_string(),
        };
        match lines.next() {
            Some((_, Ok(h))) if h.trim() == TRACE_CSV_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header {TRACE_CSV_HEADER:?}"),
                })
            }
        }
        let mut trace = FidelityTrace {
            times: Vec::new(),
            mean_fidelity: Vec::new(),
            std_error: Vec::new(),
            n_runs: 0,
        };
        for (i, line) in lines {
            let line = line.map_err(|e| io_err(i + 1, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse {
                line: i + 1,
                message: format!("malformed row {line:?}"),
            };
            if fields.len() != 4 {
                return Err(bad());
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
            trace.times.push(num(fields[0])?);
            trace.mean_fidelity.push(num(fields[1])?);
            trace.std_error.push(num(fields[2])?);
            trace.n_runs = fields[3].trim().parse().map_err(|_| bad())?;
        }
        Ok(trace)
    }
}

fn check_run_args(cache: &PropagatorCache, spec: &SchemeSpec, psi0: &StateVector, n_steps: usize, stride: usize) -> Result<()> {
    if spec.n_qubits() != cache.n_qubits {
        return Err(Error::QubitMismatch {
            expected: cache.n_qubits,
            found: spec.n_qubits(),
        });
    }
    if psi0.dim() != cache.dim() {
        return Err(Error::DimensionMismatch {
            expected: cache.dim(),
            found: psi0.dim(),
        });
    }
    if (spec.pulse_interval() - cache.step).abs() > 1e-12 * cache.step {
        return Err(Error::invalid(format!(
            "scheme pulse interval {} differs from propagator step {}",
            spec.pulse_interval(),
            cache.step
        )));
    }
    if n_steps == 0 || stride == 0 || n_steps % stride != 0 {
        return Err(Error::invalid(format!(
            "record stride {stride} must divide the step count {n_steps}"
        )));
    }
    Ok(())
}

/// A block of states stored as rows, advanced together.
struct Batch {
    states: Array2<C64>,
    scratch: Array2<C64>,
    product: Array2<C64>,
}

impl Batch {
    fn new(psi0: &StateVector, runs: usize) -> Self {
        let dim = psi0.dim();
        let mut states = Array2::zeros((runs, dim));
        for mut row in states.rows_mut() {
            row.iter_mut().zip(psi0.amplitudes()).for_each(|(a, b)| *a = *b);
        }
        Self {
            scratch: Array2::zeros((runs, dim)),
            product: Array2::zeros((runs, dim)),
            states,
        }
    }

    /// Row `r` <- `g_r^dag U g_r` row `r`, given `U^T`.
    fn step(&mut self, frames: &[PauliString], unitary_t: &Array2<C64>) {
        for (r, g) in frames.iter().enumerate() {
            let src = self.states.row(r);
            let mut dst = self.scratch.row_mut(r);
            g.apply_into(
                src.as_slice().expect("standard layout"),
                dst.as_slice_mut().expect("standard layout"),
            );
        }
        general_mat_mul(
            C64::new(1.0, 0.0),
            &self.scratch,
            unitary_t,
            C64::new(0.0, 0.0),
            &mut self.product,
        );
        for (r, g) in frames.iter().enumerate() {
            let src = self.product.row(r);
            let mut dst = self.states.row_mut(r);
            g.adjoint().apply_into(
                src.as_slice().expect("standard layout"),
                dst.as_slice_mut().expect("standard layout"),
            );
        }
    }

    fn fidelities(&self, psi0: &StateVector) -> impl Iterator<Item = f64> + '_ {
        let reference = psi0.amplitudes().to_vec();
        self.states
            .rows()
            .into_iter()
            .map(move |row| inner(&reference, row.as_slice().expect("standard layout")).norm_sqr())
    }
}

/// Per-run fidelity series, `records[run][sample]`.
type RunRecords = Vec<Vec<f64>>;

/// Stepwise evolution of a batch of runs, one generator per run.
fn evolve_batch<R: Rng>(
    cache: &PropagatorCache,
    spec: &SchemeSpec,
    psi0: &StateVector,
    n_steps: usize,
    stride: usize,
    rngs: &mut [R],
) -> RunRecords {
    let mut batch = Batch::new(psi0, rngs.len());
    let n_records = n_steps / stride + 1;
    let mut records: RunRecords = vec![Vec::with_capacity(n_records); rngs.len()];
    let mut gens: Vec<_> = rngs.iter_mut().map(|r| spec.frames(r)).collect();
    let mut frames = Vec::with_capacity(gens.len());
    let push = |records: &mut RunRecords, batch: &Batch| {
        for (rec, f) in records.iter_mut().zip(batch.fidelities(psi0)) {
            rec.push(f);
        }
    };
    push(&mut records, &batch);
    for j in 1..=n_steps {
        frames.clear();
        frames.extend(gens.iter_mut().map(|g| g.next().expect("infinite generator")));
        batch.step(&frames, &cache.step_unitary_t);
        if j % stride == 0 {
            push(&mut records, &batch);
        }
    }
    records
}

/// Cycle-wise embedded evolution: `state <- r_m^dag U_c r_m state`.
fn evolve_embedded_batch<R: Rng>(
    data: &CycleData,
    psi0: &StateVector,
    n_cycles: usize,
    cycle_stride: usize,
    rngs: &mut [R],
) -> RunRecords {
    let n = data.cycle.n_qubits();
    let mut batch = Batch::new(psi0, rngs.len());
    let mut records: RunRecords = vec![Vec::with_capacity(n_cycles / cycle_stride + 1); rngs.len()];
    let push = |records: &mut RunRecords, batch: &Batch| {
        for (rec, f) in records.iter_mut().zip(batch.fidelities(psi0)) {
            rec.push(f);
        }
    };
    push(&mut records, &batch);
    let mut frames = Vec::with_capacity(rngs.len());
    for m in 1..=n_cycles {
        frames.clear();
        frames.extend(rngs.iter_mut().map(|r| PauliString::sample_uniform(r, n)));
        batch.step(&frames, &data.unitary_t);
        if m % cycle_stride == 0 {
            push(&mut records, &batch);
        }
    }
    records
}

fn times(n_records: usize, stride: usize, step: f64) -> Vec<f64> {
    (0..n_records).map(|i| (i * stride) as f64 * step).collect()
}

fn single_run_trace(records: RunRecords, stride: usize, step: f64) -> FidelityTrace {
    let mean = records.into_iter().next().expect("one run");
    FidelityTrace {
        times: times(mean.len(), stride, step),
        std_error: vec![0.0; mean.len()],
        mean_fidelity: mean,
        n_runs: 1,
    }
}

/// One run of `n_steps` steps; fidelity `|<psi0|state>|^2` at `t = 0` and
/// every `record_stride` steps.
pub fn evolve<R: Rng>(
    cache: &PropagatorCache,
    spec: &SchemeSpec,
    psi0: &StateVector,
    n_steps: usize,
    record_stride: usize,
    rng: &mut R,
) -> Result<FidelityTrace> {
    check_run_args(cache, spec, psi0, n_steps, record_stride)?;
    let records = evolve_batch(cache, spec, psi0, n_steps, record_stride, std::slice::from_mut(rng));
    Ok(single_run_trace(records, record_stride, cache.step))
}

/// Final state of one run after `n_steps` steps.
pub fn propagate<R: Rng>(
    cache: &PropagatorCache,
    spec: &SchemeSpec,
    psi0: &StateVector,
    n_steps: usize,
    rng: &mut R,
) -> Result<StateVector> {
    check_run_args(cache, spec, psi0, n_steps, 1)?;
    let mut batch = Batch::new(psi0, 1);
    let mut frames = spec.frames(rng);
    let mut current = Vec::with_capacity(1);
    for _ in 0..n_steps {
        current.clear();
        current.push(frames.next().expect("infinite generator"));
        batch.step(&current, &cache.step_unitary_t);
    }
    Ok(StateVector::from_amplitudes_unchecked(batch.states.row(0).to_vec()))
}

/// Embedded scheme one cycle at a time. Consumes `rng` exactly like the
/// stepwise embedded frame generator, so both paths see the same `r_m`.
pub fn evolve_embedded_fast<R: Rng>(
    cache: &PropagatorCache,
    psi0: &StateVector,
    n_cycles: usize,
    rng: &mut R,
) -> Result<FidelityTrace> {
    let data = cache
        .cycle
        .as_ref()
        .ok_or_else(|| Error::invalid("propagator cache has no cycle"))?;
    if psi0.dim() != cache.dim() {
        return Err(Error::DimensionMismatch {
            expected: cache.dim(),
            found: psi0.dim(),
        });
    }
    if n_cycles == 0 {
        return Err(Error::invalid("need at least one cycle"));
    }
    let records = evolve_embedded_batch(data, psi0, n_cycles, 1, std::slice::from_mut(rng));
    Ok(single_run_trace(records, data.cycle.len(), cache.step))
}

/// Mean and standard error over `n_runs` seeded runs.
///
/// Deterministic schemes are evolved once (`std_error = 0`, `n_runs = 1`).
/// The embedded scheme takes the cycle-wise fast path when the cache holds
/// the cycle and the record stride is a whole number of cycles.
pub fn monte_carlo(
    cache: &PropagatorCache,
    spec: &SchemeSpec,
    psi0: &StateVector,
    n_steps: usize,
    record_stride: usize,
    n_runs: usize,
    master_seed: u64,
) -> Result<FidelityTrace> {
    check_run_args(cache, spec, psi0, n_steps, record_stride)?;
    if n_runs == 0 {
        return Err(Error::invalid("need at least one run"));
    }
    if !spec.kind().is_stochastic() {
        let mut rng = run_rng(master_seed, 0);
        return evolve(cache, spec, psi0, n_steps, record_stride, &mut rng);
    }

    let fast = match (spec.kind(), &cache.cycle) {
        (SchemeKind::Embedded, Some(data))
            if spec.cycle() == Some(&data.cycle)
                && record_stride % data.cycle.len() == 0
                && n_steps % data.cycle.len() == 0 =>
        {
            Some(data)
        }
        _ => None,
    };

    let n_batches = n_runs.div_ceil(MC_BATCH);
    let per_batch: Vec<RunRecords> = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let runs = b * MC_BATCH..((b + 1) * MC_BATCH).min(n_runs);
            let mut rngs: Vec<ChaCha8Rng> = runs.map(|r| run_rng(master_seed, r)).collect();
            match fast {
                Some(data) => {
                    let n = data.cycle.len();
                    evolve_embedded_batch(data, psi0, n_steps / n, record_stride / n, &mut rngs)
                }
                None => evolve_batch(cache, spec, psi0, n_steps, record_stride, &mut rngs),
            }
        })
        .collect();
    let runs: Vec<Vec<f64>> = per_batch.into_iter().flatten().collect();

    let n_records = runs[0].len();
    let n = n_runs as f64;
    let mut mean = vec![0.0; n_records];
    let mut std_error = vec![0.0; n_records];
    for i in 0..n_records {
        let m = runs.iter().map(|r| r[i]).sum::<f64>() / n;
        mean[i] = m;
        if n_runs > 1 {
            let var = runs.iter().map(|r| (r[i] - m).powi(2)).sum::<f64>() / (n - 1.0);
            std_error[i] = (var / n).sqrt();
        }
    }
    Ok(FidelityTrace {
        times: times(n_records, record_stride, cache.step),
        mean_fidelity: mean,
        std_error,
        n_runs,
    })
}
