//! The perturbed quantum memory: coupling lattice, Ising/Heisenberg
//! perturbation, the initial coherent state and the scalar observables
//! (energy uncertainty, norms) that feed the analytic decay formulas.
//!
//! Units: `hbar = 1` and the pulse interval `tau = 1`, so every coefficient is
//! a dimensionless multiple of `1 / tau`.

use std::fmt::Write as _;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::DenseOperator;
use crate::pauli::{Pauli, PauliString};

/// Largest register for which dense states and operators are built.
pub const MAX_DENSE_QUBITS: usize = 12;

/// Half-width of the uniform coupling distribution, `sqrt(3) * 1e-3`, which
/// gives a standard deviation of `1e-3 / tau`.
pub const DEFAULT_COUPLING_BOUND: f64 = 1.732_050_807_568_877_2e-3;

const NORM_TOL: f64 = 1e-12;

/// Dense amplitude vector of an `n`-qubit register.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    /// Validates power-of-two length and unit norm (to `1e-12`).
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        let s = Self::from_amplitudes_unchecked(amps);
        s.check_dim()?;
        let norm = s.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("state norm {norm} is not 1")));
        }
        Ok(s)
    }

    /// Rescales `amps` to unit norm.
    pub fn normalized(amps: Vec<C64>) -> Result<Self> {
        let s = Self::from_amplitudes_unchecked(amps);
        s.check_dim()?;
        let norm = s.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        Ok(Self::from_amplitudes_unchecked(
            s.amps.into_iter().map(|z| z / norm).collect(),
        ))
    }

    /// Wraps amplitudes without any normalization check (operator images,
    /// intermediate products).
    pub fn from_amplitudes_unchecked(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    /// Computational basis state `|index>`.
    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let dim = 1usize << n_qubits;
        assert!(index < dim, "basis index out of range");
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[index] = C64::new(1.0, 0.0);
        Self { amps }
    }

    fn check_dim(&self) -> Result<()> {
        if self.amps.is_empty() || !self.amps.len().is_power_of_two() {
            return Err(Error::invalid(format!(
                "state length {} is not a power of two",
                self.amps.len()
            )));
        }
        Ok(())
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn n_qubits(&self) -> usize {
        self.amps.len().trailing_zeros() as usize
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> C64 {
        inner(&self.amps, &other.amps)
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr()
    }
}

pub(crate) fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Undirected qubit coupling graph with edges stored as `(k, l)`, `k < l`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CouplingGraph {
    n_qubits: usize,
    edges: Vec<(usize, usize)>,
}

impl CouplingGraph {
    pub fn new(n_qubits: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(k, l) in &edges {
            if !(k < l && l < n_qubits) {
                return Err(Error::invalid(format!(
                    "edge ({k}, {l}) must satisfy k < l < {n_qubits}"
                )));
            }
            if !seen.insert((k, l)) {
                return Err(Error::invalid(format!("duplicate edge ({k}, {l})")));
            }
        }
        Ok(Self { n_qubits, edges })
    }

    /// Nearest-neighbour rectangular lattice; qubit `r * cols + c`.
    pub fn grid(rows: usize, cols: usize) -> Self {
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let k = r * cols + c;
                if c + 1 < cols {
                    edges.push((k, k + 1));
                }
                if r + 1 < rows {
                    edges.push((k, k + cols));
                }
            }
        }
        Self {
            n_qubits: rows * cols,
            edges,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
}

/// How the single-qubit detunings are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DeltaMode {
    /// Same uniform distribution as the couplings.
    #[default]
    Sample,
    /// All detunings zero.
    Zero,
}

/// Static perturbation parameters: detuning per qubit, Heisenberg coupling per edge.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationParams {
    pub delta: Vec<f64>,
    pub j_coupling: Vec<f64>,
}

impl PerturbationParams {
    pub fn max_abs(&self) -> f64 {
        self.delta
            .iter()
            .chain(&self.j_coupling)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Draws every coupling (edge order), then every detuning (qubit order),
/// i.i.d. uniform on `[-bound, bound]`. With [`DeltaMode::Zero`] no detunings
/// are drawn, so the couplings are the same in both modes.
pub fn sample_params<R: Rng + ?Sized>(
    rng: &mut R,
    bound: f64,
    graph: &CouplingGraph,
    delta_mode: DeltaMode,
) -> Result<PerturbationParams> {
    if !(bound >= 0.0) || !bound.is_finite() {
        return Err(Error::invalid(format!("coupling bound {bound} must be >= 0")));
    }
    let dist = Uniform::new_inclusive(-bound, bound);
    let j_coupling = (0..graph.edges().len()).map(|_| dist.sample(rng)).collect();
    let delta = match delta_mode {
        DeltaMode::Sample => (0..graph.n_qubits()).map(|_| dist.sample(rng)).collect(),
        DeltaMode::Zero => vec![0.0; graph.n_qubits()],
    };
    Ok(PerturbationParams { delta, j_coupling })
}

/// Real-weighted sum of phase-free Pauli strings; Hermitian by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliSumHamiltonian {
    n_qubits: usize,
    terms: Vec<(f64, PauliString)>,
}

impl PauliSumHamiltonian {
    /// Repeated strings are merged, exact zeros dropped.
    pub fn new(n_qubits: usize, terms: Vec<(f64, PauliString)>) -> Result<Self> {
        let mut merged: Vec<(f64, PauliString)> = Vec::with_capacity(terms.len());
        let mut index: std::collections::HashMap<PauliString, usize> = std::collections::HashMap::new();
        for (c, p) in terms {
            if p.n_qubits() != n_qubits {
                return Err(Error::QubitMismatch {
                    expected: n_qubits,
                    found: p.n_qubits(),
                });
            }
            if p.phase_exp() != 0 {
                return Err(Error::invalid(format!(
                    "hamiltonian term {p} carries a phase"
                )));
            }
            if !c.is_finite() {
                return Err(Error::invalid("non-finite coefficient"));
            }
            match index.get(&p) {
                Some(&i) => merged[i].0 += c,
                None => {
                    index.insert(p.clone(), merged.len());
                    merged.push((c, p));
                }
            }
        }
        merged.retain(|(c, _)| *c != 0.0);
        Ok(Self {
            n_qubits,
            terms: merged,
        })
    }

    pub fn zero(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            terms: Vec::new(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `sum |c_i|`, an upper bound on the spectral norm.
    pub fn coefficient_l1(&self) -> f64 {
        self.terms.iter().map(|(c, _)| c.abs()).sum()
    }

    /// `d^dag H d`, termwise sign flips.
    pub fn conjugate_by_pauli(&self, d: &PauliString) -> Result<Self> {
        let terms = self
            .terms
            .iter()
            .map(|(c, p)| Ok((*c * f64::from(PauliString::conj_sign(d, p)?), p.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n_qubits: self.n_qubits,
            terms,
        })
    }

    pub fn to_dense(&self) -> Result<DenseOperator> {
        if self.n_qubits > MAX_DENSE_QUBITS {
            return Err(Error::invalid(format!(
                "{} qubits exceeds the dense limit of {MAX_DENSE_QUBITS}",
                self.n_qubits
            )));
        }
        let dim = 1usize << self.n_qubits;
        let mut m = Array2::<C64>::zeros((dim, dim));
        let mut col = vec![C64::new(0.0, 0.0); dim];
        let mut out = vec![C64::new(0.0, 0.0); dim];
        for b in 0..dim {
            col[b] = C64::new(1.0, 0.0);
            for (c, p) in &self.terms {
                p.apply_into(&col, &mut out);
                let target = b ^ p.x_bits() as usize;
                m[[target, b]] += out[target] * *c;
            }
            col[b] = C64::new(0.0, 0.0);
        }
        DenseOperator::hermitian(m)
    }

    /// One `"coefficient pauli_string"` line per term.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (c, p) in &self.terms {
            let _ = writeln!(s, "{c} {p}");
        }
        s
    }

    pub fn from_text(n_qubits: usize, text: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse_err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let c: f64 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err("bad coefficient".into()))?;
            let p: PauliString = parts
                .next()
                .ok_or_else(|| parse_err("missing pauli string".into()))?
                .parse()
                .map_err(|e: Error| parse_err(e.to_string()))?;
            terms.push((c, p));
        }
        Self::new(n_qubits, terms)
    }
}

/// `H/hbar = sum_k delta_k Z_k + sum_(k,l) J_kl (X_k X_l + Y_k Y_l + Z_k Z_l)`.
pub fn build_hamiltonian(
    params: &PerturbationParams,
    graph: &CouplingGraph,
) -> Result<PauliSumHamiltonian> {
    let n = graph.n_qubits();
    if params.delta.len() != n || params.j_coupling.len() != graph.edges().len() {
        return Err(Error::invalid(format!(
            "parameters sized ({}, {}) do not match graph ({n} qubits, {} edges)",
            params.delta.len(),
            params.j_coupling.len(),
            graph.edges().len()
        )));
    }
    let mut terms = Vec::new();
    for (k, &d) in params.delta.iter().enumerate() {
        if d != 0.0 {
            terms.push((d, PauliString::single(n, k, Pauli::Z)));
        }
    }
    for (&(k, l), &j) in graph.edges().iter().zip(&params.j_coupling) {
        if j == 0.0 {
            continue;
        }
        for sym in [Pauli::X, Pauli::Y, Pauli::Z] {
            let mut p = PauliString::identity(n);
            p.set(k, sym);
            p.set(l, sym);
            terms.push((j, p));
        }
    }
    PauliSumHamiltonian::new(n, terms)
}

/// Raw amplitudes `(2/D)^(1/4) e^{-i pi m} e^{-pi (m - D/2)^2 / D}`, not renormalized.
pub fn coherent_state_amplitudes(n_qubits: usize) -> Vec<C64> {
    let dim = 1usize << n_qubits;
    let d = dim as f64;
    let pref = (2.0 / d).powf(0.25);
    (0..dim)
        .map(|m| {
            let env = pref * (-std::f64::consts::PI * (m as f64 - d / 2.0).powi(2) / d).exp();
            // e^{-i pi m} = (-1)^m exactly
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            C64::new(sign * env, 0.0)
        })
        .collect()
}

/// The Gaussian coherent state, renormalized to unit norm.
pub fn initial_coherent_state(n_qubits: usize) -> Result<StateVector> {
    if n_qubits == 0 || n_qubits > MAX_DENSE_QUBITS {
        return Err(Error::invalid(format!(
            "coherent state needs 1..={MAX_DENSE_QUBITS} qubits"
        )));
    }
    StateVector::normalized(coherent_state_amplitudes(n_qubits))
}

/// Anything that can act on a dense amplitude vector as a Hermitian operator.
pub trait Observable {
    fn dim(&self) -> usize;
    fn apply_to(&self, psi: &[C64]) -> Vec<C64>;
}

impl Observable for PauliSumHamiltonian {
    fn dim(&self) -> usize {
        1usize << self.n_qubits
    }

    fn apply_to(&self, psi: &[C64]) -> Vec<C64> {
        let mut acc = vec![C64::new(0.0, 0.0); psi.len()];
        let mut buf = vec![C64::new(0.0, 0.0); psi.len()];
        for (c, p) in &self.terms {
            p.apply_into(psi, &mut buf);
            acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b * *c);
        }
        acc
    }
}

impl Observable for DenseOperator {
    fn dim(&self) -> usize {
        DenseOperator::dim(self)
    }

    fn apply_to(&self, psi: &[C64]) -> Vec<C64> {
        self.matrix().dot(&ndarray::ArrayView1::from(psi)).to_vec()
    }
}

fn check_obs_dim<H: Observable + ?Sized>(h: &H, psi: &StateVector) -> Result<()> {
    if h.dim() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: psi.dim(),
        });
    }
    Ok(())
}

/// `<psi|H|psi>`.
pub fn expectation<H: Observable + ?Sized>(h: &H, psi: &StateVector) -> Result<f64> {
    check_obs_dim(h, psi)?;
    Ok(inner(psi.amplitudes(), &h.apply_to(psi.amplitudes())).re)
}

/// `Delta H = sqrt(<H^2> - <H>^2)`, evaluated as `|| (H - <H>) psi ||`.
pub fn energy_uncertainty<H: Observable + ?Sized>(h: &H, psi: &StateVector) -> Result<f64> {
    check_obs_dim(h, psi)?;
    let amps = psi.amplitudes();
    let hpsi = h.apply_to(amps);
    let mean = inner(amps, &hpsi).re;
    Ok(hpsi
        .iter()
        .zip(amps)
        .map(|(a, b)| (a - b * mean).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eig, spectral_norm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn grid_edge_counts() {
        assert_eq!(CouplingGraph::grid(3, 3).edges().len(), 12);
        assert_eq!(CouplingGraph::grid(1, 2).edges(), &[(0, 1)]);
        assert!(CouplingGraph::grid(1, 1).edges().is_empty());
    }

    #[test]
    fn graph_validation() {
        assert!(CouplingGraph::new(3, vec![(0, 1), (0, 1)]).is_err());
        assert!(CouplingGraph::new(3, vec![(1, 0)]).is_err());
        assert!(CouplingGraph::new(3, vec![(0, 3)]).is_err());
        assert!(CouplingGraph::new(3, vec![(0, 2), (1, 2)]).is_ok());
    }

    #[test]
    fn heisenberg_pair_spectrum() {
        let g = CouplingGraph::grid(1, 2);
        let j = 0.37;
        let params = PerturbationParams {
            delta: vec![0.0, 0.0],
            j_coupling: vec![j],
        };
        let h = build_hamiltonian(&params, &g).unwrap();
        assert_eq!(h.terms().len(), 3);
        let s = hermitian_eig(&h.to_dense().unwrap()).unwrap();
        for (l, e) in s.eigenvalues.iter().zip([-3.0 * j, j, j, j]) {
            assert!((l - e).abs() < 1e-14);
        }
    }

    #[test]
    fn trivial_hamiltonians() {
        let g = CouplingGraph::grid(2, 2);
        let zero = PerturbationParams {
            delta: vec![0.0; 4],
            j_coupling: vec![0.0; 4],
        };
        assert!(build_hamiltonian(&zero, &g).unwrap().is_zero());

        let g1 = CouplingGraph::grid(1, 1);
        let params = PerturbationParams {
            delta: vec![0.25],
            j_coupling: vec![],
        };
        let h = build_hamiltonian(&params, &g1).unwrap();
        assert_eq!(h.terms(), &[(0.25, p("Z"))]);

        let bad = PerturbationParams {
            delta: vec![0.0; 3],
            j_coupling: vec![0.0; 4],
        };
        assert!(build_hamiltonian(&bad, &g).is_err());
    }

    #[test]
    fn sampling_statistics_and_determinism() {
        let g = CouplingGraph::grid(3, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut js = Vec::new();
        while js.len() < 10_000 {
            let params = sample_params(&mut rng, DEFAULT_COUPLING_BOUND, &g, DeltaMode::Sample).unwrap();
            assert!(params.max_abs() <= DEFAULT_COUPLING_BOUND);
            js.extend(params.j_coupling);
        }
        let n = js.len() as f64;
        let mean = js.iter().sum::<f64>() / n;
        let var = js.iter().map(|j| (j - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / 1e-6 - 1.0).abs() < 0.1, "variance {var}");

        let zero = sample_params(&mut rng, 0.0, &g, DeltaMode::Sample).unwrap();
        assert_eq!(zero.max_abs(), 0.0);

        let a = sample_params(&mut ChaCha8Rng::seed_from_u64(9), 1e-3, &g, DeltaMode::Sample).unwrap();
        let b = sample_params(&mut ChaCha8Rng::seed_from_u64(9), 1e-3, &g, DeltaMode::Sample).unwrap();
        assert_eq!(a, b);
        let c = sample_params(&mut ChaCha8Rng::seed_from_u64(9), 1e-3, &g, DeltaMode::Zero).unwrap();
        assert_eq!(a.j_coupling, c.j_coupling);
        assert!(c.delta.iter().all(|d| *d == 0.0));
        assert!(sample_params(&mut rng, -1.0, &g, DeltaMode::Sample).is_err());
    }

    #[test]
    fn coherent_state_shape() {
        let psi = initial_coherent_state(9).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-14);
        let mags: Vec<f64> = psi.amplitudes().iter().map(|z| z.norm()).collect();
        let argmax = mags
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmax, 256);
        for k in 1..256 {
            assert!((mags[256 + k] - mags[256 - k]).abs() < 1e-16);
        }
        // Riemann sum of the squared Gaussian: (2/D)^(1/2) * sqrt(D/2) = 1
        let raw: f64 = coherent_state_amplitudes(9).iter().map(|z| z.norm_sqr()).sum();
        assert!((raw.sqrt() - 1.0).abs() < 1e-3, "{raw}");
        assert!(initial_coherent_state(13).is_err());
    }

    #[test]
    fn energy_uncertainty_examples() {
        let delta = 0.3;
        let h = PauliSumHamiltonian::new(1, vec![(delta, p("Z"))]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = StateVector::new(vec![C64::new(s, 0.0), C64::new(s, 0.0)]).unwrap();
        assert!((energy_uncertainty(&h, &plus).unwrap() - delta).abs() < 1e-15);
        assert_eq!(energy_uncertainty(&h, &StateVector::basis(1, 1)).unwrap(), 0.0);
        for theta in [0.1, 0.7, 1.2, 2.9] {
            let psi = StateVector::new(vec![
                C64::new(f64::cos(theta), 0.0),
                C64::new(f64::sin(theta), 0.0),
            ])
            .unwrap();
            let got = energy_uncertainty(&h, &psi).unwrap();
            assert!((got - delta * (2.0 * theta).sin().abs()).abs() < 1e-15);
        }
    }

    #[test]
    fn conjugation_examples() {
        let h = PauliSumHamiltonian::new(1, vec![(0.2, p("Z"))]).unwrap();
        let c = h.conjugate_by_pauli(&p("X")).unwrap();
        assert_eq!(c.terms(), &[(-0.2, p("Z"))]);

        let j = 0.5;
        let h = PauliSumHamiltonian::new(
            2,
            vec![(j, p("XX")), (j, p("YY")), (j, p("ZZ"))],
        )
        .unwrap();
        let c = h.conjugate_by_pauli(&p("XI")).unwrap();
        assert_eq!(c.terms(), &[(j, p("XX")), (-j, p("YY")), (-j, p("ZZ"))]);
        assert_eq!(h.conjugate_by_pauli(&p("II")).unwrap(), h);
    }

    #[test]
    fn duplicate_terms_merge() {
        let h = PauliSumHamiltonian::new(
            2,
            vec![(0.5, p("XX")), (0.25, p("XX")), (1.0, p("ZI")), (-1.0, p("ZI"))],
        )
        .unwrap();
        assert_eq!(h.terms(), &[(0.75, p("XX"))]);
        assert!(PauliSumHamiltonian::new(2, vec![(1.0, p("-XX"))]).is_err());
        assert!(PauliSumHamiltonian::new(2, vec![(1.0, p("X"))]).is_err());
    }

    #[test]
    fn text_export_round_trips() {
        let h = PauliSumHamiltonian::new(3, vec![(0.00123, p("ZII")), (-2.5e-4, p("XXI"))]).unwrap();
        let text = h.to_text();
        assert_eq!(text.lines().next().unwrap(), "0.00123 ZII");
        assert_eq!(PauliSumHamiltonian::from_text(3, &text).unwrap(), h);
        assert!(PauliSumHamiltonian::from_text(3, "abc ZII").is_err());
    }

    #[test]
    fn uncertainty_below_norm() {
        let g = CouplingGraph::grid(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let params = sample_params(&mut rng, 0.5, &g, DeltaMode::Sample).unwrap();
            let h = build_hamiltonian(&params, &g).unwrap();
            let dense = h.to_dense().unwrap();
            let norm = spectral_norm(&dense).unwrap();
            assert!(norm <= h.coefficient_l1() + 1e-12);
            let psi = initial_coherent_state(4).unwrap();
            let du = energy_uncertainty(&h, &psi).unwrap();
            assert!(du <= norm + 1e-12);
            // dense and pauli-sum paths agree
            assert!((energy_uncertainty(&dense, &psi).unwrap() - du).abs() < 1e-14);
        }
    }
}
