//! Closed-form decay laws, lower bounds and the fits used to compare them
//! with simulated traces.
//!
//! All quantities use `hbar = tau = 1`. Approximations are clamped at zero;
//! bounds are returned as-is, since a negative lower bound is still valid.

use std::io::{self, Write};

use num_complex::Complex64 as C64;

use crate::engine::FidelityTrace;
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, DenseOperator};
use crate::model::{energy_uncertainty, StateVector};

/// Header of the bounds CSV.
pub const BOUNDS_CSV_HEADER: &str =
    "time_tau,eq5_bound,eq6_bound,eq7_bound,eq3_approx,eq8_approx,parec_rate_pred,embedded_rate_pred";

/// Default deficit window for slope fits.
pub const DEFAULT_DEFICIT_WINDOW: (f64, f64) = (1e-6, 1e-1);

/// Minimum number of points a fit accepts.
pub const MIN_FIT_POINTS: usize = 10;

/// Deficits must exceed this many standard errors to enter a fit.
pub const NOISE_FLOOR_SIGMAS: f64 = 3.0;

const SCALAR_TOL: f64 = 1e-12;

/// `1 - (t * delta_h0)^2` for free evolution.
pub fn free_decay_approx(delta_h0: f64, times: &[f64]) -> Vec<f64> {
    quadratic_approx(delta_h0, times)
}

/// `1 - (t * delta_hbar)^2` at cycle boundaries of a deterministic cycle.
pub fn det_decay_approx(delta_hbar: f64, times: &[f64]) -> Vec<f64> {
    quadratic_approx(delta_hbar, times)
}

fn quadratic_approx(delta: f64, times: &[f64]) -> Vec<f64> {
    times.iter().map(|t| (1.0 - (t * delta).powi(2)).max(0.0)).collect()
}

/// Golden-rule rate of the randomized scheme, `dt * delta_h0^2`.
pub fn parec_rate(delta_h0: f64, dt: f64) -> f64 {
    dt * delta_h0 * delta_h0
}

/// Rate of the embedded scheme, the PAREC rate of `H_bar` at interval `t_c`.
pub fn embedded_rate(delta_hbar: f64, t_c: f64) -> f64 {
    parec_rate(delta_hbar, t_c)
}

/// `1 - rate * t`, clamped at zero.
pub fn linear_rate_approx(rate: f64, times: &[f64]) -> Vec<f64> {
    times.iter().map(|t| (1.0 - rate * t).max(0.0)).collect()
}

/// `exp(-(t * delta)^2)`.
pub fn gaussian_decay(delta: f64, times: &[f64]) -> Vec<f64> {
    times.iter().map(|t| (-(t * delta).powi(2)).exp()).collect()
}

/// `exp(-rate * t)`.
pub fn exponential_decay(rate: f64, times: &[f64]) -> Vec<f64> {
    times.iter().map(|t| (-rate * t).exp()).collect()
}

/// Root of `e^x - x = 2`, beyond which the residual-norm bound is vacuous.
pub fn critical_x() -> f64 {
    let f = |x: f64| x.exp() - x - 2.0;
    let (mut lo, mut hi) = (1.0_f64, 1.5_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `e^x - 1 - x`, accurate for small `x`.
fn exp_minus_linear(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let mut term = x * x / 2.0;
        let mut sum = 0.0_f64;
        let mut k = 2.0;
        while term.abs() > f64::EPSILON * sum.abs() * 0.01 && k < 40.0 {
            sum += term;
            k += 1.0;
            term *= x / k;
        }
        sum
    } else {
        x.exp_m1() - x
    }
}

/// Upper bound on the residual Hamiltonian norm,
/// `-ln(2 - e^x + x) / t_c` with `x = h0_norm * t_c`.
pub fn residual_norm_bound(h0_norm: f64, t_c: f64) -> Result<f64> {
    check_nonneg("h0_norm", h0_norm)?;
    check_positive("t_c", t_c)?;
    let x = h0_norm * t_c;
    let critical = critical_x();
    if x >= critical {
        return Err(Error::VacuousBound { x, critical });
    }
    Ok(-(-exp_minus_linear(x)).ln_1p() / t_c)
}

/// Leading small-`x` form of [`residual_norm_bound`], `h0_norm^2 t_c / 2`.
pub fn residual_norm_bound_small(h0_norm: f64, t_c: f64) -> f64 {
    h0_norm * h0_norm * t_c / 2.0
}

/// Deterministic-cycle bound `1 - (h0_norm^2 t t_c / 2)^2`.
pub fn det_bound(h0_norm: f64, t_c: f64, times: &[f64]) -> Vec<f64> {
    let b = residual_norm_bound_small(h0_norm, t_c);
    times.iter().map(|t| 1.0 - (b * t).powi(2)).collect()
}

/// Randomized-scheme bound `1 - h0_norm^2 t dt`.
pub fn parec_bound(h0_norm: f64, dt: f64, times: &[f64]) -> Vec<f64> {
    times.iter().map(|t| 1.0 - h0_norm * h0_norm * t * dt).collect()
}

/// Embedded-scheme bound `1 - (h0_norm^2 t_c / 2)^2 t t_c`.
pub fn embedded_bound(h0_norm: f64, t_c: f64, times: &[f64]) -> Vec<f64> {
    let b = residual_norm_bound_small(h0_norm, t_c);
    times.iter().map(|t| 1.0 - b * b * t * t_c).collect()
}

/// Initial-state decay rate of the Pauli-twirled channel,
/// `dt * sum_{P != 1} c_P^2 (1 - <psi|P|psi>^2)` with `H = sum_P c_P P`.
///
/// This is the exact leading-order rate of uniform Pauli-frame
/// randomization; it drops the cross terms `c_P c_Q` that `dt * Delta H^2`
/// keeps.
pub fn pauli_twirl_rate(h: &DenseOperator, psi: &StateVector, dt: f64) -> Result<f64> {
    let dim = h.dim();
    if psi.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: psi.dim(),
        });
    }
    let m = h.matrix();
    let amps = psi.amplitudes();
    let mut hv = vec![C64::new(0.0, 0.0); dim];
    let mut pv = vec![C64::new(0.0, 0.0); dim];
    let mut total = 0.0;
    for x in 0..dim {
        // Tr(P_{x,z} H) and <psi|P_{x,z}|psi> for all z, up to the common i^{|x&z|}
        // factor, which drops out of the squared moduli.
        for c in 0..dim {
            hv[c] = m[[c, c ^ x]];
            pv[c] = amps[c ^ x].conj() * amps[c];
        }
        walsh_hadamard(&mut hv);
        walsh_hadamard(&mut pv);
        for z in 0..dim {
            if x == 0 && z == 0 {
                continue;
            }
            let coef = hv[z].norm() / dim as f64;
            let ev = pv[z].norm();
            total += coef * coef * (1.0 - ev * ev);
        }
    }
    Ok(dt * total)
}

fn walsh_hadamard(v: &mut [C64]) {
    let mut h = 1;
    while h < v.len() {
        for i in (0..v.len()).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (v[j], v[j + h]);
                v[j] = a + b;
                v[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {v} must be finite and nonnegative")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} = {v} must be finite and positive")))
    }
}

/// Scalars feeding every approximation and bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundInputs {
    pub h0_norm: f64,
    pub delta_h0: f64,
    pub delta_hbar: f64,
    pub hbar_norm: f64,
    pub t_c: f64,
    pub dt: f64,
}

impl BoundInputs {
    pub fn new(h0_norm: f64, delta_h0: f64, delta_hbar: f64, hbar_norm: f64, t_c: f64, dt: f64) -> Result<Self> {
        for (name, v) in [
            ("h0_norm", h0_norm),
            ("delta_h0", delta_h0),
            ("delta_hbar", delta_hbar),
            ("hbar_norm", hbar_norm),
        ] {
            check_nonneg(name, v)?;
        }
        check_positive("t_c", t_c)?;
        check_positive("dt", dt)?;
        if delta_h0 > h0_norm * (1.0 + SCALAR_TOL) + SCALAR_TOL {
            return Err(Error::invalid(format!("delta_h0 {delta_h0} exceeds h0_norm {h0_norm}")));
        }
        if delta_hbar > hbar_norm * (1.0 + SCALAR_TOL) + SCALAR_TOL {
            return Err(Error::invalid(format!(
                "delta_hbar {delta_hbar} exceeds hbar_norm {hbar_norm}"
            )));
        }
        Ok(Self {
            h0_norm,
            delta_h0,
            delta_hbar,
            hbar_norm,
            t_c,
            dt,
        })
    }

    /// Norms and uncertainties of `h0` and `hbar` in `psi`.
    pub fn from_operators(
        h0: &DenseOperator,
        hbar: &DenseOperator,
        psi: &StateVector,
        t_c: f64,
        dt: f64,
    ) -> Result<Self> {
        Self::new(
            spectral_norm(h0)?,
            energy_uncertainty(h0, psi)?,
            energy_uncertainty(hbar, psi)?,
            spectral_norm(hbar)?,
            t_c,
            dt,
        )
    }

    /// `x = h0_norm * t_c`.
    pub fn x(&self) -> f64 {
        self.h0_norm * self.t_c
    }

    pub fn parec_rate(&self) -> f64 {
        parec_rate(self.delta_h0, self.dt)
    }

    pub fn embedded_rate(&self) -> f64 {
        embedded_rate(self.delta_hbar, self.t_c)
    }
}

/// Every bound and approximation sampled on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsTable {
    pub times: Vec<f64>,
    pub det_bound: Vec<f64>,
    pub parec_bound: Vec<f64>,
    pub embedded_bound: Vec<f64>,
    pub det_approx: Vec<f64>,
    pub free_approx: Vec<f64>,
    pub parec_pred: Vec<f64>,
    pub embedded_pred: Vec<f64>,
}

impl BoundsTable {
    pub fn new(inputs: &BoundInputs, times: &[f64]) -> Self {
        Self {
            times: times.to_vec(),
            det_bound: det_bound(inputs.h0_norm, inputs.t_c, times),
            parec_bound: parec_bound(inputs.h0_norm, inputs.dt, times),
            embedded_bound: embedded_bound(inputs.h0_norm, inputs.t_c, times),
            det_approx: det_decay_approx(inputs.delta_hbar, times),
            free_approx: free_decay_approx(inputs.delta_h0, times),
            parec_pred: linear_rate_approx(inputs.parec_rate(), times),
            embedded_pred: linear_rate_approx(inputs.embedded_rate(), times),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{BOUNDS_CSV_HEADER}")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[i],
                self.det_bound[i],
                self.parec_bound[i],
                self.embedded_bound[i],
                self.det_approx[i],
                self.free_approx[i],
                self.parec_pred[i],
                self.embedded_pred[i],
            )?;
        }
        Ok(())
    }
}

/// Least-squares fit result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fit {
    pub value: f64,
    pub std_error: f64,
    pub n_points: usize,
}

/// Points `(t, 1 - f)` of the initial decay segment inside `window`.
///
/// Scanning stops at the first sample whose deficit exceeds the upper edge,
/// so revivals are never mixed into the fit. Samples at `t = 0` and deficits
/// within [`NOISE_FLOOR_SIGMAS`] standard errors of zero are skipped.
pub fn fit_points(trace: &FidelityTrace, window: (f64, f64)) -> Vec<(f64, f64)> {
    let (lo, hi) = window;
    let mut out = Vec::new();
    for i in 0..trace.len() {
        let t = trace.times[i];
        let d = 1.0 - trace.mean_fidelity[i];
        if d > hi {
            break;
        }
        if t > 0.0 && d >= lo && d > NOISE_FLOOR_SIGMAS * trace.std_error[i] {
            out.push((t, d));
        }
    }
    out
}

fn check_window(window: (f64, f64)) -> Result<()> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo && hi < 1.0) {
        return Err(Error::invalid(format!(
            "deficit window [{lo}, {hi}] must satisfy 0 < lo < hi < 1"
        )));
    }
    Ok(())
}

/// Slope of `ln(1 - f)` against `ln t` over the initial decay segment.
pub fn fit_loglog_slope(trace: &FidelityTrace, window: (f64, f64)) -> Result<Fit> {
    check_window(window)?;
    let pts: Vec<(f64, f64)> = fit_points(trace, window)
        .into_iter()
        .map(|(t, d)| (t.ln(), d.ln()))
        .collect();
    let n = pts.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            found: n,
            required: MIN_FIT_POINTS,
        });
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData {
            found: 1,
            required: MIN_FIT_POINTS,
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(Fit {
        value: slope,
        std_error: (ssr / (nf - 2.0) / sxx).sqrt(),
        n_points: n,
    })
}

/// Rate `Gamma` of `-ln f = Gamma t` through the origin over the initial
/// decay segment.
pub fn fit_decay_rate(trace: &FidelityTrace, window: (f64, f64)) -> Result<Fit> {
    check_window(window)?;
    let pts: Vec<(f64, f64)> = fit_points(trace, window)
        .into_iter()
        .map(|(t, d)| (t, -(-d).ln_1p()))
        .collect();
    let n = pts.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::InsufficientData {
            found: n,
            required: MIN_FIT_POINTS,
        });
    }
    let stt: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sty: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let rate = sty / stt;
    let ssr: f64 = pts.iter().map(|p| (p.1 - rate * p.0).powi(2)).sum();
    Ok(Fit {
        value: rate,
        std_error: (ssr / (n as f64 - 1.0) / stt).sqrt(),
        n_points: n,
    })
}
