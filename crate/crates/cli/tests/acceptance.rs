//! End-to-end acceptance suite on the shipped 9-qubit configuration.
//!
//! Prints one status line per criterion and exits non-zero if any fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ddsim::analysis::{fit_decay_rate, fit_loglog_slope, residual_norm_bound, DEFAULT_DEFICIT_WINDOW};
use ddsim::engine::run_rng;
use ddsim::linalg::spectral_norm;
use ddsim::schemes::first_order_sign_sum;
use ddsim::{
    construct_oa, det_bound, embedded_bound, energy_uncertainty, evolve, evolve_embedded_fast,
    local_pauli_terms, oa_cycle_9q, parec_bound, propagate, verify_orthogonal_array, FidelityTrace,
    OaVerdict, PauliString, PauliSumHamiltonian, PropagatorCache, SchemeKind, SchemeSpec,
    StateVector,
};
use num_complex::Complex64 as C64;

use ddsim_cli::{run_experiment, simulate, ExperimentConfig, ExperimentOutput};

type Outcome = Result<String, String>;

fn config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper_fig3.json")
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    format!("error: {e}")
}

fn decoupling_certificate() -> Outcome {
    let start = Instant::now();
    let oa = construct_oa(4, 32, 9).map_err(err)?;
    let verdict = verify_orthogonal_array(&oa, 2).map_err(err)?;
    let cycle = oa_cycle_9q(1.0).map_err(err)?;
    let terms = local_pauli_terms(9, 2);
    let one_local = terms.iter().filter(|p| p.weight() == 1).count();
    let two_local = terms.iter().filter(|p| p.weight() == 2).count();
    let mut nonzero = 0;
    for p in &terms {
        if first_order_sign_sum(&cycle, p).map_err(err)? != 0 {
            nonzero += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        verdict == OaVerdict::Pass { lambda: 2 }
            && one_local == 27
            && two_local == 324
            && nonzero == 0
            && elapsed < Duration::from_secs(1),
        format!(
            "OA verdict {verdict:?}, {one_local}+{two_local} terms, {nonzero} nonzero sign sums, {:.3}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn suppression(out: &ExperimentOutput, build_time: Duration) -> Outcome {
    let inst = &out.instance;
    let hbar = inst.cache.residual().ok_or("no residual Hamiltonian")?;
    let h0_norm = spectral_norm(&inst.h0).map_err(err)?;
    let hbar_norm = spectral_norm(hbar).map_err(err)?;
    let delta_hbar = energy_uncertainty(hbar, &inst.psi0).map_err(err)?;
    let bound = residual_norm_bound(h0_norm, 32.0).map_err(err)?;
    let ratio = hbar_norm / h0_norm;
    check(
        delta_hbar <= hbar_norm && hbar_norm <= bound && ratio < 0.1 && build_time < Duration::from_secs(60),
        format!(
            "dHbar {delta_hbar:.3e} <= |Hbar| {hbar_norm:.3e} <= bound {bound:.3e}, |Hbar|/|H0| = {ratio:.2e}, built in {:.1}s",
            build_time.as_secs_f64()
        ),
    )
}

fn sample(t: &FidelityTrace, time: f64) -> Result<(f64, f64), String> {
    let i = t.index_of(time).ok_or_else(|| format!("time {time} not recorded"))?;
    Ok((t.mean_fidelity[i], t.std_error[i]))
}

fn trace(out: &ExperimentOutput, kind: SchemeKind) -> Result<&FidelityTrace, String> {
    out.trace(kind).ok_or_else(|| format!("no {kind} trace"))
}

fn ordering(out: &ExperimentOutput, elapsed: Duration) -> Outcome {
    let bb = trace(out, SchemeKind::BangBang)?;
    let emb = trace(out, SchemeKind::Embedded)?;
    let parec = trace(out, SchemeKind::Parec)?;
    let free = trace(out, SchemeKind::Free)?;
    let (mut checked, mut violations) = (0, Vec::new());
    for i in 0..bb.len() {
        let deficit = 1.0 - bb.mean_fidelity[i];
        if !(1e-4..=1e-1).contains(&deficit) {
            continue;
        }
        let t = bb.times[i];
        let (fb, sb) = (bb.mean_fidelity[i], bb.std_error[i]);
        let (fe, se) = sample(emb, t)?;
        let (fp, sp) = sample(parec, t)?;
        let (ff, _) = sample(free, t)?;
        checked += 1;
        let ok = fe - fb > 3.0 * (se * se + sb * sb).sqrt() && fb - fp > 3.0 * (sb * sb + sp * sp).sqrt() && fp > ff;
        if !ok {
            violations.push(t);
        }
    }
    check(
        checked >= 10 && violations.is_empty() && elapsed <= Duration::from_secs(600),
        format!(
            "embedded > bang-bang > parec > free at {checked} times (violations at {violations:?}), {:.0}s for all schemes",
            elapsed.as_secs_f64()
        ),
    )
}

fn parec_rate(out: &ExperimentOutput) -> Outcome {
    let fit = fit_decay_rate(trace(out, SchemeKind::Parec)?, (1e-3, 1e-1)).map_err(err)?;
    let s = &out.instance.scalars;
    let rel = fit.value / s.parec_rate - 1.0;
    check(
        rel.abs() <= 0.15,
        format!(
            "fitted {:.4e} vs tau*dH0^2 = {:.4e} ({:+.1}%); exact twirl rate {:.4e} ({:+.1}%)",
            fit.value,
            s.parec_rate,
            100.0 * rel,
            s.parec_twirl_rate,
            100.0 * (fit.value / s.parec_twirl_rate - 1.0)
        ),
    )
}

fn embedded_rate(out: &ExperimentOutput) -> Outcome {
    let fit = fit_decay_rate(trace(out, SchemeKind::Embedded)?, DEFAULT_DEFICIT_WINDOW).map_err(err)?;
    let s = &out.instance.scalars;
    let predicted = s.embedded_rate.ok_or("no embedded rate")?;
    let rel = fit.value / predicted - 1.0;
    check(
        rel.abs() <= 0.25,
        format!(
            "fitted {:.4e} vs 32 tau dHbar^2 = {predicted:.4e} ({:+.1}%) over {} points",
            fit.value,
            100.0 * rel,
            fit.n_points
        ),
    )
}

fn quadratic_law(t: &FidelityTrace, delta: f64) -> (usize, f64) {
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for i in 0..t.len() {
        let d = 1.0 - t.mean_fidelity[i];
        if t.times[i] == 0.0 {
            continue;
        }
        if d > 0.05 {
            break;
        }
        n += 1;
        worst = worst.max((d / (t.times[i] * delta).powi(2) - 1.0).abs());
    }
    (n, worst)
}

fn short_time_law(out: &ExperimentOutput) -> Outcome {
    let s = &out.instance.scalars;
    let (nb, wb) = quadratic_law(trace(out, SchemeKind::BangBang)?, s.delta_hbar.ok_or("no dHbar")?);
    let (nf, wf) = quadratic_law(trace(out, SchemeKind::Free)?, s.delta_h0);
    check(
        nb >= 10 && nf >= 10 && wb <= 0.1 && wf <= 0.1,
        format!(
            "bang-bang worst deviation {:.2}% over {nb} points, free {:.2}% over {nf} points",
            100.0 * wb,
            100.0 * wf
        ),
    )
}

fn slopes(out: &ExperimentOutput) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (kind, target) in [
        (SchemeKind::BangBang, 2.0),
        (SchemeKind::Free, 2.0),
        (SchemeKind::Parec, 1.0),
        (SchemeKind::Embedded, 1.0),
    ] {
        let fit = fit_loglog_slope(trace(out, kind)?, DEFAULT_DEFICIT_WINDOW).map_err(err)?;
        ok &= (fit.value - target).abs() <= 0.3;
        parts.push(format!("{kind} {:.3}", fit.value));
    }
    check(ok, parts.join(", "))
}

fn count_violations(t: &FidelityTrace, bound: &[f64], sigmas: f64, max_deficit: f64) -> (usize, usize) {
    let mut checked = 0;
    let mut bad = 0;
    for i in 0..t.len() {
        if 1.0 - t.mean_fidelity[i] > max_deficit {
            continue;
        }
        checked += 1;
        if t.mean_fidelity[i] + sigmas * t.std_error[i] < bound[i] {
            bad += 1;
        }
    }
    (checked, bad)
}

fn bounds_hold(out: &ExperimentOutput) -> Outcome {
    let s = &out.instance.scalars;
    let t_c = s.t_c.ok_or("no cycle")?;
    let bb = trace(out, SchemeKind::BangBang)?;
    let parec = trace(out, SchemeKind::Parec)?;
    let emb = trace(out, SchemeKind::Embedded)?;
    let det = count_violations(bb, &det_bound(s.h0_norm, t_c, &bb.times), 0.0, 1.0);
    let par = count_violations(parec, &parec_bound(s.h0_norm, s.dt, &parec.times), 3.0, 0.1);
    let em = count_violations(emb, &embedded_bound(s.h0_norm, t_c, &emb.times), 3.0, 1.0);
    check(
        det.1 + par.1 + em.1 == 0,
        format!(
            "violations: deterministic {}/{}, parec {}/{}, embedded {}/{}",
            det.1, det.0, par.1, par.0, em.1, em.0
        ),
    )
}

fn single_qubit_closed_forms() -> Result<f64, String> {
    let delta = 0.0123;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let plus = StateVector::new(vec![C64::new(s, 0.0), C64::new(s, 0.0)]).map_err(err)?;
    let z: PauliString = "Z".parse().map_err(err)?;
    let h = PauliSumHamiltonian::new(1, vec![(delta, z.clone())]).map_err(err)?;
    let cache = PropagatorCache::from_hamiltonian(&h, 1.0).map_err(err)?;
    let mut worst: f64 = 0.0;

    let free = evolve(&cache, &SchemeSpec::free(1, 1.0), &plus, 500, 1, &mut run_rng(0, 0)).map_err(err)?;
    for (t, f) in free.times.iter().zip(&free.mean_fidelity) {
        worst = worst.max((f - (delta * t).cos().powi(2)).abs());
    }

    // PAREC: every frame flips or keeps the sign of Z, a random walk S_n.
    let spec = SchemeSpec::parec(1, 1.0);
    let parec = evolve(&cache, &spec, &plus, 500, 1, &mut run_rng(4, 0)).map_err(err)?;
    let frames = ddsim::schemes::frame_sequence(&spec, 500, &mut run_rng(4, 0));
    let mut walk = 0i64;
    for (j, f) in parec.mean_fidelity.iter().enumerate() {
        worst = worst.max((f - (delta * walk as f64).cos().powi(2)).abs());
        if let Some(g) = frames.get(j) {
            walk += i64::from(PauliString::conj_sign(g, &z).map_err(err)?);
        }
    }

    let echo = ddsim::DecouplingCycle::new(vec!["I".parse().map_err(err)?, "X".parse().map_err(err)?], 1.0).map_err(err)?;
    let cache = cache.with_cycle(&echo).map_err(err)?;
    let bb = evolve(&cache, &SchemeSpec::bang_bang(echo), &plus, 500, 2, &mut run_rng(0, 0)).map_err(err)?;
    for f in &bb.mean_fidelity {
        worst = worst.max((f - 1.0).abs());
    }
    Ok(worst)
}

fn small_config() -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::load(&config_path()).map_err(err)?;
    cfg.schemes = serde_json::from_str(
        r#"[{"scheme": "free", "n_steps": 64},
            {"scheme": "bang_bang", "n_steps": 64},
            {"scheme": "parec", "n_steps": 64, "record_stride": 4},
            {"scheme": "embedded", "n_steps": 320}]"#,
    )
    .map_err(err)?;
    cfg.n_runs = 20;
    Ok(cfg)
}

fn oracle_suite(out: &ExperimentOutput) -> Outcome {
    let start = Instant::now();
    let closed = single_qubit_closed_forms()?;

    let inst = &out.instance;
    let cycle = inst.cache.cycle().ok_or("no cycle")?.clone();
    let spec = SchemeSpec::embedded(cycle);
    let slow = evolve(&inst.cache, &spec, &inst.psi0, 32 * 50, 32, &mut run_rng(9, 0)).map_err(err)?;
    let fast = evolve_embedded_fast(&inst.cache, &inst.psi0, 50, &mut run_rng(9, 0)).map_err(err)?;
    let fast_dev = slow
        .mean_fidelity
        .iter()
        .zip(&fast.mean_fidelity)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));

    let end = propagate(&inst.cache, &SchemeSpec::parec(9, 1.0), &inst.psi0, 100_000, &mut run_rng(9, 1)).map_err(err)?;
    let drift = (end.norm() - 1.0).abs();

    let cfg = small_config()?;
    let dir = tempfile::tempdir().map_err(err)?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_experiment(&cfg, &a).map_err(err)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .map_err(err)?
        .install(|| run_experiment(&cfg, &b))
        .map_err(err)?;
    let mut identical = true;
    let mut files = 0;
    for entry in std::fs::read_dir(&a).map_err(err)? {
        let name = entry.map_err(err)?.file_name();
        files += 1;
        identical &= std::fs::read(a.join(&name)).map_err(err)? == std::fs::read(b.join(&name)).map_err(err)?;
    }
    let elapsed = start.elapsed();
    check(
        closed <= 1e-12 && fast_dev <= 1e-10 && drift < 1e-10 && identical && files == 7 && elapsed < Duration::from_secs(60),
        format!(
            "closed forms {closed:.1e}, fast path {fast_dev:.1e}, norm drift {drift:.1e}, {files} files identical: {identical}, {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn main() -> ExitCode {
    // Honour `cargo test -- <filter>` loosely: skip entirely when filtered to something else.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return ExitCode::SUCCESS;
    }

    let mut results: Vec<(u32, &str, Outcome)> = vec![(1, "decoupling certificate", decoupling_certificate())];

    let start = Instant::now();
    let cfg = match ExperimentConfig::load(&config_path()) {
        Ok(c) => c,
        Err(e) => {
            println!("cannot load config: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let build_start = Instant::now();
    let built = ddsim_cli::Instance::build(&cfg);
    let build_time = build_start.elapsed();
    drop(built);
    let out = match simulate(&cfg) {
        Ok(o) => o,
        Err(e) => {
            println!("simulation failed: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let sim_time = start.elapsed();

    results.push((2, "suppression chain", suppression(&out, build_time)));
    results.push((3, "scheme ordering", ordering(&out, sim_time)));
    results.push((4, "randomized decay rate", parec_rate(&out)));
    results.push((5, "embedded decay rate", embedded_rate(&out)));
    results.push((6, "short-time quadratic law", short_time_law(&out)));
    results.push((7, "power-law slopes", slopes(&out)));
    results.push((8, "lower bounds", bounds_hold(&out)));
    results.push((9, "oracles and invariants", oracle_suite(&out)));

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
