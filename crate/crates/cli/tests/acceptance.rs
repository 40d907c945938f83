//! End-to-end acceptance checks. Runs every criterion, prints one
//! `PASS`/`FAIL` line each, and exits non-zero if any failed.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use bloatline_core::equilibrium::{self, existence_check, fixed_point_residual, target_for_delay_ratio};
use bloatline_core::experiments::{replicate, sweep_equilibrium, sweep_validation, SweepSpec};
use bloatline_core::fluid::{converge, derivatives, integrate, FluidIntegrator};
use bloatline_core::{FlowPopulation, FluidState, RedProfile, ScenarioConfig, StateHistory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn red_cfg(n_tcp: u32, n_ledbat: u32, min_th: f64, max_th: f64, max_p: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.flows = FlowPopulation { n_tcp, n_ledbat };
    cfg.red = Some(RedProfile {
        min_th_packets: min_th,
        max_th_packets: max_th,
        max_p,
        ..RedProfile::default()
    });
    cfg
}

fn anchor_configs() -> Vec<ScenarioConfig> {
    vec![
        red_cfg(1, 1, 10.0, 100.0, 0.1),
        red_cfg(1, 1, 10.0, 100.0, 1.0),
        red_cfg(5, 5, 10.0, 100.0, 0.1),
        red_cfg(5, 5, 30.0, 100.0, 0.5),
        red_cfg(3, 1, 50.0, 100.0, 1.0),
        red_cfg(1, 4, 20.0, 60.0, 0.3),
    ]
}

fn fair_share_anchor() -> Verdict {
    let want = 1.0 / (1.0 + 0.5f64.sqrt());
    let mut worst = 0.0f64;
    for cfg in anchor_configs() {
        let (c, eq) = target_for_delay_ratio(&cfg, 0.5).map_err(|e| e.to_string())?;
        let d = c.link.queue_delay_s(eq.q_star_packets);
        if (d - 0.5 * c.ledbat.target_s).abs() > 1e-9 {
            return Err(format!("target search missed: delay {d}, tau {}", c.ledbat.target_s));
        }
        worst = worst.max((eq.rho_star - want).abs());
    }
    check(worst <= 1e-6, format!("max |rho* - {want:.6}| = {worst:.2e} over 6 configs"))
}

fn monopoly_limit() -> Verdict {
    let mut lowest = f64::INFINITY;
    for cfg in anchor_configs() {
        let (_, eq) = target_for_delay_ratio(&cfg, 1.0 / 1.01).map_err(|e| e.to_string())?;
        lowest = lowest.min(eq.rho_star);
    }
    check(lowest > 0.9, format!("min rho*(tau = 1.01 delay(q*)) = {lowest:.4} over 6 configs"))
}

fn random_red(rng: &mut ChaCha8Rng) -> ScenarioConfig {
    let min_th = rng.gen_range(5.0..40.0);
    let max_th = rng.gen_range(min_th + 20.0..=100.0);
    let mut cfg = red_cfg(
        rng.gen_range(1..=5),
        rng.gen_range(1..=5),
        min_th,
        max_th,
        rng.gen_range(0.05..=1.0),
    );
    cfg.ledbat.target_s = rng.gen_range(0.05..0.6);
    cfg
}

fn dynamics_match_equilibrium() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut tested = 0;
    let mut unsettled = 0;
    while tested < 20 {
        let cfg = random_red(&mut rng);
        if !existence_check(&cfg).map_err(|e| e.to_string())? {
            continue;
        }
        tested += 1;
        let eq = equilibrium::solve(&cfg).map_err(|e| e.to_string())?;
        let (est, settled) =
            converge(&cfg, FluidState::default(), 1e-6, 2000.0).map_err(|e| e.to_string())?;
        if !settled {
            unsettled += 1;
        }
        let rel = |x: f64, target: f64| (x - target).abs() / target.abs().max(1.0);
        let s = est.state;
        let err = rel(s.w_packets, eq.w_star_packets)
            .max(rel(s.z_packets, eq.z_star_packets))
            .max(rel(s.q_packets, eq.q_star_packets));
        worst = worst.max(err);
    }
    check(
        worst <= 0.01,
        format!("max relative error {worst:.2e} over 20 scenarios ({unsettled} hit t_max)"),
    )
}

fn single_root() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut tested = 0;
    while tested < 100 {
        let cfg = random_red(&mut rng);
        if !existence_check(&cfg).map_err(|e| e.to_string())? {
            continue;
        }
        tested += 1;
        let max_th = cfg.red.unwrap().max_th_packets;
        let n = 10_000;
        let mut changes = 0;
        let mut prev = 0.0f64;
        for i in 0..=n {
            let r = fixed_point_residual(max_th * i as f64 / n as f64, &cfg).map_err(|e| e.to_string())?;
            if r == 0.0 {
                continue;
            }
            if prev != 0.0 && r.signum() != prev.signum() {
                changes += 1;
            }
            prev = r;
        }
        if changes != 1 {
            return Err(format!("{changes} sign changes for {:?}", cfg));
        }
    }
    Ok("exactly one sign change on a 10^4 grid for 100 configs".into())
}

fn empirical(cfg: &ScenarioConfig, reps: usize) -> Result<(f64, f64, f64), String> {
    let share = replicate(cfg, reps).map_err(|e| e.to_string())?;
    let rhos = share.runs.iter().map(|r| r.summary.rho_emp);
    let lo = rhos.clone().fold(f64::INFINITY, f64::min);
    let hi = rhos.fold(f64::NEG_INFINITY, f64::max);
    Ok((share.mean, lo, hi))
}

fn droptail_yield() -> Verdict {
    let mut cfg = ScenarioConfig::droptail();
    cfg.flows = FlowPopulation { n_tcp: 1, n_ledbat: 1 };
    cfg.ledbat.target_s = 0.1;
    let (mean, lo, hi) = empirical(&cfg, 10)?;
    check(mean > 0.9, format!("mean rho_emp {mean:.4} (range {lo:.4}..{hi:.4}, 10 runs)"))
}

fn red_reprioritization() -> Verdict {
    let mut cfg = red_cfg(1, 1, 10.0, 100.0, 0.1);
    cfg.ledbat.target_s = 0.5;
    let (mean, lo, hi) = empirical(&cfg, 10)?;
    check(mean < 0.7, format!("mean rho_emp {mean:.4} (range {lo:.4}..{hi:.4}, 10 runs)"))
}

fn validation_band() -> Verdict {
    let taus = vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.5];
    let mut worst = (0.0f64, 0, 0.0);
    let (mut err_refined, mut err_literal) = (0.0, 0.0);
    let mut table = Vec::new();
    for n in [1, 5] {
        let cfg = red_cfg(n, n, 10.0, 100.0, 0.1);
        let spec = SweepSpec::new(cfg, "ledbat.target_s", taus.clone(), 10).map_err(|e| e.to_string())?;
        let res = sweep_validation(&spec).map_err(|e| e.to_string())?;
        for row in &res.rows {
            let emp = row.empirical.as_ref().expect("validation row").mean;
            let e_ref = (row.rho_refined - emp).abs();
            err_refined += e_ref;
            err_literal += (row.equilibrium.rho_star - emp).abs();
            if e_ref > worst.0 {
                worst = (e_ref, n, row.value);
            }
            table.push(format!(
                "N={n} tau={:.2}: literal {:.3} refined {:.3} empirical {emp:.3}",
                row.value, row.equilibrium.rho_star, row.rho_refined
            ));
        }
    }
    for line in &table {
        println!("    {line}");
    }
    let detail = format!(
        "max |refined - emp| {:.3} (N={}, tau={}); total error refined {err_refined:.3} vs literal {err_literal:.3}",
        worst.0, worst.1, worst.2
    );
    check(worst.0 <= 0.1 && err_refined < err_literal, detail)
}

fn sharp_transition() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for max_p in [0.1, 1.0] {
        let cfg = red_cfg(1, 1, 10.0, 100.0, max_p);
        let d = cfg.link.queue_delay_s(10.0);
        let below: Vec<f64> = (1..=20).map(|i| d * i as f64 / 20.0).collect();
        let spec = SweepSpec::new(cfg.clone(), "ledbat.target_s", below, 1).map_err(|e| e.to_string())?;
        let res = sweep_equilibrium(&spec).map_err(|e| e.to_string())?;
        let min_below = res
            .rows
            .iter()
            .map(|r| r.equilibrium.rho_star)
            .fold(f64::INFINITY, f64::min);
        let at3 = SweepSpec::new(cfg, "ledbat.target_s", vec![3.0 * d], 1).map_err(|e| e.to_string())?;
        let rho3 = sweep_equilibrium(&at3).map_err(|e| e.to_string())?.rows[0].equilibrium.rho_star;
        ok &= min_below >= 0.99 && rho3 <= 0.75;
        notes.push(format!("max_p={max_p}: min rho* below {min_below:.4}, rho*(3d) {rho3:.4}"));
    }
    check(ok, notes.join("; "))
}

/// Ratio of successive step-halving differences on a smooth segment. The
/// segment resumes from a checkpoint, so its history already solves the
/// system and no derivative jump inherited from the constant pre-history
/// falls inside it; it must also stay clear of the queue clamps and of the
/// RED thresholds.
fn step_halving_ratio() -> Result<f64, String> {
    let mut cfg = red_cfg(1, 1, 10.0, 100.0, 0.1);
    cfg.ledbat.target_s = 0.5;
    let red = cfg.red.unwrap();
    let mut reference =
        FluidIntegrator::new(&cfg, FluidState::new(30.0, 2.0, 60.0, 30.0), 0.00125).map_err(|e| e.to_string())?;
    for _ in 0..800 {
        reference.step().map_err(|e| e.to_string())?;
    }
    let checkpoint = reference.checkpoint();
    let mut finals = Vec::new();
    for h in [0.005, 0.0025, 0.00125] {
        let mut it = FluidIntegrator::resume(&cfg, checkpoint.clone(), h).map_err(|e| e.to_string())?;
        for _ in 0..(2.0 / h).round() as u64 {
            it.step().map_err(|e| e.to_string())?;
            let s = it.state();
            let smooth = s.q_packets > 0.0
                && s.q_packets < cfg.link.buffer()
                && s.q_avg_packets > red.min_th_packets
                && s.q_avg_packets < red.max_th_packets;
            if !smooth {
                return Err(format!("segment not smooth at t={}: {s:?}", it.time()));
            }
        }
        finals.push(it.state());
    }
    let diff = |a: &FluidState, b: &FluidState| a.add(&b.scale(-1.0)).max_abs();
    Ok(diff(&finals[0], &finals[1]) / diff(&finals[1], &finals[2]))
}

fn derivative_residual() -> Result<f64, String> {
    let mut worst = 0.0f64;
    for cfg in anchor_configs() {
        let (c, eq) = target_for_delay_ratio(&cfg, 0.5).map_err(|e| e.to_string())?;
        let s = FluidState::new(eq.w_star_packets, eq.z_star_packets, eq.q_star_packets, eq.q_star_packets);
        let d = derivatives(10.0, &s, &StateHistory::constant(s), &c).map_err(|e| e.to_string())?;
        worst = worst.max(d.max_abs());
    }
    Ok(worst)
}

fn ewma_relaxation() -> Result<f64, String> {
    // lone LEDBAT at its target with RED out of reach: q is frozen
    let mut cfg = ScenarioConfig::default();
    cfg.flows = FlowPopulation { n_tcp: 0, n_ledbat: 1 };
    cfg.ledbat.target_s = 0.3;
    cfg.horizon_s = 20.0;
    cfg.red.as_mut().unwrap().min_th_packets = 90.0;
    let q = cfg.ledbat.target_packets(&cfg.link);
    let z = cfg.link.capacity_pkts_per_s() * cfg.link.rtt_s(q);
    let rate = cfg.red.unwrap().ewma_rate();
    let traj = integrate(&cfg, FluidState::new(0.0, z, q, 0.0), 0.001).map_err(|e| e.to_string())?;
    Ok(traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| (s.q_avg_packets - q * (1.0 - (-rate * t).exp())).abs())
        .fold(0.0, f64::max))
}

fn numerical_hygiene() -> Verdict {
    let ratio = step_halving_ratio()?;
    let resid = derivative_residual()?;
    let ewma = ewma_relaxation()?;
    check(
        ratio >= 8.0 && resid <= 1e-9 && ewma <= 1e-6,
        format!("step-halving ratio {ratio:.2}, residual at equilibrium {resid:.2e}, EWMA error {ewma:.2e}"),
    )
}

fn run_bin(args: &[&str], out: &Path, workers: &str) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_bloatline"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("BLOATLINE_WORKERS", workers)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!(
            "{args:?} failed: {}",
            String::from_utf8_lossy(&status.stderr)
        ));
    }
    Ok(())
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs: [&[&str]; 5] = [
        &["equilibrium", "--set", "ledbat.target_s=0.3"],
        &["sweep", "--set", "flows.n_tcp=2"],
        &["validate", "--reps", "3", "--seed", "11", "--set", "horizon_s=60"],
        &["converge", "--starts", "8", "--seed", "5", "--set", "horizon_s=60"],
        &["timeplot", "--seed", "9", "--set", "horizon_s=20", "--set", "ledbat.target_s=0.4"],
    ];
    let mut compared = 0;
    for (i, args) in runs.iter().enumerate() {
        let a = tmp.path().join(format!("{i}a"));
        let b = tmp.path().join(format!("{i}b"));
        run_bin(args, &a, "1")?;
        run_bin(args, &b, "4")?;
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        if fa.is_empty() || fa != fb {
            return Err(format!("{} output differs between runs", args[0]));
        }
        compared += fa.len();
    }
    Ok(format!("{compared} CSV files byte-identical across 5 subcommands (1 vs 4 workers)"))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("fair-share anchor", fair_share_anchor),
        ("monopoly limit", monopoly_limit),
        ("dynamics vs equilibrium", dynamics_match_equilibrium),
        ("unique fixed point", single_root),
        ("DropTail yield", droptail_yield),
        ("RED reprioritization", red_reprioritization),
        ("validation band", validation_band),
        ("sharp transition", sharp_transition),
        ("numerical hygiene", numerical_hygiene),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = f();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("criterion {:>2} {name}: PASS ({secs:.1}s) {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({secs:.1}s) {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
