//! Acceptance suite. Runs every criterion at full scale, prints one PASS/FAIL
//! line each and exits non-zero if any failed.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use alrisk::harness::config::ExperimentConfig;
use alrisk::harness::experiments::{run_experiment, ALB_EXPERIMENT};
use alrisk::harness::oracle_check::{run_oracle_check, OracleReport};
use alrisk::harness::results::{summarize, to_csv, ResultSet};
use alrisk::rng::{substream, unit_f64};
use alrisk::{
    lure_constants, lure_estimate, pool_empirical_risk, pure_estimate, sample_trajectory, LabeledPool, ProposalRule,
};

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run(name: &str, workers: usize) -> (ResultSet, Duration) {
    let mut cfg = config(name);
    cfg.workers = Some(workers);
    let start = Instant::now();
    let set = run_experiment(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
    (set, start.elapsed())
}

/// Per-trajectory values of one `(experiment, estimator, M)` group, in trajectory order.
fn column(set: &ResultSet, experiment: &str, estimator: &str, m: usize) -> Vec<f64> {
    set.rows
        .iter()
        .filter(|r| r.experiment == experiment && r.estimator == estimator && r.m == m)
        .map(|r| r.bias)
        .collect()
}

fn values(set: &ResultSet, experiment: &str, estimator: &str, m: usize) -> Vec<f64> {
    set.rows
        .iter()
        .filter(|r| r.experiment == experiment && r.estimator == estimator && r.m == m)
        .map(|r| r.value)
        .collect()
}

fn oracle_criterion(name: &'static str, report: &OracleReport, prefix: &str, extra: &str) -> Outcome {
    let count = report.count(prefix);
    let failed = report.failure_count(prefix);
    let mut detail = format!("{count} checks, {failed} failed{extra}");
    if let Some(f) = report.failures().find(|c| c.check.starts_with(prefix)) {
        detail.push_str(&format!("; first: {f}"));
    }
    Outcome {
        name,
        passed: count > 0 && failed == 0,
        detail,
    }
}

fn oracle_grid(out: &mut Vec<Outcome>) {
    let cfg = config("oracle.toml");
    let start = Instant::now();
    let report = run_oracle_check(&cfg).expect("oracle grid");
    let elapsed = start.elapsed();

    let kinds = ["uniform", "boltzmann", "epsilon_greedy", "optimal_loss", "geometric_boltzmann"];
    let missing: Vec<_> = kinds
        .iter()
        .filter(|k| !report.checks.iter().any(|c| c.proposal == **k && c.check == "unbiased_pure"))
        .collect();
    let mut unbiased = oracle_criterion(
        "exact unbiasedness",
        &report,
        "unbiased_",
        &format!(", {} pools, {:.2?}", report.cases, elapsed),
    );
    unbiased.passed &= missing.is_empty() && elapsed < Duration::from_secs(10);
    if !missing.is_empty() {
        unbiased.detail.push_str(&format!("; no checks for {missing:?}"));
    }
    out.push(unbiased);
    out.push(oracle_criterion("E[v_m] = 1", &report, "lure_weight_mean", ""));
    out.push(oracle_criterion("variance formulas", &report, "variance_decomposition", ""));
    out.push(oracle_criterion("variance ordering", &report, "variance_ordering", ""));
    out.push(oracle_criterion("partial-support bias", &report, "partial_support_bias", ""));
}

fn lure_constant_sums() -> Outcome {
    let mut worst = 0.0f64;
    let mut worst_at = (0, 0);
    for n in 2..=1000usize {
        for m in 1..n {
            let c = lure_constants(m, n).expect("constants");
            let sum: f64 = c.c.iter().sum();
            let rel = (sum - m as f64).abs() / m as f64;
            if rel > worst {
                worst = rel;
                worst_at = (m, n);
            }
        }
    }
    Outcome {
        name: "sum of c_m = M",
        passed: worst <= 1e-12,
        detail: format!("worst relative error {worst:.2e} at M={}, N={}", worst_at.0, worst_at.1),
    }
}

fn optimal_exactness() -> Outcome {
    const CASES: u64 = 10_000;
    let start = Instant::now();
    let rule = ProposalRule::optimal_loss();
    let mut worst = 0.0f64;
    for case in 0..CASES {
        let mut rng = substream(2024, case);
        let n = rng.gen_range(2..=40);
        let losses: Vec<f64> = (0..n).map(|_| 5.0 * (1.0 - unit_f64(&mut rng))).collect();
        let m = rng.gen_range(1..=n);
        let pool = LabeledPool::from_losses(losses).expect("pool");
        let r_hat = pool_empirical_risk(&pool).expect("risk");
        let traj = sample_trajectory(&pool, &rule, m, rng.gen()).expect("trajectory");
        for value in [pure_estimate(&traj).unwrap().value, lure_estimate(&traj).unwrap().value] {
            worst = worst.max((value - r_hat).abs() / r_hat.abs().max(1.0));
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        name: "optimal-proposal exactness",
        passed: worst <= 1e-10 && elapsed < Duration::from_secs(5),
        detail: format!("{CASES} cases, worst deviation {worst:.2e}, {elapsed:.2?}"),
    }
}

fn fig2a() -> Outcome {
    let (set, elapsed) = run("bias.toml", 8);
    let mut failures = Vec::new();
    let mut naive_z = Vec::new();
    let mut unbiased_z = 0.0f64;
    for m in (10..=100).step_by(10) {
        let a = set.find("bias_fixed_function", "naive", m).expect("naive aggregate");
        let z = a.mean_bias / a.se_bias;
        naive_z.push(z);
        if m <= 50 && !(a.mean_bias > 0.0 && z > 3.0) {
            failures.push(format!("naive M={m} z={z:.2}"));
        }
        for est in ["pure", "lure"] {
            let a = set.find("bias_fixed_function", est, m).expect("aggregate");
            let z = a.mean_bias / a.se_bias;
            unbiased_z = unbiased_z.max(z.abs());
            if z.abs() > 3.0 {
                failures.push(format!("{est} M={m} z={z:.2}"));
            }
        }
    }
    let slow = elapsed >= Duration::from_secs(120);
    let min_naive = naive_z[..5].iter().cloned().fold(f64::INFINITY, f64::min);
    Outcome {
        name: "bias of a fixed model",
        passed: failures.is_empty() && !slow,
        detail: format!(
            "naive min z (M<=50) {min_naive:.1}, PURE/LURE max |z| {unbiased_z:.2}, {elapsed:.2?}{}",
            if failures.is_empty() { String::new() } else { format!("; {failures:?}") }
        ),
    }
}

fn fig3a() -> Outcome {
    let (set, elapsed) = run("train.toml", 8);
    let mut failures = Vec::new();
    let mut weakest = f64::INFINITY;
    for m in (10..=60).step_by(10) {
        let lure = values(&set, "downstream_training", "lure", m);
        let naive = values(&set, "downstream_training", "naive", m);
        assert_eq!(lure.len(), naive.len());
        let gaps: Vec<f64> = lure
            .iter()
            .zip(&naive)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| a - b)
            .collect();
        let (mean, _, se) = summarize(&gaps);
        let z = -mean / se;
        weakest = weakest.min(z);
        if !(mean < 0.0 && z > 2.0) {
            failures.push(format!("M={m} gap {mean:.3e} z={z:.2}"));
        }
    }
    let slow = elapsed >= Duration::from_secs(300);
    Outcome {
        name: "downstream training",
        passed: failures.is_empty() && !slow && set.excluded == 0,
        detail: format!(
            "LURE below unweighted by at least {weakest:.1} paired SE, {} excluded, {elapsed:.2?}{}",
            set.excluded,
            if failures.is_empty() { String::new() } else { format!("; {failures:?}") }
        ),
    }
}

/// Per-trajectory means over the M grid of `-bias`, the sign convention of
/// both B_OFB and ALB.
fn pooled_over_grid(set: &ResultSet, experiment: &str, estimator: &str, grid: &[usize]) -> Vec<f64> {
    let columns: Vec<Vec<f64>> = grid.iter().map(|&m| column(set, experiment, estimator, m)).collect();
    (0..columns[0].len())
        .map(|k| -columns.iter().map(|c| c[k]).sum::<f64>() / grid.len() as f64)
        .collect()
}

fn ofb_signs() -> Outcome {
    let mut failures = Vec::new();
    let mut notes = Vec::new();

    let poly = config("ofb_polynomial.toml");
    let (set, _) = run("ofb_polynomial.toml", 8);
    for &m in &poly.m_grid {
        let b_ofb: Vec<f64> = column(&set, "ofb", "lure", m).iter().map(|b| -b).collect();
        let alb: Vec<f64> = column(&set, ALB_EXPERIMENT, "naive", m).iter().map(|b| -b).collect();
        let (ofb_mean, _, ofb_se) = summarize(&b_ofb);
        let (alb_mean, _, alb_se) = summarize(&alb);
        notes.push(format!("poly M={m}: B_OFB z={:.1}, ALB z={:.1}", ofb_mean / ofb_se, alb_mean / alb_se));
        if !(ofb_mean > 2.0 * ofb_se) {
            failures.push(format!("poly M={m} B_OFB {ofb_mean:.3e} se {ofb_se:.3e}"));
        }
        if !(alb_mean < -2.0 * alb_se) {
            failures.push(format!("poly M={m} ALB {alb_mean:.3e} se {alb_se:.3e}"));
        }
    }

    let linear = config("ofb_linear.toml");
    let (set, _) = run("ofb_linear.toml", 8);
    let (ofb_mean, _, _) = summarize(&pooled_over_grid(&set, "ofb", "lure", &linear.m_grid));
    let (alb_mean, _, _) = summarize(&pooled_over_grid(&set, ALB_EXPERIMENT, "naive", &linear.m_grid));
    notes.push(format!("linear: |B_OFB| {:.4} vs |ALB| {:.4}", ofb_mean.abs(), alb_mean.abs()));
    if !(ofb_mean.abs() < alb_mean.abs()) {
        failures.push(format!("linear |B_OFB| {:.4} >= |ALB| {:.4}", ofb_mean.abs(), alb_mean.abs()));
    }
    Outcome {
        name: "overfitting bias sign structure",
        passed: failures.is_empty(),
        detail: format!(
            "{}{}",
            notes.join("; "),
            if failures.is_empty() { String::new() } else { format!("; FAILED {failures:?}") }
        ),
    }
}

fn determinism() -> Outcome {
    let mut failures = Vec::new();
    let names = [
        "bias.toml",
        "bias_n197.toml",
        "train.toml",
        "ofb_polynomial.toml",
        "ofb_linear.toml",
        "ofb_disjoint.toml",
        "sweep.toml",
    ];
    for name in names {
        let (one, _) = run(name, 1);
        let (eight, _) = run(name, 8);
        if to_csv(&one) != to_csv(&eight) {
            failures.push(name.to_string());
        }
    }
    let mut reports = Vec::new();
    for workers in [1, 8] {
        let mut cfg = config("oracle.toml");
        cfg.workers = Some(workers);
        reports.push(run_oracle_check(&cfg).expect("oracle grid").to_csv());
    }
    if reports[0] != reports[1] {
        failures.push("oracle.toml".to_string());
    }
    Outcome {
        name: "determinism across worker counts",
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{} configs byte-identical with 1 and 8 workers", names.len() + 1)
        } else {
            format!("output differs for {failures:?}")
        },
    }
}

fn consistency_trend() -> Outcome {
    let cfg = config("sweep.toml");
    let (set, _) = run("sweep.toml", 8);
    let mut failures = Vec::new();
    let mut trail = BTreeMap::new();
    for est in ["pure", "lure"] {
        let mse: Vec<f64> = cfg
            .m_grid
            .iter()
            .map(|&m| set.find("sweep", est, m).expect("aggregate").mse)
            .collect();
        for (i, pair) in mse.windows(2).enumerate() {
            if pair[1] > 1.1 * pair[0] {
                failures.push(format!("{est} M={}: {:.3e} -> {:.3e}", cfg.m_grid[i + 1], pair[0], pair[1]));
            }
        }
        trail.insert(est, mse.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>().join(" > "));
    }
    Outcome {
        name: "consistency trend",
        passed: failures.is_empty() && cfg.trajectories >= 2000,
        detail: format!(
            "MSE pure {}, lure {}{}",
            trail["pure"],
            trail["lure"],
            if failures.is_empty() { String::new() } else { format!("; {failures:?}") }
        ),
    }
}

fn main() -> ExitCode {
    let mut outcomes = Vec::new();
    oracle_grid(&mut outcomes);
    outcomes.push(lure_constant_sums());
    outcomes.push(optimal_exactness());
    outcomes.push(fig2a());
    outcomes.push(fig3a());
    outcomes.push(ofb_signs());
    outcomes.push(determinism());
    outcomes.push(consistency_trend());

    println!();
    for o in &outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("\nacceptance: {} passed, {failed} failed\n", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
