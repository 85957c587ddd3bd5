use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use alrisk::harness::config::ExperimentConfig;
use alrisk::harness::experiments::run_experiment;
use alrisk::{sample_trajectory, validate_trajectory, LabeledPool, ProposalRule, ScoreSource};

#[test]
fn optimal_first_draw_follows_losses() {
    let losses = vec![1.0, 2.0, 3.0, 4.0, 10.0];
    let total: f64 = losses.iter().sum();
    let pool = LabeledPool::from_losses(losses.clone()).unwrap();
    let rule = ProposalRule::optimal_loss();
    let draws = 100_000u64;
    let mut counts = vec![0u64; losses.len()];
    for seed in 0..draws {
        let traj = sample_trajectory(&pool, &rule, 1, seed).unwrap();
        counts[traj.steps()[0].index] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(&losses)
        .map(|(&c, l)| {
            let expected = draws as f64 * l / total;
            (c as f64 - expected).powi(2) / expected
        })
        .sum();
    let p = 1.0 - ChiSquared::new((losses.len() - 1) as f64).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi2 {stat}, p {p}, counts {counts:?}");
}

#[test]
fn same_seed_same_trajectory() {
    let pool = LabeledPool::from_losses((1..=30).map(f64::from).collect()).unwrap();
    let rule = ProposalRule::boltzmann(0.2, ScoreSource::Fixed((0..30).map(f64::from).collect())).unwrap();
    let a = sample_trajectory(&pool, &rule, 12, 7).unwrap();
    let b = sample_trajectory(&pool, &rule, 12, 7).unwrap();
    let c = sample_trajectory(&pool, &rule, 12, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.indices(), c.indices());
}

fn rule_strategy(n: usize) -> impl Strategy<Value = ProposalRule> {
    prop_oneof![
        Just(ProposalRule::uniform()),
        Just(ProposalRule::optimal_loss()),
        (0.1f64..4.0, prop::collection::vec(0.0f64..3.0, n))
            .prop_map(|(t, s)| ProposalRule::boltzmann(t, ScoreSource::Fixed(s)).unwrap()),
        (0.05f64..0.95).prop_map(|e| ProposalRule::epsilon_greedy(e, ScoreSource::Distance).unwrap()),
        (0.1f64..3.0).prop_map(|b| ProposalRule::geometric_boltzmann(b).unwrap()),
    ]
}

fn case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, ProposalRule, usize, u64)> {
    (2usize..25).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(0.01f64..5.0, n),
            rule_strategy(n),
            1..=n,
            any::<u64>(),
        )
    })
}

proptest! {
    #[test]
    fn sampled_trajectories_are_valid((xs, losses, rule, m, seed) in case()) {
        let n = xs.len();
        let pool = LabeledPool::new(xs.into_iter().map(|x| vec![x]).collect(), vec![0.0; n])
            .unwrap()
            .with_losses(losses)
            .unwrap();
        let traj = sample_trajectory(&pool, &rule, m, seed).unwrap();
        prop_assert_eq!(traj.len(), m);
        prop_assert!(validate_trajectory(&traj, &pool).is_ok());
    }
}

fn bias_run(proposal: &str) -> alrisk::harness::results::ResultSet {
    let cfg = ExperimentConfig::from_toml_str(&format!(
        "experiment = \"bias_fixed_function\"\n\
         root_seed = 3\n\
         trajectories = 1000\n\
         m_grid = [10, 30, 50, 70, 90]\n\
         [proposal]\n{proposal}\n"
    ))
    .unwrap();
    run_experiment(&cfg).unwrap()
}

#[test]
fn lure_spread_not_above_pure() {
    for proposal in ["kind = \"uniform\"", "kind = \"geometric_boltzmann\"\nbeta = 1.0"] {
        let set = bias_run(proposal);
        for m in [10, 30, 50, 70, 90] {
            let pure = set.find("bias_fixed_function", "pure", m).unwrap().sd;
            let lure = set.find("bias_fixed_function", "lure", m).unwrap().sd;
            assert!(lure.powi(2) <= 1.05 * pure.powi(2), "{proposal} M={m}: {lure} vs {pure}");
        }
    }
}
