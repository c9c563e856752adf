use fogq_core::config::ScenarioConfig;
use fogq_core::harness::{derive_seed, median, Stream};
use fogq_core::solvers::{train, Enumerated, FiniteMdp, LearningConfig, QTable};
use fogq_core::{OffloadAction, OffloadMdp, RewardWeights, Scenario};

fn mdp(cfg: &ScenarioConfig, seed: u64) -> OffloadMdp {
    Scenario::generate(cfg, RewardWeights::default(), derive_seed(seed, Stream::Placement))
        .unwrap()
        .mdp()
        .unwrap()
}

#[test]
fn q_values_stay_within_the_reward_bound() {
    let cfg = ScenarioConfig {
        nodes: 3,
        queue_capacity: 3,
        max_batch: 3,
        ..ScenarioConfig::default()
    };
    let m = mdp(&cfg, 4);
    let view = Enumerated::new(&m).unwrap();
    let r_max = view
        .states()
        .iter()
        .flat_map(|s| view.actions(s).into_iter().map(move |a| (s, a)))
        .map(|(s, a)| view.reward(s, &a).abs())
        .fold(0.0, f64::max);
    let lc = LearningConfig {
        max_iterations: 100_000,
        seed: 8,
        ..LearningConfig::default()
    };
    let table = train(&m, &lc).table;
    let bound = r_max / (1.0 - lc.discount) + 1e-6;
    for key in table.states() {
        for e in table.entries(key) {
            assert!(e.value.is_finite() && e.value.abs() <= bound, "{} > {bound}", e.value);
        }
    }
}

#[test]
fn greedy_choice_ignores_a_per_state_offset() {
    let cfg = ScenarioConfig {
        nodes: 3,
        ..ScenarioConfig::default()
    };
    let m = mdp(&cfg, 2);
    let s = "1:4:3,1,2".parse().unwrap();
    let key = m.state_key(&s);
    let actions = m.admissible_actions(&s);
    let values: Vec<f64> = (0..actions.len()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
    let pick = |offset: f64| {
        let mut t = QTable::new();
        for (a, v) in actions.iter().zip(&values) {
            t.record(key, *a, v + offset);
        }
        t.greedy(key, &actions)
    };
    let base = pick(0.0);
    for offset in [-1e3, -7.5, 0.25, 42.0, 1e4] {
        assert_eq!(pick(offset), base);
    }
    assert_ne!(base, OffloadAction::Local);
}

#[test]
fn trailing_window_reward_improves() {
    // Mean reward of the first and last 10^4 iterations, default config.
    let window = 10_000;
    let cfg = ScenarioConfig::default();
    let mut gains = Vec::new();
    for seed in 1..=5 {
        let lc = LearningConfig {
            seed: derive_seed(seed, Stream::Training),
            ..LearningConfig::default()
        };
        let trace = train(&mdp(&cfg, seed), &lc).trace;
        let mean = |xs: &[fogq_core::solvers::TraceRecord]| xs.iter().map(|r| r.reward).sum::<f64>() / xs.len() as f64;
        gains.push(mean(&trace[trace.len() - window..]) - mean(&trace[..window]));
    }
    assert!(median(&gains) >= 0.0, "{gains:?}");
}
