use fogq_core::config::ScenarioConfig;
use fogq_core::mdp::batch_distribution;
use fogq_core::solvers::{epsilon_greedy, QTable};
use fogq_core::{OffloadMdp, RewardWeights, Scenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

const DRAWS: usize = 100_000;

fn chi_square(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = n as f64 * p;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

fn critical(categories: usize) -> f64 {
    ChiSquared::new((categories - 1) as f64).unwrap().inverse_cdf(0.99)
}

fn reference() -> OffloadMdp {
    Scenario::generate(&ScenarioConfig::default(), RewardWeights::default(), 17)
        .unwrap()
        .mdp()
        .unwrap()
}

#[test]
fn batch_law_matches_truncated_poisson() {
    let pois = Poisson::new(5.2).unwrap();
    let law = batch_distribution(5.2, 10);
    // Entry k - 1 holds batch size k.
    assert_eq!(law.len(), 10);
    let z = 1.0 - pois.pmf(0);
    for k in 1..10u64 {
        assert!((law[k as usize - 1] - pois.pmf(k) / z).abs() < 1e-14);
    }
    assert!((law[9] - pois.sf(9) / z).abs() < 1e-12);
    let mean: f64 = law.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
    assert!((mean - 5.199_364_767_666_352).abs() < 1e-12);

    let mdp = reference();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut counts = [0u64; 11];
    for _ in 0..DRAWS {
        counts[mdp.sample_request(&mut rng).1 as usize] += 1;
    }
    assert_eq!(counts[0], 0);
    let stat = chi_square(&counts[1..], &law);
    assert!(stat < critical(10), "chi2 {stat}");
}

#[test]
fn equal_rates_pick_nodes_uniformly() {
    let mdp = reference();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut counts = vec![0u64; 5];
    for _ in 0..DRAWS {
        counts[mdp.sample_request(&mut rng).0] += 1;
    }
    let p = 0.2;
    let sd = (DRAWS as f64 * p * (1.0 - p)).sqrt();
    for c in &counts {
        assert!((*c as f64 - DRAWS as f64 * p).abs() < 3.0 * sd, "{counts:?}");
    }
}

#[test]
fn full_exploration_is_uniform_over_actions() {
    let mdp = reference();
    let s = "2:6:4,5,1,0,3".parse().unwrap();
    let key = mdp.state_key(&s);
    let actions = mdp.admissible_actions(&s);
    assert!(actions.len() > 5);
    let mut table = QTable::new();
    table.record(key, actions[3], 100.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut counts = vec![0u64; actions.len()];
    for _ in 0..DRAWS {
        let a = epsilon_greedy(&table, key, &actions, 1.0, &mut rng);
        counts[actions.iter().position(|x| *x == a).unwrap()] += 1;
    }
    let probs = vec![1.0 / actions.len() as f64; actions.len()];
    let stat = chi_square(&counts, &probs);
    assert!(stat < critical(actions.len()), "chi2 {stat}");
}
