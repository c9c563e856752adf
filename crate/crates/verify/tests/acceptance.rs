//! Acceptance gate. Each check prints one `[PASS]` or `[FAIL]` line; the
//! process exits nonzero if any check fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use fogq_core::config::ScenarioConfig;
use fogq_core::harness::{self, derive_seed, oracle_check, run_episode, MetricsReport, Stream};
use fogq_core::mdp::{next_queue_estimate, overload_probability, OffloadAction, SystemState};
use fogq_core::model::{comm_time, exec_time, transmission_rate, wait_time, Position, TaskProfile};
use fogq_core::solvers::{q_update, train, LearningConfig, Policy, QTable};
use fogq_core::{OffloadMdp, PolicyKind, RewardWeights, Scenario, SweepPlan, SweepVariable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

const SWEEP_SEEDS: u64 = 10;
const EVAL_SLOTS: u64 = 20_000;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn close(got: f64, want: f64, rel: f64) -> bool {
    (got - want).abs() <= rel * want.abs().max(f64::MIN_POSITIVE)
}

fn two_node_mdp(x: f64) -> OffloadMdp {
    let cfg = ScenarioConfig {
        nodes: 2,
        ..ScenarioConfig::default()
    };
    let positions = vec![Position::new(0.0, 0.0), Position::new(x, 0.0)];
    Scenario::with_positions(&cfg, RewardWeights::default(), 0, positions)
        .unwrap()
        .mdp()
        .unwrap()
}

/// Worked formula examples, recomputed independently at 30 digits.
fn formula_examples() -> Verdict {
    let mut failures = Vec::new();
    let mut check = |name: &str, got: f64, want: f64, rel: f64| {
        if !close(got, want, rel) {
            failures.push(format!("{name}: got {got}, want {want}"));
        }
    };
    let mdp = two_node_mdp(50.0);
    let nodes = mdp.nodes();
    let tasks = TaskProfile::new(4e9, 200e6, 5.0).unwrap();

    check(
        "rate(50 m)",
        transmission_rate(&nodes[0], &nodes[1], mdp.channel()).unwrap(),
        21_946_690.366_411_204,
        1e-6,
    );
    let far = two_node_mdp(100.0);
    let r100 = transmission_rate(&far.nodes()[0], &far.nodes()[1], far.channel()).unwrap();
    check("rate(100 m)", r100, 13_968_137.766_986_756, 1e-6);
    check("comm(0)", comm_time(0, 2e7, &tasks), 0.0, 0.0);
    check("comm(1)", comm_time(1, 2e7, &tasks), 400.0, 1e-12);
    check("exec(0, 0)", exec_time(0, 0, &nodes[0], &nodes[1], &tasks), 0.0, 0.0);
    check(
        "exec(2, 0)",
        exec_time(2, 0, &nodes[0], &nodes[1], &tasks),
        10.0 / 9.0,
        1e-12,
    );
    check("wait(1, 0)", wait_time(1, 0, 4.0, 0.0, 2.0, 1.0), 2.0, 1e-12);
    check("wait(0, 0)", wait_time(0, 0, 4.0, 3.0, 2.0, 1.5), 0.0, 0.0);
    check("wait(1, 1)", wait_time(1, 1, 4.0, 3.0, 2.0, 1.5), 6.0, 1e-12);
    check("next queue (5, 2, 3)", next_queue_estimate(5.0, 2.0, 3, 10), 6.0, 1e-12);
    check("next queue (0, 1.8, 0)", next_queue_estimate(0.0, 1.8, 0, 10), 0.0, 0.0);
    check("next queue clipped", next_queue_estimate(9.0, 1.0, 5, 10), 10.0, 1e-12);

    let lambda5 = two_node_mdp_with_lambda(5.0);
    let n = &lambda5.nodes()[0];
    check("overload(8)", overload_probability(n, 8.0), 0.6, 1e-12);
    check("overload(0)", overload_probability(n, 0.0), 0.0, 0.0);
    check("overload(full)", overload_probability(n, 10.0), 1.0, 1e-12);

    let r = mdp.reward(&SystemState::new(0, 1, vec![0, 0]), &OffloadAction::Local);
    check("utility(1)", r.utility, 10.0 * 2f64.ln(), 1e-12);
    let r = mdp.reward(&SystemState::new(0, 3, vec![10, 10]), &OffloadAction::Local);
    check(
        "empty placement",
        r.total.abs() + r.utility + r.delay + r.overload,
        0.0,
        0.0,
    );
    let r = mdp.reward(
        &SystemState::new(0, 3, vec![4, 3]),
        &OffloadAction::Offload { target: 1, count: 1 },
    );
    check("reference t_wait", r.t_wait, 6.111_111_111_111_111, 1e-12);
    check("reference t_comm", r.t_comm, 364.519_654_965_551_3, 1e-6);
    check("reference t_exec", r.t_exec, 1.666_666_666_666_666_7, 1e-12);
    check("reference total", r.total, -110.236_200_636_577_44, 1e-6);

    let lc = LearningConfig::default();
    let mut table = QTable::new();
    let key = mdp.state_key(&mdp.initial_state());
    check(
        "q update",
        q_update(&mut table, key, OffloadAction::Local, 4.0, 2.0, &lc),
        2.5,
        1e-12,
    );
    let unit = LearningConfig {
        learning_rate: 1.0,
        ..lc
    };
    check(
        "q update α=1",
        q_update(&mut table, key, OffloadAction::Local, 3.0, 8.0, &unit),
        7.0,
        1e-12,
    );

    Verdict::new(
        failures.is_empty(),
        if failures.is_empty() {
            "26 examples".into()
        } else {
            failures.join("; ")
        },
    )
}

fn two_node_mdp_with_lambda(lambda: f64) -> OffloadMdp {
    let cfg = ScenarioConfig {
        nodes: 2,
        arrival_rate: lambda,
        ..ScenarioConfig::default()
    };
    Scenario::with_positions(
        &cfg,
        RewardWeights::default(),
        0,
        vec![Position::new(0.0, 0.0), Position::new(50.0, 0.0)],
    )
    .unwrap()
    .mdp()
    .unwrap()
}

fn oracle_equivalence() -> Verdict {
    let cfg = ScenarioConfig {
        nodes: 2,
        queue_capacity: 2,
        max_batch: 2,
        ..ScenarioConfig::default()
    };
    let learning = LearningConfig {
        max_iterations: 1_000_000,
        ..LearningConfig::default()
    };
    let mut residual = 0f64;
    let mut agreements = Vec::new();
    for seed in 1..=5 {
        let scenario =
            Scenario::generate(&cfg, RewardWeights::default(), derive_seed(seed, Stream::Placement)).unwrap();
        let r = oracle_check(&scenario, &learning, seed, 1e-10, 1000).unwrap();
        residual = residual.max(r.bellman_residual);
        agreements.push(r.agreement);
    }
    let agreement = harness::median(&agreements);
    Verdict::new(
        residual < 1e-8 && agreement >= 0.95,
        format!(
            "max residual {residual:.2e} (< 1e-8), median agreement {:.1}% (>= 95%)",
            100.0 * agreement
        ),
    )
}

fn sweep_reports(variable: SweepVariable, values: Vec<f64>) -> Vec<MetricsReport> {
    let plan = SweepPlan {
        scenario: ScenarioConfig::default(),
        weights: RewardWeights::default(),
        learning: LearningConfig::default(),
        variable,
        values,
        policies: PolicyKind::STANDARD.to_vec(),
        eval_iterations: EVAL_SLOTS,
        seeds: (1..=SWEEP_SEEDS).collect(),
    };
    harness::sweep(&plan).unwrap()
}

fn median_of(reports: &[MetricsReport], value: f64, policy: PolicyKind, metric: fn(&MetricsReport) -> f64) -> f64 {
    let xs: Vec<f64> = reports
        .iter()
        .filter(|r| r.sweep_value == value && r.policy == policy)
        .map(metric)
        .collect();
    harness::median(&xs)
}

const BASELINES: [PolicyKind; 3] = [PolicyKind::Random, PolicyKind::LeastQueue, PolicyKind::Nearest];

fn arrival_reward_ordering(reports: &[MetricsReport]) -> Verdict {
    let reward = |r: &MetricsReport| r.avg_reward;
    let mut losses = Vec::new();
    let mut curve = Vec::new();
    for lambda in 1..=9 {
        let v = f64::from(lambda);
        let q = median_of(reports, v, PolicyKind::Qlearning, reward);
        curve.push(q);
        for b in BASELINES {
            let other = median_of(reports, v, b, reward);
            if q < other {
                losses.push(format!("λ={lambda} {b} {other:.3} > {q:.3}"));
            }
        }
    }
    let rises = curve.windows(2).filter(|w| w[1] > w[0]).count();
    let curve_text: Vec<String> = curve.iter().map(|x| format!("{x:.2}")).collect();
    Verdict::new(
        losses.is_empty() && rises <= 1,
        format!(
            "qlearning medians [{}], {rises} rise(s) (<= 1), beaten at: {}",
            curve_text.join(", "),
            if losses.is_empty() {
                "none".into()
            } else {
                losses.join(", ")
            }
        ),
    )
}

fn high_load_overload(reports: &[MetricsReport]) -> Verdict {
    let overload = |r: &MetricsReport| r.avg_overload;
    let q = median_of(reports, 9.0, PolicyKind::Qlearning, overload);
    let margins: Vec<(PolicyKind, f64)> = BASELINES
        .iter()
        .map(|&b| (b, 100.0 * (median_of(reports, 9.0, b, overload) - q)))
        .collect();
    let text: Vec<String> = margins.iter().map(|(b, pp)| format!("{b} {pp:+.2} pp")).collect();
    Verdict::new(
        margins.iter().all(|(_, pp)| *pp >= 1.0),
        format!(
            "qlearning {:.4}; baseline minus qlearning: {} (each >= +1 pp)",
            q,
            text.join(", ")
        ),
    )
}

fn delay_plateau() -> Verdict {
    let reports = sweep_reports(SweepVariable::Service, vec![1.0, 3.0, 7.0]);
    let delay = |r: &MetricsReport| r.avg_delay;
    let drops = |p: PolicyKind| {
        let d: Vec<f64> = [1.0, 3.0, 7.0]
            .iter()
            .map(|&v| median_of(&reports, v, p, delay))
            .collect();
        (d[0] - d[1], d[1] - d[2], d)
    };
    let (early, late, d) = drops(PolicyKind::Qlearning);
    let mut detail = format!(
        "qlearning delay {:.2}/{:.2}/{:.2}: drop 3→7 {late:.2} vs 0.25 × drop 1→3 {:.2}",
        d[0],
        d[1],
        d[2],
        0.25 * early
    );
    for b in BASELINES {
        let (e, l, _) = drops(b);
        detail.push_str(&format!("; {b} ratio {:.3}", l / e));
    }
    Verdict::new(late < 0.25 * early, detail)
}

/// A uniformly random valid state of `mdp`.
fn random_state(mdp: &OffloadMdp, rng: &mut ChaCha8Rng) -> SystemState {
    let queues = mdp
        .nodes()
        .iter()
        .map(|n| rng.random_range(0..=n.queue_capacity))
        .collect();
    SystemState::new(
        rng.random_range(0..mdp.node_count()),
        rng.random_range(1..=mdp.max_batch()),
        queues,
    )
}

fn transition_properties() -> Result<u64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut checked = 0u64;
    for scenario_id in 0..40u64 {
        let cfg = ScenarioConfig {
            nodes: rng.random_range(2..=6),
            queue_capacity: rng.random_range(1..=12),
            max_batch: rng.random_range(1..=10),
            arrival_rate: rng.random_range(0.3..9.5),
            service_rate: rng.random_range(0.3..9.5),
            ..ScenarioConfig::default()
        };
        let mdp = Scenario::generate(&cfg, RewardWeights::default(), scenario_id)
            .unwrap()
            .mdp()
            .unwrap();
        let mut s = mdp.initial_state();
        for step in 0..25_000 {
            if step % 500 == 0 {
                s = random_state(&mdp, &mut rng);
            }
            let actions = mdp.admissible_actions(&s);
            if actions.is_empty() || actions[0] != OffloadAction::Local {
                return Err(format!("{s}: admissible set must start with local"));
            }
            let a = actions[rng.random_range(0..actions.len())];
            let out = mdp.step(&s, &a, &mut rng);
            let p = out.placement;
            let r = out.reward;
            let l = s.requesting;
            let fail = |what: &str| Err(format!("scenario {scenario_id}, {s} --{a}--> {}: {what}", out.next));
            if p.offered != s.batch || p.local + p.offloaded + p.dropped != p.offered {
                return fail("tasks not conserved");
            }
            if s.queues[l] + p.local > cfg.queue_capacity {
                return fail("local placement overflows the queue");
            }
            if let Some(o) = a.target() {
                if s.queues[o] > s.queues[l] || s.queues[o] + p.offloaded > cfg.queue_capacity {
                    return fail("offload violates admissibility");
                }
            }
            for (i, &q) in out.next.queues.iter().enumerate() {
                let placed = if i == l {
                    p.local
                } else if a.target() == Some(i) {
                    p.offloaded
                } else {
                    0
                };
                if q > cfg.queue_capacity || q < placed || q > s.queues[i] + placed {
                    return fail("queue out of bounds");
                }
            }
            if !(0.0..=1.0).contains(&r.overload_probability) {
                return fail("overload probability outside [0, 1]");
            }
            if ![r.utility, r.delay, r.overload, r.total].iter().all(|x| x.is_finite())
                || r.delay < 0.0
                || r.overload < 0.0
            {
                return fail("reward terms not finite and non-negative");
            }
            let placed = f64::from(p.local + p.offloaded);
            if !close(r.utility, 10.0 * placed.ln_1p(), 1e-12)
                || !close(r.total, r.utility - r.delay - r.overload, 1e-12)
            {
                return fail("reward does not decompose");
            }
            if !mdp.is_valid_state(&out.next) {
                return fail("invalid successor");
            }
            s = out.next;
            checked += 1;
        }
    }
    Ok(checked)
}

/// Flag that turns this binary into a one-shot training run, so the
/// determinism check can compare two fresh processes.
const EXPORT_FLAG: &str = "--export-training-run";

/// Trains on the default scenario from root seed 7 and writes the Q-table and
/// trace into `dir`.
fn export_training_run(dir: &Path) {
    let root = 7;
    let mdp = Scenario::generate(
        &ScenarioConfig::default(),
        RewardWeights::default(),
        derive_seed(root, Stream::Placement),
    )
    .and_then(|s| Ok(s.mdp()?))
    .unwrap();
    let lc = LearningConfig {
        max_iterations: 200_000,
        seed: derive_seed(root, Stream::Training),
        ..LearningConfig::default()
    };
    let out = train(&mdp, &lc);
    std::fs::create_dir_all(dir).unwrap();
    out.table
        .write_tsv(&mdp, std::fs::File::create(dir.join("qtable.tsv")).unwrap())
        .unwrap();
    let mut w = csv::Writer::from_path(dir.join("trace.csv")).unwrap();
    for r in &out.trace {
        w.serialize(r).unwrap();
    }
    w.flush().unwrap();
}

fn run_child(dir: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let out = Command::new(exe)
        .arg(EXPORT_FLAG)
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let read = |name: &str| std::fs::read(dir.join(name)).map_err(|e| format!("{name}: {e}"));
    Ok((read("qtable.tsv")?, read("trace.csv")?))
}

fn property_suites() -> Verdict {
    let transitions = match transition_properties() {
        Ok(n) => n,
        Err(e) => return Verdict::new(false, e),
    };
    let tmp = tempfile::tempdir().unwrap();
    let runs = run_child(&tmp.path().join("a")).and_then(|a| run_child(&tmp.path().join("b")).map(|b| (a, b)));
    let ((qa, ta), (qb, tb)) = match runs {
        Ok(r) => r,
        Err(e) => return Verdict::new(false, format!("train failed: {e}")),
    };

    let mdp = two_node_mdp(50.0);
    let policy = Policy::Baseline(PolicyKind::Random.baseline().unwrap());
    let (ra, sa) = run_episode(&mdp, &policy, 10_000, 3);
    let (rb, sb) = run_episode(&mdp, &policy, 10_000, 3);

    let identical = qa == qb && ta == tb && ra == rb && sa == sb;
    Verdict::new(
        transitions >= 1_000_000 && identical && !qa.is_empty(),
        format!(
            "{transitions} transitions checked; two processes {} ({} B table, {} B trace)",
            if identical { "identical" } else { "DIFFER" },
            qa.len(),
            ta.len()
        ),
    )
}

fn sampler_statistics() -> Verdict {
    let draws = 100_000;
    let cfg = ScenarioConfig::default();
    let mdp = Scenario::generate(&cfg, RewardWeights::default(), 99)
        .unwrap()
        .mdp()
        .unwrap();

    // Truncated mean from the Poisson pmf: zero redrawn, tail mass at W_max.
    let pois = Poisson::new(cfg.arrival_rate).unwrap();
    let w = u64::from(cfg.max_batch);
    let body: f64 = (1..w).map(|k| k as f64 * pois.pmf(k)).sum();
    let analytic = (body + w as f64 * pois.sf(w - 1)) / (1.0 - pois.pmf(0));
    let frozen = 5.199_364_767_666_352;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = vec![0u64; cfg.nodes];
    let mut total = 0u64;
    for _ in 0..draws {
        let (node, batch) = mdp.sample_request(&mut rng);
        counts[node] += 1;
        total += u64::from(batch);
    }
    let mean = total as f64 / draws as f64;
    let mean_ok = close(analytic, frozen, 1e-12) && close(mean, analytic, 0.02);

    // Nodes with unequal rates, so proportionality is actually exercised.
    let rates = vec![1.0, 2.0, 3.0, 4.0, 5.0];
    let skewed = ScenarioConfig {
        arrival_rates: Some(rates),
        ..cfg.clone()
    };
    let mdp = Scenario::generate(&skewed, RewardWeights::default(), 99)
        .unwrap()
        .mdp()
        .unwrap();
    let mut chi = [0.0; 2];
    for (slot, m) in [&mdp, &two_node_mdp(50.0)].into_iter().enumerate() {
        let lambdas: Vec<f64> = m.nodes().iter().map(|n| n.lambda).collect();
        let sum: f64 = lambdas.iter().sum();
        let mut counts = vec![0u64; lambdas.len()];
        for _ in 0..draws {
            counts[m.sample_request(&mut rng).0] += 1;
        }
        chi[slot] = counts
            .iter()
            .zip(&lambdas)
            .map(|(&c, l)| {
                let e = draws as f64 * l / sum;
                (c as f64 - e).powi(2) / e
            })
            .sum();
    }
    let uniform_chi: f64 = counts
        .iter()
        .map(|&c| {
            let e = draws as f64 / cfg.nodes as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let crit4 = ChiSquared::new(4.0).unwrap().inverse_cdf(0.99);
    let crit1 = ChiSquared::new(1.0).unwrap().inverse_cdf(0.99);
    let chi_ok = uniform_chi < crit4 && chi[0] < crit4 && chi[1] < crit1;
    Verdict::new(
        mean_ok && chi_ok,
        format!(
            "batch mean {mean:.4} vs {analytic:.4} ({:+.2}%); chi2 uniform {uniform_chi:.2}, skewed {:.2} (< {crit4:.2}), two-node {:.2} (< {crit1:.2})",
            100.0 * (mean / analytic - 1.0),
            chi[0],
            chi[1]
        ),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    if let [_, flag, dir] = &args[..] {
        if flag == EXPORT_FLAG {
            export_training_run(Path::new(dir));
            return;
        }
    }
    let mut failed = 0;
    let mut report = |name: &str, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = f();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {name} ({:.1}s): {}", start.elapsed().as_secs_f64(), v.detail);
        if !v.pass {
            failed += 1;
        }
    };
    report("formula examples", &mut formula_examples);
    report("oracle equivalence", &mut oracle_equivalence);
    let mut reports = Vec::new();
    report("arrival sweep reward ordering", &mut || {
        reports = sweep_reports(SweepVariable::Arrival, (1..=9).map(f64::from).collect());
        arrival_reward_ordering(&reports)
    });
    report("high-load overload margin", &mut || high_load_overload(&reports));
    report("service sweep delay plateau", &mut delay_plateau);
    report("property and determinism suites", &mut property_suites);
    report("sampler statistics", &mut sampler_statistics);
    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
    println!("all acceptance checks passed");
}
