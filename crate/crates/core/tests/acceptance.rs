//! One PASS/FAIL line per acceptance criterion.
//!
//! Failures are reported, not fatal, so the remaining test targets still
//! run; set `UAVTRUST_ACCEPTANCE_STRICT=1` to exit non-zero on any FAIL.
//! Set `UAVTRUST_SKIP_SLOW=1` to skip the throughput-weight sweep, the only
//! criterion that needs more than the three trend runs.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use uavtrust::baselines::rand_policy;
use uavtrust::harness::{
    evaluate, phase_means, train, train_to_dir, EvalPolicy, MetricsRecord, Phase, PolicyKind, RunConfig, RunPreset,
};
use uavtrust::pd3qn::{DuelingParams, NetDims, ReplayBuffer, Transition};
use uavtrust::environment::ActionMask;
use uavtrust::harness::run::build_environment;
use uavtrust::topology::max_flow;

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

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, name: &str, v: &Verdict, elapsed: Option<Duration>, budget: Option<Duration>) {
        let over = matches!((elapsed, budget), (Some(e), Some(b)) if e > b);
        let pass = v.pass && !over;
        if !pass {
            self.failures += 1;
        }
        let time = match (elapsed, budget) {
            (Some(e), Some(b)) => format!(" [{:.1}s, budget {}s]", e.as_secs_f64(), b.as_secs()),
            (Some(e), None) => format!(" [{:.1}s]", e.as_secs_f64()),
            _ => String::new(),
        };
        println!("{} {name}: {}{time}", if pass { "PASS" } else { "FAIL" }, v.detail);
    }

    fn timed(&mut self, name: &str, budget: Option<u64>, f: impl FnOnce() -> Verdict) {
        let start = Instant::now();
        let v = f();
        self.line(name, &v, Some(start.elapsed()), budget.map(Duration::from_secs));
    }
}

fn max_flow_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1000 {
        let n = rng.random_range(2..=6);
        let density = rng.random_range(0.2..0.9);
        let (g, links) = common::random_digraph(&mut rng, n, density, 5);
        let fast = max_flow(&g, 0, n - 1).expect("flow on a valid graph");
        let brute = common::brute_min_cut(n, &links, 0, n - 1);
        if fast != brute {
            return Verdict::new(false, format!("case {case}: max-flow {fast} vs min-cut {brute}"));
        }
    }
    Verdict::new(true, "1000 digraphs, max-flow equals brute-force min cut exactly")
}

fn gradient_fidelity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut worst, mut compared, mut skipped) = (0.0f64, 0, 0);
    for _ in 0..20 {
        let params = DuelingParams::new(NetDims::new(4, 3, 8), &mut rng);
        let batch = 5;
        let obs = Array2::from_shape_fn((batch, 4), |_| rng.random_range(-1.0..1.0));
        let actions: Vec<usize> = (0..batch).map(|_| rng.random_range(0..3)).collect();
        let targets: Vec<f64> = (0..batch).map(|_| rng.random_range(-2.0..2.0)).collect();
        let weights: Vec<f64> = (0..batch).map(|_| rng.random_range(0.1..1.0)).collect();
        let c = common::gradient_check(&params, &obs, &actions, &targets, &weights, 1e-4);
        worst = worst.max(c.worst);
        compared += c.compared;
        skipped += c.skipped;
    }
    Verdict::new(
        worst < 1e-4 && skipped * 100 < compared,
        format!(
            "20 nets, {compared} components, max relative error {worst:.2e} (limit 1e-4); \
             {skipped} probes straddled a ReLU kink and were skipped"
        ),
    )
}

fn dummy_transition() -> Transition {
    Transition {
        obs: vec![0.0],
        action: 0,
        reward: 0.0,
        next_obs: vec![0.0],
        next_mask: ActionMask::all(1),
    }
}

fn per_distribution() -> Verdict {
    let (alpha, eps) = (0.2, 1e-5);
    let mut buf = ReplayBuffer::new(10, alpha, eps);
    for _ in 0..10 {
        buf.insert(dummy_transition());
    }
    let td: Vec<f64> = vec![0.0, 0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 50.0, 100.0];
    let idx: Vec<usize> = (0..10).collect();
    buf.update_priorities(&idx, &td);

    let mass: Vec<f64> = td.iter().map(|t| (t.abs() + eps).powf(alpha)).collect();
    let total: f64 = mass.iter().sum();
    let expected: Vec<f64> = mass.iter().map(|m| m / total).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let draws = 100_000;
    let mut counts = [0usize; 10];
    for _ in 0..draws {
        let s = buf.sample(1, 0.6, &mut rng).expect("buffer is full");
        counts[s.indices[0]] += 1;
    }
    let worst = (0..10)
        .map(|i| (counts[i] as f64 / draws as f64 - expected[i]).abs())
        .fold(0.0, f64::max);

    let mut uniform = ReplayBuffer::new(64, alpha, eps);
    for _ in 0..64 {
        uniform.insert(dummy_transition());
    }
    let s = uniform.sample(32, 1.0, &mut rng).expect("buffer is full");
    let unit = s.weights.iter().all(|&w| w == 1.0);

    Verdict::new(
        worst <= 0.01 && unit,
        format!("max |freq - P(i)| {worst:.4} (limit 0.01); uniform weights all exactly 1: {unit}"),
    )
}

fn dueling_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let input = rng.random_range(1..12);
        let actions = rng.random_range(1..10);
        let hidden = rng.random_range(1..32);
        let params = DuelingParams::new(NetDims::new(input, actions, hidden), &mut rng);
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-3.0..3.0)).collect();
        let out = params.q_forward(&x).expect("matching input width");
        let mean_gap = out.q.iter().map(|q| q - out.value).sum::<f64>() / actions as f64;
        worst = worst.max(mean_gap.abs());
    }
    Verdict::new(worst <= 1e-6, format!("1000 pairs, max |mean_a(Q - V)| {worst:.2e} (limit 1e-6)"))
}

fn dynamics_invariants() -> Verdict {
    let cfg = RunConfig::default();
    let mut env = build_environment(&cfg).expect("default network");
    let n = env.device_count();
    let (uav_cap, station_cap) = (env.config().uav_capacity, env.config().station_capacity);
    let slots_per_seed = 100_000usize;
    let episode_len = 5_000usize;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        for ep in 0..slots_per_seed / episode_len {
            let mut s = env.reset(seed * 1000 + ep as u64);
            for slot in 0..episode_len {
                let at = || format!("seed {seed} episode {ep} slot {slot}");
                if s.uav_level < env.hop_energy(s.position, n) {
                    return Verdict::new(false, format!("{}: cannot return to base", at()));
                }
                let mask = env.feasible_actions(&s);
                let a = rand_policy(&mask, &mut rng);
                let out = match env.step(a) {
                    Ok(o) => o,
                    Err(e) => return Verdict::new(false, format!("{}: step failed: {e}", at())),
                };
                let next = &out.next_state;
                if !(0.0..=uav_cap).contains(&next.uav_level) || !(0.0..=station_cap).contains(&next.station_level) {
                    return Verdict::new(false, format!("{}: battery out of bounds", at()));
                }
                let expected_attested = (a.0 < n).then_some(a.0);
                let aot_ok = out.attested == expected_attested
                    && next.aot.iter().zip(&s.aot).enumerate().all(|(i, (&new, &old))| {
                        new == if Some(i) == expected_attested { 1 } else { old + 1 }
                    });
                if !aot_ok {
                    return Verdict::new(false, format!("{}: AoT update wrong", at()));
                }
                if next.aot.iter().filter(|&&d| d == 1).count() > 1 {
                    return Verdict::new(false, format!("{}: more than one device attested", at()));
                }
                s = out.next_state;
            }
        }
    }
    Verdict::new(true, "20 seeds x 100000 random-policy slots, all invariants held")
}

fn energy_ledgers() -> Verdict {
    let mut cfg = RunConfig::default();
    cfg.battery.station_kwh = f64::INFINITY;
    let mut env = build_environment(&cfg).expect("default network");
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut worst = 0.0f64;
    for episode in 0..10u64 {
        let s0 = env.reset(episode);
        let (mut travel, mut charge, mut harvest) = (0.0, 0.0, 0.0);
        let mut s = s0.clone();
        for _ in 0..cfg.slots_per_episode {
            let a = rand_policy(&env.feasible_actions(&s), &mut rng);
            let out = env.step(a).expect("feasible action");
            travel += out.travel_energy;
            charge += out.charge;
            harvest += out.harvested;
            s = out.next_state;
        }
        let uav_expected = s0.uav_level - travel + charge;
        let station_expected = s0.station_level - charge + harvest;
        let rel = |got: f64, want: f64| (got - want).abs() / want.abs().max(1.0);
        worst = worst.max(rel(s.uav_level, uav_expected)).max(rel(s.station_level, station_expected));
    }
    Verdict::new(worst <= 1e-6, format!("10 episodes x 2000 slots, max relative imbalance {worst:.2e} (limit 1e-6)"))
}

fn desk(seed: u64, theta_flow: f64) -> RunConfig {
    let mut cfg = RunConfig::default().with_preset(RunPreset::Desk);
    cfg.seed = seed;
    cfg.reward.theta_flow = theta_flow;
    cfg
}

const SEEDS: [u64; 3] = [0, 1, 2];

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn eval_means(records: &[MetricsRecord]) -> (f64, f64) {
    let m = phase_means(records, Phase::Eval).expect("assessment episodes");
    (m.aot, m.throughput)
}

/// Per-seed PD3QN records at one throughput weight.
type Runs = BTreeMap<u64, Vec<MetricsRecord>>;

fn train_seeds(theta_flow: f64) -> Runs {
    SEEDS
        .iter()
        .map(|&s| (s, train(&desk(s, theta_flow)).expect("training run").0))
        .collect()
}

fn trend(report: &mut Report, runs: &Runs) {
    let first5 = mean(runs.values().map(|r| mean(r[..5].iter().map(|x| x.avg_aot))));
    let (agent_aot, agent_flow) = {
        let per: Vec<_> = runs.values().map(|r| eval_means(r)).collect();
        (mean(per.iter().map(|p| p.0)), mean(per.iter().map(|p| p.1)))
    };
    let mut base = BTreeMap::new();
    for kind in PolicyKind::BASELINES {
        let per: Vec<_> = SEEDS
            .iter()
            .map(|&s| eval_means(&evaluate(&desk(s, 0.5), EvalPolicy::Baseline(kind)).expect("baseline run")))
            .collect();
        base.insert(kind.name(), (mean(per.iter().map(|p| p.0)), mean(per.iter().map(|p| p.1))));
    }
    let (rand, maf, nf) = (base["rand"], base["maf"], base["nf"]);
    println!(
        "     eval means over seeds {SEEDS:?}: pd3qn aot {agent_aot:.3} flow {agent_flow:.3}; \
         rand {:.3}/{:.3}; maf {:.3}/{:.3}; nf {:.3}/{:.3}",
        rand.0, rand.1, maf.0, maf.1, nf.0, nf.1
    );

    let ratio = agent_aot / first5;
    report.line(
        "trend (a) eval AoT <= 50% of first-5-episode AoT",
        &Verdict::new(ratio <= 0.5, format!("{agent_aot:.3} / {first5:.3} = {ratio:.3}")),
        None,
        None,
    );
    let best_baseline = rand.1.max(maf.1).max(nf.1);
    report.line(
        "trend (b) PD3QN throughput >= every baseline",
        &Verdict::new(
            agent_flow >= best_baseline,
            format!("{agent_flow:.3} vs best baseline {best_baseline:.3}"),
        ),
        None,
        None,
    );
    report.line(
        "trend (c) MAF has the lowest baseline AoT",
        &Verdict::new(
            maf.0 < rand.0 && maf.0 < nf.0,
            format!("maf {:.3}, rand {:.3}, nf {:.3}", maf.0, rand.0, nf.0),
        ),
        None,
        None,
    );
    report.line(
        "trend (d) NF has the highest AoT of all four",
        &Verdict::new(
            nf.0 > rand.0 && nf.0 > maf.0 && nf.0 > agent_aot,
            format!("nf {:.3}, rand {:.3}, maf {:.3}, pd3qn {agent_aot:.3}", nf.0, rand.0, maf.0),
        ),
        None,
        None,
    );
}

fn tradeoff(mid: &Runs) -> Verdict {
    let mut rows = Vec::new();
    for theta in [0.1, 0.5, 0.9] {
        let runs = if theta == 0.5 { mid.clone() } else { train_seeds(theta) };
        let per: Vec<_> = runs.values().map(|r| eval_means(r)).collect();
        rows.push((theta, mean(per.iter().map(|p| p.0)), mean(per.iter().map(|p| p.1))));
    }
    let flow_ok = rows.windows(2).all(|w| w[1].2 >= w[0].2);
    let aot_ok = rows.windows(2).all(|w| w[1].1 >= w[0].1);
    let detail = rows
        .iter()
        .map(|(t, a, f)| format!("theta_flow {t}: aot {a:.3} flow {f:.3}"))
        .collect::<Vec<_>>()
        .join("; ");
    Verdict::new(flow_ok && aot_ok, detail)
}

fn determinism() -> Verdict {
    let mut cfg = RunConfig::default();
    cfg.episodes = 4;
    cfg.train_episodes = 3;
    cfg.slots_per_episode = 300;
    cfg.agent.train_start = 64;
    cfg.seed = 7;
    let a = tempfile::tempdir().expect("temp dir");
    let b = tempfile::tempdir().expect("temp dir");
    train_to_dir(&cfg, a.path()).expect("first run");
    train_to_dir(&cfg, b.path()).expect("second run");
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("metrics.csv")).expect("metrics.csv");
    let (x, y) = (read(&a), read(&b));
    Verdict::new(x == y && !x.is_empty(), format!("two runs, metrics.csv {} bytes, identical: {}", x.len(), x == y))
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored.
    let mut report = Report { failures: 0 };
    report.timed("max-flow matches brute-force min cut", Some(10), max_flow_oracle);
    report.timed("analytic gradients match finite differences", Some(30), gradient_fidelity);
    report.timed("prioritized replay distribution and weights", Some(10), per_distribution);
    report.timed("dueling aggregation identity", None, dueling_identity);
    report.timed("environment dynamics invariants", Some(60), dynamics_invariants);
    report.timed("unclamped energy ledgers balance", None, energy_ledgers);
    report.timed("identical runs write identical metrics", None, determinism);

    let start = Instant::now();
    let mid = train_seeds(0.5);
    trend(&mut report, &mid);
    let took = start.elapsed();
    report.line(
        "trend runs finish within budget",
        &Verdict::new(true, "3 seeds x (training + 3 baselines)"),
        Some(took),
        Some(Duration::from_secs(1800)),
    );

    if std::env::var_os("UAVTRUST_SKIP_SLOW").is_some() {
        println!("SKIP throughput-weight sweep: UAVTRUST_SKIP_SLOW is set");
    } else {
        report.timed("throughput-weight sweep is monotone", Some(90 * 60), || tradeoff(&mid));
    }

    println!("{} criteria failed", report.failures);
    if report.failures == 0 || std::env::var_os("UAVTRUST_ACCEPTANCE_STRICT").is_none() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
