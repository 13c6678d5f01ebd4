//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.
//!
//! The two reference experiments run once (20 repetitions each, seed 0) and
//! are shared by the tests that need them.

use std::io::Write;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use linbandit::analytics::{
    chi2_tail_check, gaussian_deviation_constant, policy_certificate, uncertainty_complexity_bound,
};
use linbandit::harness::seed::{stream, ROLE_ACTIONS, ROLE_NOISE, ROLE_THETA};
use linbandit::harness::{
    export_csv, run_episode, run_experiment, AggregateResult, ExperimentConfig,
};
use linbandit::policies::{
    confidence_interval, confidence_radius, select_greedy, select_oful, select_sg, select_ts,
};
use linbandit::{
    ActionSet, Agent, LinearEnvironment, PolicyConfig, PolicyKind, RadiusKind, RadiusParams,
    RidgeState, Scenario,
};

const REPS: usize = 20;

/// Writes straight to stdout so the line shows up even when output is captured.
fn report(id: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("{verdict} criterion {id} ({name}): {detail}\n");
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn reference_config(scenario: Scenario) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(scenario);
    cfg.repetitions = REPS;
    cfg
}

fn scenario_one() -> &'static AggregateResult {
    static RUN: OnceLock<AggregateResult> = OnceLock::new();
    RUN.get_or_init(|| run_experiment(&reference_config(Scenario::reference_grouped())).unwrap())
}

fn scenario_two() -> &'static AggregateResult {
    static RUN: OnceLock<AggregateResult> = OnceLock::new();
    RUN.get_or_init(|| run_experiment(&reference_config(Scenario::reference_sphere())).unwrap())
}

fn summary(result: &AggregateResult) -> String {
    result
        .policies
        .iter()
        .map(|p| format!("{}={:.1}±{:.1}", p.label, p.final_mean(), p.final_sd()))
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn criterion_1_scenario_one_ordering() {
    let r = scenario_one();
    let ts = r.policy("ts").unwrap();
    let sg = r.policy("sg-0.5").unwrap();
    let greedy = r.policy("greedy").unwrap();
    let greedy_ok = greedy.final_mean() > 2.0 * ts.final_mean();
    let diff = (sg.final_mean() - ts.final_mean()).abs();
    let tol = 2.0 * (ts.final_sd() + sg.final_sd()) / (REPS as f64).sqrt();
    report(
        1,
        "scenario I ordering",
        greedy_ok && diff < tol,
        format!(
            "greedy>2ts: {greedy_ok}; |sg-0.5 - ts| = {diff:.1} vs {tol:.1}; {}",
            summary(r)
        ),
    );
}

#[test]
fn criterion_2_scenario_two_ordering() {
    let r = scenario_two();
    let reference = r
        .policy("oful")
        .unwrap()
        .final_mean()
        .min(r.policy("ts").unwrap().final_mean());
    let worst_sg = ["sg-0.2", "sg-0.5", "sg-0.8"]
        .iter()
        .map(|l| r.policy(l).unwrap().final_mean())
        .fold(f64::NEG_INFINITY, f64::max);
    let greedy = r.policy("greedy").unwrap().final_mean();
    report(
        2,
        "scenario II ordering",
        worst_sg < reference && greedy < reference,
        format!(
            "max sg = {worst_sg:.1}, greedy = {greedy:.1}, min(oful, ts) = {reference:.1}; {}",
            summary(r)
        ),
    );
}

#[test]
fn criterion_3_elliptical_potential() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let kinds = [
        PolicyConfig::oful(),
        PolicyConfig::ts(1.0),
        PolicyConfig::greedy(),
        PolicyConfig::sg(0.5),
    ];
    let mut worst_ratio: f64 = 0.0;
    let mut violations = 0;
    for run in 0..100 {
        let radius = rng.random_range(0.5..5.0);
        let scenario = if run % 2 == 0 {
            Scenario::Sphere {
                num_arms: rng.random_range(2..=10),
                dim: rng.random_range(2..=20),
                radius,
            }
        } else {
            let k = rng.random_range(2..=4);
            Scenario::Grouped {
                num_arms: k,
                block_dim: rng.random_range(1..=20 / k),
                radius,
            }
        };
        let mut cfg = ExperimentConfig::preset(scenario);
        cfg.horizon = rng.random_range(2..=2000);
        cfg.sigma = [0.5, 1.0, 2.0][rng.random_range(0..3)];
        cfg.lambda = [0.5, 1.0, 4.0][rng.random_range(0..3)];
        cfg.base_seed = run;
        let policy = kinds[run as usize % kinds.len()]
            .clone()
            .with_prior(cfg.lambda, cfg.sigma);
        cfg.policies = vec![policy.clone()];
        let total = run_episode(&cfg, &policy, 0)
            .unwrap()
            .trace
            .total_uncertainty();
        let bound =
            uncertainty_complexity_bound(cfg.dim(), cfg.horizon, radius, cfg.lambda, cfg.sigma);
        if total > bound {
            violations += 1;
        }
        worst_ratio = worst_ratio.max(total / bound);
    }
    report(
        3,
        "elliptical potential",
        violations == 0,
        format!("{violations} violations in 100 runs; largest sum/bound = {worst_ratio:.4}"),
    );
}

fn random_state(rng: &mut ChaCha8Rng, dim: usize) -> RidgeState {
    let mut state = RidgeState::new(dim, rng.random_range(0.5..2.0), 1.0).unwrap();
    let theta: DVector<f64> = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
    for _ in 0..rng.random_range(0..40) {
        let a: DVector<f64> = DVector::from_fn(dim, |_, _| rng.sample(StandardNormal));
        let noise: f64 = rng.sample(StandardNormal);
        state.update(&a, theta.dot(&a) + noise).unwrap();
    }
    state
}

fn well_separated(values: &[f64]) -> bool {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.windows(2).all(|w| w[1] - w[0] > 1e-9)
}

#[test]
fn criterion_4_policy_equivalences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    let mut mismatches = 0;
    while checked < 1000 {
        let dim = rng.random_range(2..=8);
        let n = rng.random_range(2..=10);
        let mut state = random_state(&mut rng, dim);
        let actions: Vec<DVector<f64>> = (0..n)
            .map(|_| DVector::from_fn(dim, |_, _| rng.sample(StandardNormal)))
            .collect();
        let set = ActionSet::new(1, actions).unwrap();
        let radius = rng.random_range(0.1..3.0);

        let means: Vec<f64> = set.iter().map(|a| state.theta_hat().dot(a)).collect();
        let uppers: Vec<f64> = set
            .iter()
            .map(|a| confidence_interval(&state, radius, a).unwrap().upper)
            .collect();
        if !well_separated(&means) || !well_separated(&uppers) {
            continue;
        }
        checked += 1;

        // Smallest radius with U(A) ≥ max L for every pair, scaled up.
        let norms: Vec<f64> = set
            .iter()
            .map(|a| state.mahalanobis_sq(a).unwrap().sqrt())
            .collect();
        let mut keep_all = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                keep_all = keep_all.max((means[j] - means[i]) / (norms[i] + norms[j]));
            }
        }
        let keep_all = 2.0 * keep_all + 1e-6;

        let greedy = select_greedy(&state, &set).unwrap();
        let same = select_sg(&state, radius, 1.0, &set).unwrap()
            == select_oful(&state, radius, &set).unwrap()
            && select_sg(&state, keep_all, 0.0, &set).unwrap() == greedy
            && select_ts(&mut state, 0.0, &set, &mut rng).unwrap() == greedy;
        if !same {
            mismatches += 1;
        }
    }
    report(
        4,
        "policy equivalences",
        mismatches == 0,
        format!("{mismatches} mismatches over {checked} tie-free instances"),
    );
}

#[test]
fn criterion_5_incremental_linear_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_cov: f64 = 0.0;
    let mut worst_theta: f64 = 0.0;
    for _ in 0..500 {
        let dim = rng.random_range(1..=20);
        let len = rng.random_range(0..=200);
        let lambda = rng.random_range(0.1..5.0);
        let sigma = rng.random_range(0.3..3.0);
        let mut state = RidgeState::new(dim, lambda, sigma).unwrap();
        let mut gram = DMatrix::<f64>::identity(dim, dim) / lambda;
        let mut xty = DVector::<f64>::zeros(dim);
        let s2 = sigma * sigma;
        for _ in 0..len {
            let a: DVector<f64> = DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0));
            let r: f64 = rng.random_range(-5.0..5.0);
            state.update(&a, r).unwrap();
            gram += &a * a.transpose() / s2;
            xty += &a * (r / s2);
        }
        let cov = gram.try_inverse().unwrap();
        let theta = &cov * &xty;
        worst_cov = worst_cov.max((state.cov() - &cov).amax());
        worst_theta = worst_theta.max((state.theta_hat() - &theta).amax());
    }
    report(
        5,
        "incremental linear algebra",
        worst_cov < 1e-8 && worst_theta < 1e-8,
        format!("max cov error {worst_cov:.2e}, max estimate error {worst_theta:.2e}"),
    );
}

#[test]
fn criterion_6_confidence_coverage() {
    let (dim, horizon, reps) = (10, 500, 200);
    let scenario = Scenario::Sphere {
        num_arms: 10,
        dim,
        radius: 5.0,
    };
    let params = RadiusParams {
        dim,
        horizon,
        action_bound: 5.0,
        sigma: 1.0,
        lambda: 1.0,
        theta_bound: (dim as f64).sqrt(),
        max_actions: 10,
        groups: 1,
        inflation: 1.0,
    };
    let rho = confidence_radius(RadiusKind::Rho, &params).unwrap();
    let mut failures = 0usize;
    for rep in 0..reps {
        let env =
            LinearEnvironment::from_prior(&mut stream(6, rep, ROLE_THETA), dim, 1.0, 5.0).unwrap();
        let mut actions = stream(6, rep, ROLE_ACTIONS);
        let mut noise = stream(6, rep, ROLE_NOISE);
        let mut agent = Agent::new(PolicyConfig::oful(), dim, &params).unwrap();
        for t in 1..=horizon {
            let set = scenario.generate(&mut actions, t).unwrap();
            let covered = set.iter().all(|a| {
                confidence_interval(agent.state(), rho, a)
                    .unwrap()
                    .contains(env.mean_reward(a).unwrap())
            });
            if !covered {
                failures += 1;
            }
            let i = agent.select(&set, &mut noise).unwrap();
            let r = env.draw_reward(set.get(i), &mut noise).unwrap();
            agent.observe(set.get(i), r).unwrap();
        }
    }
    let rate = failures as f64 / (horizon * reps) as f64;
    report(
        6,
        "confidence coverage",
        rate < 0.005,
        format!(
            "{failures} uncovered rounds of {} (rate {rate:.5}), radius {rho:.3}",
            horizon * reps
        ),
    );
}

#[test]
fn criterion_7_sampler_and_tails() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut state = random_state(&mut rng, 6);
    while state.count() < 10 {
        state = random_state(&mut rng, 6);
    }
    let a: DVector<f64> = DVector::from_fn(6, |_, _| rng.sample(StandardNormal));
    let draws = 100_000;
    let critical = 1.628 / (draws as f64).sqrt();

    let mut details = Vec::new();
    let mut pass = true;
    for inflation in [1.0, 2.0] {
        let mean = state.theta_hat().dot(&a);
        let sd = inflation * state.mahalanobis_sq(&a).unwrap().sqrt();
        let reference = Normal::new(mean, sd).unwrap();
        let mut xs: Vec<f64> = (0..draws)
            .map(|_| state.sample_posterior(inflation, &mut rng).unwrap().dot(&a))
            .collect();
        xs.sort_by(f64::total_cmp);
        let n = draws as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = reference.cdf(x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        pass &= ks < critical;
        details.push(format!("KS(ι={inflation}) = {ks:.5}"));
    }
    for d in [1, 10] {
        for gamma in [1.0, 2.0, 5.0] {
            let check = chi2_tail_check(d, gamma, 1_000_000, &mut rng).unwrap();
            pass &= check.passes;
            details.push(format!(
                "χ²(d={d}, γ={gamma}): {:.2e} ≤ {:.2e}",
                check.empirical, check.bound
            ));
        }
    }
    report(
        7,
        "sampler and tails",
        pass,
        format!("critical {critical:.5}; {}", details.join(", ")),
    );
}

#[test]
fn criterion_8_certificates() {
    let mut details = Vec::new();
    let mut pass = true;
    for (scenario, result) in [
        (Scenario::reference_grouped(), scenario_one()),
        (Scenario::reference_sphere(), scenario_two()),
    ] {
        let cfg = reference_config(scenario);
        let params = cfg.radius_params();
        let deviation =
            gaussian_deviation_constant(params.action_bound, params.theta_bound, params.horizon);
        for policy in cfg.policies.iter().filter(|p| p.kind != PolicyKind::Greedy) {
            let cert = policy_certificate(policy, &params, deviation).unwrap();
            let observed = result.policy(&cert.policy).unwrap().final_mean();
            let bound = cert.certificate.gap_independent_bound;
            pass &= observed < bound;
            details.push(format!(
                "{}/{}: {observed:.0} < {bound:.3e}",
                scenario.dim(),
                cert.policy
            ));
        }
    }
    report(8, "certificate consistency", pass, details.join(", "));
}

#[test]
fn criterion_9_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for scenario in [Scenario::reference_grouped(), Scenario::reference_sphere()] {
        let mut cfg = reference_config(scenario);
        cfg.horizon = 2000;
        cfg.repetitions = 4;
        let mut files = Vec::new();
        for (i, parallel) in [true, true, false].into_iter().enumerate() {
            cfg.parallel = parallel;
            let result = run_experiment(&cfg).unwrap();
            let path = dir.path().join(format!("run{i}.csv"));
            export_csv(&result, &path, 10).unwrap();
            files.push(std::fs::read(&path).unwrap());
        }
        let same = files.windows(2).all(|w| w[0] == w[1]);
        pass &= same;
        details.push(format!(
            "d={}: two parallel runs and one sequential run byte-identical: {same} ({} bytes)",
            scenario.dim(),
            files[0].len()
        ));
    }
    report(9, "determinism", pass, details.join(", "));
}
