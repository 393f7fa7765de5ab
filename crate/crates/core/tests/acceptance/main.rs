//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when a criterion fails that is not listed in
//! `KNOWN_UNATTAINABLE`, or when a listed one unexpectedly passes.

use std::process::ExitCode;
use std::time::Instant;

use dkf_core::analysis::kron::{
    disagreement_kron_moment, kron_square_radius, round_kron_moment_enumerated, sample_consensus_product, KronMode,
    RandomMatrixSource,
};
use dkf_core::analysis::{bound_matrix_ar, bound_matrix_as, bounds_report, expected_m, theta_values};
use dkf_core::dkf::{consensus_round_into, default_delta};
use dkf_core::graph::{exact_disconnection_probability, laplacian_of_mask, orthonormal_complement};
use dkf_core::harness::experiments::run_mse_grid;
use dkf_core::harness::{parse_config_str, ExperimentConfig, Setup};
use dkf_core::linalg::{jacobi_eigen, spectral_norm};
use dkf_core::model::TRACKER_X0_MEAN;
use dkf_core::pushsum::{
    default_eps, gain_errors, init_pushsum, pushsum_limits_oracle, pushsum_round, round_with_mask, PushSumLimit,
    PushSumNetwork, PushSumNodeState,
};
use dkf_core::rng::{stream, DOMAIN_MC, DOMAIN_PLANT};
use dkf_core::sim::{summarize, GainSource, TrialRecord, TrialSetup};
use dkf_core::{ConsensusParams, DkfNetwork, FrozenGains, Graph, LinkFailureModel, NodeOutput, Plant, RoundKey};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Criteria that fail on this model for reasons recorded alongside the
/// project notes. They still run and print FAIL.
const KNOWN_UNATTAINABLE: &[&str] = &["8a"];

struct Suite {
    results: Vec<(String, bool)>,
}

impl Suite {
    fn record(&mut self, id: &str, pass: bool, what: &str, detail: String) {
        println!("{} [{id}] {what}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((id.to_string(), pass));
    }
}

fn m1(x: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, x)
}

fn tracker() -> Plant {
    Plant::planar_tracker(0.25, 0.05, 0.1).unwrap()
}

fn scalar_network(n: usize) -> Plant {
    Plant::new(
        m1(1.0),
        m1(1.0),
        (0..n).map(|_| NodeOutput::new(m1(1.0), m1(1.0))).collect(),
        DVector::zeros(1),
        m1(1.0),
    )
    .unwrap()
}

fn paper5() -> ExperimentConfig {
    parse_config_str("{}", std::path::Path::new(".")).unwrap()
}

fn limit_error(states: &[PushSumNodeState], limits: &[PushSumLimit]) -> f64 {
    states
        .iter()
        .zip(limits)
        .map(|(s, l)| {
            let c = (&s.c_tilde - &l.c_tilde).norm() / l.c_tilde.norm();
            let n = (s.n_tilde - l.n_tilde).abs() / l.n_tilde;
            let w = (s.w - l.w).abs() / l.w;
            c.max(n).max(w)
        })
        .fold(0.0, f64::max)
}

fn sorted(mut xs: Vec<f64>) -> Vec<f64> {
    xs.sort_by(f64::total_cmp);
    xs
}

fn pct(xs: &[f64], q: f64) -> f64 {
    dkf_core::harness::experiments::quantile(xs, q)
}

fn c1(suite: &mut Suite) {
    let start = Instant::now();
    let cases = [
        ("path-3", scalar_network(3), Graph::path(3).unwrap()),
        ("default", tracker(), Graph::default_topology()),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, plant, g) in cases {
        let limits = pushsum_limits_oracle(&plant, &g).unwrap();
        let mut s = init_pushsum(&plant, &g, 0, 0.0).unwrap();
        let mut first = None;
        for t in 1..=500 {
            s = pushsum_round(&s, &g, &g).unwrap();
            if first.is_none() && limit_error(&s, &limits) < 1e-8 {
                first = Some(t);
            }
        }
        let err = limit_error(&s, &limits);
        pass &= err < 1e-8;
        parts.push(format!("{name} rel err {err:.1e} (below 1e-8 from round {first:?})"));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 1.0;
    suite.record("1", pass, "Push-Sum limits without failures", format!("{}, {secs:.2} s", parts.join("; ")));
}

fn c2(suite: &mut Suite) {
    let start = Instant::now();
    let plant = tracker();
    let eps = default_eps(&plant);
    let mut errs = Vec::new();
    let mut rounds = Vec::new();
    for seed in 0..100 {
        let links = LinkFailureModel::new(Graph::default_topology(), 0.7, seed).unwrap();
        let mut net = PushSumNetwork::new(&plant, &links, 0, eps).unwrap();
        net.run(2000);
        errs.push(gain_errors(net.gains(), &plant).0);
        rounds.push(net.rounds() as f64);
    }
    let errs = sorted(errs);
    let (med, p95) = (pct(&errs, 0.5), pct(&errs, 0.95));
    let secs = start.elapsed().as_secs_f64();
    let pass = med < 1e-6 && p95 < 1e-3 && secs < 30.0;
    suite.record(
        "2",
        pass,
        "Push-Sum under failures, p=0.7, 100 seeds",
        format!(
            "worst-node G error median {med:.1e}, p95 {p95:.1e}, max {:.1e}; rounds to stop max {}, {secs:.1} s",
            errs.last().unwrap(),
            sorted(rounds).last().unwrap()
        ),
    );
}

fn c3(suite: &mut Suite) {
    let plant = tracker();
    let g = Graph::default_topology();
    let links = LinkFailureModel::new(g.clone(), 0.5, 17).unwrap();
    let mut s = init_pushsum(&plant, &g, 2, 0.0).unwrap();
    let total_c = |s: &[PushSumNodeState]| s.iter().fold(DMatrix::zeros(4, 4), |acc, x| acc + &x.c_tilde);
    let c0 = total_c(&s);
    let scale = c0.amax();
    let (mut dw, mut dc) = (0.0f64, 0.0f64);
    for t in 0..10_000 {
        s = round_with_mask(&s, &g, &links.mask(RoundKey::outer(t)));
        dw = dw.max((s.iter().map(|x| x.w).sum::<f64>() - 1.0).abs());
        dc = dc.max((total_c(&s) - &c0).amax() / scale);
    }
    suite.record(
        "3",
        dw <= 1e-12 && dc <= 1e-12,
        "Push-Sum conservation over 1e4 failure patterns",
        format!("max |sum w - 1| {dw:.1e}, max relative drift of sum C {dc:.1e}"),
    );
}

fn c4(suite: &mut Suite) {
    let start = Instant::now();
    let g = Graph::default_topology();
    let links = LinkFailureModel::new(g.clone(), 0.6, 23).unwrap();
    let rho_bar = g.laplacian_radius().unwrap();
    let n = g.n_nodes();
    let samples = 100_000u64;
    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut sq = DMatrix::<f64>::zeros(n, n);
    let mut rho_max = 0.0f64;
    for t in 0..samples {
        let l = links.sample_laplacian(RoundKey::outer(t));
        rho_max = rho_max.max(jacobi_eigen(&l).unwrap().max());
        sq += l.component_mul(&l);
        sum += l;
    }
    let k = samples as f64;
    let target = g.laplacian().as_matrix() * 0.6;
    let mut worst_z = 0.0f64;
    let mut zero_var_ok = true;
    for idx in 0..n * n {
        let mean = sum[idx] / k;
        let var = (sq[idx] / k - mean * mean) * k / (k - 1.0);
        let se = (var.max(0.0) / k).sqrt();
        if se == 0.0 {
            zero_var_ok &= mean == target[idx];
        } else {
            worst_z = worst_z.max((mean - target[idx]).abs() / se);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst_z < 5.0 && zero_var_ok && rho_max <= rho_bar + 1e-9 && secs < 30.0;
    suite.record(
        "4",
        pass,
        "random Laplacian mean and spectrum, p=0.6, 1e5 samples",
        format!("worst |mean - 0.6 L| / se {worst_z:.2}, max rho(L) {rho_max:.6} vs {rho_bar:.6}, {secs:.1} s"),
    );
}

fn c5(suite: &mut Suite) {
    let start = Instant::now();
    let g = Graph::default_topology();
    let n = g.n_nodes();
    let delta = default_delta(&g).unwrap();
    let p = 0.7;
    let draws = 10_000u64;
    let ones = DVector::from_element(n, 1.0);
    let mut worst_z = 0.0f64;
    let mut fixed = 0.0f64;
    let mut zero_var_ok = true;
    for gamma in [1u32, 3, 10] {
        let (target, _) = expected_m(&g, p, delta, gamma).unwrap();
        let mut sum = DMatrix::<f64>::zeros(n, n);
        let mut sq = DMatrix::<f64>::zeros(n, n);
        for k in 0..draws {
            let m = sample_consensus_product(&g, p, delta, gamma, &mut stream(31 + gamma as u64, DOMAIN_MC, k));
            fixed = fixed.max((&m * &ones - &ones).amax());
            sq += m.component_mul(&m);
            sum += m;
        }
        let k = draws as f64;
        for idx in 0..n * n {
            let mean = sum[idx] / k;
            let var = (sq[idx] / k - mean * mean) * k / (k - 1.0);
            let se = (var.max(0.0) / k).sqrt();
            if se < 1e-15 {
                zero_var_ok &= (mean - target[idx]).abs() < 1e-12;
            } else {
                worst_z = worst_z.max((mean - target[idx]).abs() / se);
            }
        }
    }
    suite.record(
        "5a",
        worst_z < 5.0 && zero_var_ok,
        "Monte-Carlo E[M^(g)] vs (I - p L/delta)^g, g in {1,3,10}",
        format!("worst |mean - closed form| / se {worst_z:.2}"),
    );
    suite.record("5b", fixed < 1e-12, "M^(g) 1 = 1 on every draw", format!("max |M 1 - 1| {fixed:.1e}"));

    let mut worst_ratio = 0.0f64;
    for g in [Graph::complete(3).unwrap(), Graph::path(4).unwrap()] {
        let n = g.n_nodes();
        let delta = default_delta(&g).unwrap();
        let w = orthonormal_complement(n).unwrap();
        for p in [0.3, 0.6, 0.9] {
            let links = LinkFailureModel::new(g.clone(), p, 0).unwrap();
            let p_d = exact_disconnection_probability(&links).p_hat;
            let (_, theta_pd) = theta_values(p, p_d, delta, n).unwrap();
            let round = round_kron_moment_enumerated(&g, p, delta).unwrap();
            for gamma in 1..=8u32 {
                let moment = disagreement_kron_moment(&round, &w, gamma);
                worst_ratio = worst_ratio.max(spectral_norm(&moment) / theta_pd.powi(gamma as i32));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    suite.record(
        "5c",
        worst_ratio <= 1.0 + 1e-12 && secs < 120.0,
        "|E[(S^(g))^[2]]| <= theta_pd^g by enumeration on K3 and path-4",
        format!("worst norm / bound {worst_ratio:.4}, criterion total {secs:.1} s"),
    );
}

/// Largest per-node gap between the filter's error and the error
/// recursion `E⁺ = (M^(γ) ⊗ I)(diag(A_i) E + h)` driven by the same draws.
fn recursion_gap(plant: &Plant, links: &LinkFailureModel, delta: f64, gamma: usize, gains: &FrozenGains) -> f64 {
    let params = ConsensusParams::new(delta, gamma, links.base(), false).unwrap().0;
    let mut net = DkfNetwork::frozen(plant, links, params, gains).unwrap();
    let (n, nn) = (plant.n(), plant.n_nodes());
    let steps = 100;
    let mut rng = stream(41, DOMAIN_PLANT, 0);
    let x0 = plant.sample_x0(&mut rng);
    let noises: Vec<_> = (0..steps).map(|_| plant.draw_noise(&mut rng)).collect();
    let traj = plant.simulate_with(x0.clone(), noises).unwrap();
    let id = DMatrix::<f64>::identity(n, n);
    let closed: Vec<DMatrix<f64>> = (0..nn).map(|i| &id - &gains.k[i] * &plant.output(i).c).collect();
    let mut e = DMatrix::from_fn(n, nn, |r, _| x0[r]);
    let mut worst = 0.0f64;
    for t in 0..steps {
        let noise = &traj.noises[t];
        let mut next = DMatrix::zeros(n, nn);
        for i in 0..nn {
            let col = &closed[i] * (plant.a() * e.column(i) + &noise.f) - &gains.k[i] * &noise.g[i];
            next.set_column(i, &col);
        }
        for h in 0..gamma {
            let mask = links.mask(RoundKey::inner(t as u64, h as u32));
            let m = DMatrix::identity(nn, nn) - laplacian_of_mask(links.base(), &mask) / delta;
            next = &next * m.transpose();
        }
        e = next;
        net.step(plant, &traj.measurements[t]).unwrap();
        let full = net.error_vector(&traj.states[t + 1]);
        let scale = 1.0 + full.e.amax();
        for i in 0..nn {
            worst = worst.max((full.node(i) - e.column(i)).amax() / scale);
        }
    }
    worst
}

fn c6(suite: &mut Suite) {
    let plant = tracker();
    let g = Graph::default_topology();
    let delta = default_delta(&g).unwrap();
    let mut worst = 0.0f64;
    for (p, gamma) in [(1.0, 1), (0.7, 1), (0.7, 4), (0.5, 2), (0.3, 10)] {
        let links = LinkFailureModel::new(g.clone(), p, 12).unwrap();
        let gains = FrozenGains::compute(&plant, &links, 0, default_eps(&plant), 2000).unwrap();
        worst = worst.max(recursion_gap(&plant, &links, delta, gamma, &gains));
    }
    suite.record(
        "6",
        worst < 1e-9,
        "filter vs direct error recursion, 100 steps, shared draws",
        format!("worst relative per-step gap {worst:.1e}"),
    );
}

fn c7(suite: &mut Suite) {
    let start = Instant::now();
    let cfg = paper5();
    let setup = Setup::new(&cfg).unwrap();
    let links = LinkFailureModel::new(setup.graph.clone(), 0.7, cfg.seed).unwrap();
    let trial = TrialSetup {
        plant: &setup.plant,
        sol: &setup.sol,
        links: &links,
        params: cfg.params(&setup.graph, 20).unwrap().0,
        gains: GainSource::Frozen { leader: cfg.leader, eps: setup.eps, max_rounds: cfg.pushsum_max_rounds },
        horizon: cfg.horizon,
        window_start: cfg.window_start(),
        noise_seed: cfg.seed,
    };
    let record = TrialRecord { errors: false, node_cov: true };
    let outcomes = trial.run_many(cfg.trials, None, record, cfg.exec).unwrap();
    let kept: Vec<_> = outcomes.iter().filter(|o| !o.diverged()).collect();
    let p_inf = &setup.sol.p_inf;
    let mut worst = 0.0f64;
    for i in 0..setup.plant.n_nodes() {
        let mean = kept.iter().fold(DMatrix::zeros(4, 4), |acc, o| acc + &o.node_cov[i]) / kept.len() as f64;
        worst = worst.max((mean - p_inf).norm() / p_inf.norm());
    }
    suite.record(
        "7a",
        worst < 0.15 && kept.len() == outcomes.len(),
        "per-node steady error covariance vs P_inf, p=0.7, gamma=20, 300x450",
        format!("worst relative Frobenius gap {worst:.3}, diverged {}", outcomes.len() - kept.len()),
    );

    let table = run_mse_grid(&cfg, &setup, &[1.0], &[8], cfg.trials).unwrap();
    let row = table.get(1.0, 8).unwrap();
    let excess = row.mse_mean / row.ckf_mse - 1.0;
    let secs = start.elapsed().as_secs_f64();
    suite.record(
        "7b",
        excess.abs() < 0.10 && secs < 600.0,
        "MSE vs centralized filter, p=1, gamma=8",
        format!("MSE {:.4e} vs CKF {:.4e} ({:+.1}%), criterion total {secs:.1} s", row.mse_mean, row.ckf_mse, 100.0 * excess),
    );
}

fn c8(suite: &mut Suite) {
    let cfg = paper5();
    let setup = Setup::new(&cfg).unwrap();
    let table = run_mse_grid(&cfg, &setup, &[0.7], &[1], cfg.trials).unwrap();
    let row = table.get(0.7, 1).unwrap();
    suite.record(
        "8a",
        row.diverged_fraction < 0.05 && row.mse_mean.is_finite(),
        "p=0.7, gamma=1 stays bounded",
        format!("diverged {:.1}%, MSE {:.3e}", 100.0 * row.diverged_fraction, row.mse_mean),
    );
    let table = run_mse_grid(&cfg, &setup, &[0.5], &[1, 2], cfg.trials).unwrap();
    let (r1, r2) = (table.get(0.5, 1).unwrap(), table.get(0.5, 2).unwrap());
    suite.record(
        "8b",
        r1.diverged_fraction > 0.5 && r2.diverged_fraction > 0.5,
        "p=0.5, gamma in {1,2} diverges",
        format!(
            "diverged {:.1}% at gamma=1, {:.1}% at gamma=2",
            100.0 * r1.diverged_fraction,
            100.0 * r2.diverged_fraction
        ),
    );
}

/// `‖E[E_t]‖` for `t = 0..=steps` without noise, from `E_0 = 𝟙 ⊗ x̄_0`.
/// The noise has zero mean, so the average error obeys the same recursion.
fn mean_error_trace(
    plant: &Plant,
    gains: &FrozenGains,
    links: &LinkFailureModel,
    delta: f64,
    gamma: usize,
    trials: u64,
    steps: usize,
) -> Vec<f64> {
    let (n, nn) = (plant.n(), plant.n_nodes());
    let g = links.base();
    let x0 = DVector::from_row_slice(&TRACKER_X0_MEAN);
    let closed: Vec<DMatrix<f64>> = (0..nn)
        .map(|i| (DMatrix::identity(n, n) - &gains.k[i] * &plant.output(i).c) * plant.a())
        .collect();
    let mut totals = vec![DMatrix::<f64>::zeros(n, nn); steps + 1];
    let mut mask = vec![true; g.n_edges()];
    for k in 0..trials {
        let trial_links = links.for_trial(k);
        let mut e = DMatrix::from_fn(n, nn, |r, _| x0[r]);
        let mut tmp = e.clone();
        totals[0] += &e;
        for t in 0..steps {
            for i in 0..nn {
                let col = &closed[i] * e.column(i);
                e.set_column(i, &col);
            }
            for h in 0..gamma {
                trial_links.fill_mask(RoundKey::inner(t as u64, h as u32), &mut mask);
                consensus_round_into(&e, &mut tmp, g, &mask, delta);
                std::mem::swap(&mut e, &mut tmp);
            }
            totals[t + 1] += &e;
        }
    }
    totals.iter().map(|s| s.norm() / trials as f64).collect()
}

fn c9(suite: &mut Suite) {
    let start = Instant::now();
    let cfg = paper5();
    let setup = Setup::new(&cfg).unwrap();
    let (plant, sol, g, delta) = (&setup.plant, &setup.sol, &setup.graph, setup.delta);

    let mut reports = Vec::new();
    let mut implication = true;
    let mut checked = 0;
    for p in [1.0, 0.9, 0.7, 0.6, 0.5, 0.3] {
        let links = LinkFailureModel::new(g.clone(), p, cfg.seed).unwrap();
        let r = bounds_report(plant, sol, &links, delta, cfg.pd_trials).unwrap();
        for mult in [1.0, 1.1, 1.5, 2.0, 4.0, 16.0] {
            let gamma = (r.gamma_closed_form as f64 * mult).round() as u64;
            implication &= bound_matrix_ar(gamma, r.lambda, r.c_b, r.theta_pbeta).1 < 1.0;
            checked += 1;
        }
        implication &= r.gamma_closed_form >= r.gamma_min_mean;
        reports.push(r);
    }
    suite.record(
        "9a",
        implication,
        "closed-form gamma condition implies rho(A_R) < 1",
        format!(
            "{checked} (p, gamma) pairs; closed-form / mean minimal gamma: {}",
            reports
                .iter()
                .map(|r| format!("p={} {}/{}", r.p_beta, r.gamma_closed_form, r.gamma_min_mean))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    );

    let exact = FrozenGains::exact(plant).unwrap();
    let steps = 60;
    let mut decays = Vec::new();
    let mut decay_ok = true;
    for r in reports.iter().filter(|r| r.p_beta == 1.0 || r.p_beta == 0.7) {
        let links = LinkFailureModel::new(g.clone(), r.p_beta, cfg.seed).unwrap();
        let trace = mean_error_trace(plant, &exact, &links, delta, r.gamma_min_mean as usize, 300, steps);
        let ratio = trace[steps] / trace[0];
        decay_ok &= ratio < 1e-3 && trace.iter().all(|x| x.is_finite());
        decays.push(format!("p={} gamma={} |E[E_{steps}]|/|E_0| {ratio:.1e}", r.p_beta, r.gamma_min_mean));
    }
    suite.record("9b", decay_ok, "mean error decays at gamma_min_mean, 300 trials", decays.join("; "));

    let mut ms = Vec::new();
    let mut ms_ok = true;
    for r in reports.iter().filter(|r| r.p_beta == 1.0 || r.p_beta == 0.7) {
        let gamma = r.gamma_min_ms as usize;
        let rho = bound_matrix_as(r.gamma_min_ms, r.lambda, r.c_b, r.theta_pbeta, r.theta_pd).unwrap().1;
        let links = LinkFailureModel::new(g.clone(), r.p_beta, cfg.seed).unwrap();
        let trial = TrialSetup {
            plant,
            sol,
            links: &links,
            params: cfg.params(g, gamma).unwrap().0,
            gains: GainSource::Frozen { leader: cfg.leader, eps: setup.eps, max_rounds: cfg.pushsum_max_rounds },
            horizon: cfg.horizon,
            window_start: cfg.window_start(),
            noise_seed: cfg.seed,
        };
        let s = summarize(&trial.run_many(100, None, TrialRecord::default(), cfg.exec).unwrap());
        ms_ok &= rho < 1.0 && s.diverged_fraction < 0.05;
        ms.push(format!(
            "p={} gamma={gamma} rho(A_S) {rho:.4} diverged {:.1}% MSE/CKF {:.3}",
            r.p_beta,
            100.0 * s.diverged_fraction,
            s.mse_mean / s.ckf_mse
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    suite.record(
        "9c",
        ms_ok,
        "rho(A_S) < 1 at gamma_min_ms and no divergence, 100 trials",
        format!("{}; criterion total {secs:.1} s", ms.join("; ")),
    );
}

/// `s·U` with `U` uniform over the rotations and reflections of a regular
/// pentagon. `E[U X Uᵀ]` fixes the identity, so `ρ(E[A ⊗ A]) = s²`.
struct ScaledDihedral {
    support: Vec<DMatrix<f64>>,
}

impl ScaledDihedral {
    fn new(rho: f64) -> Self {
        let s = rho.sqrt();
        let mut support = Vec::new();
        for k in 0..5 {
            let a = 2.0 * std::f64::consts::PI * k as f64 / 5.0;
            let (sin, cos) = a.sin_cos();
            support.push(DMatrix::from_row_slice(2, 2, &[cos, -sin, sin, cos]) * s);
            support.push(DMatrix::from_row_slice(2, 2, &[cos, sin, sin, -cos]) * s);
        }
        ScaledDihedral { support }
    }
}

impl RandomMatrixSource for ScaledDihedral {
    fn dim(&self) -> usize {
        2
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        self.support[rng.random_range(0..self.support.len())].clone()
    }

    fn support(&self) -> Option<Vec<(f64, DMatrix<f64>)>> {
        let w = 1.0 / self.support.len() as f64;
        Some(self.support.iter().map(|a| (w, a.clone())).collect())
    }
}

fn c10(suite: &mut Suite) {
    let start = Instant::now();
    let steps = 100_000;
    for (id, target) in [("10a", 0.9), ("10b", 1.1)] {
        let source = ScaledDihedral::new(target);
        let exact = kron_square_radius(&source, KronMode::Exact).unwrap().rho;
        let mc = kron_square_radius(&source, KronMode::MonteCarlo { draws: 10_000, seed: 3 }).unwrap().rho;
        let explicit = source
            .support
            .iter()
            .fold(DMatrix::<f64>::zeros(4, 4), |acc, a| acc + a.kronecker(a) / 10.0)
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        let radius_ok = (exact - target).abs() < 1e-9 && (explicit - target).abs() < 1e-9 && (mc - target).abs() < 1e-2;

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut x = DVector::zeros(2);
        let (mut late_sum, mut late_count, mut peak) = (0.0, 0usize, 0.0f64);
        let mut crossed = None;
        for t in 0..steps {
            let a = source.sample(&mut rng);
            let w = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
            x = a * x + w;
            let sq = x.norm_squared();
            peak = peak.max(sq);
            if t >= steps / 2 {
                late_sum += sq;
                late_count += 1;
            }
            if crossed.is_none() && sq > 1e6 {
                crossed = Some(t);
                if target > 1.0 {
                    break;
                }
            }
        }
        if target < 1.0 {
            // Stationary second moment of x⁺ = A x + w with E‖w‖² = 2.
            let stationary = 2.0 / (1.0 - target);
            let late = late_sum / late_count as f64;
            let pass = radius_ok && crossed.is_none() && (late / stationary - 1.0).abs() < 0.15;
            suite.record(
                id,
                pass,
                "synthetic i.i.d. system with rho(E[A^[2]]) = 0.9 stays bounded over 1e5 steps",
                format!(
                    "rho exact {exact:.6}, explicit {explicit:.6}, MC {mc:.4}; late mean |x|^2 {late:.2} vs {stationary:.1}, peak {peak:.1}"
                ),
            );
        } else {
            let secs = start.elapsed().as_secs_f64();
            let pass = radius_ok && crossed.is_some() && secs < 60.0;
            suite.record(
                id,
                pass,
                "synthetic i.i.d. system with rho(E[A^[2]]) = 1.1 grows past 1e6",
                format!("rho exact {exact:.6}, explicit {explicit:.6}, MC {mc:.4}; |x|^2 > 1e6 at step {crossed:?}, criterion total {secs:.2} s"),
            );
        }
    }
}

fn main() -> ExitCode {
    let mut suite = Suite { results: Vec::new() };
    let criteria: [(&str, fn(&mut Suite)); 10] = [
        ("1", c1),
        ("2", c2),
        ("3", c3),
        ("4", c4),
        ("5", c5),
        ("6", c6),
        ("7", c7),
        ("8", c8),
        ("9", c9),
        ("10", c10),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    for (id, run) in criteria {
        if only.is_empty() || only.iter().any(|o| o == id) {
            run(&mut suite);
        }
    }
    let failed: Vec<&str> = suite.results.iter().filter(|(_, ok)| !ok).map(|(id, _)| id.as_str()).collect();
    let unexpected_fail: Vec<&str> = failed.iter().copied().filter(|id| !KNOWN_UNATTAINABLE.contains(id)).collect();
    let unexpected_pass: Vec<&str> = suite
        .results
        .iter()
        .filter(|(id, ok)| *ok && KNOWN_UNATTAINABLE.contains(&id.as_str()))
        .map(|(id, _)| id.as_str())
        .collect();
    println!(
        "acceptance: {} passed, {} failed ({} known unattainable)",
        suite.results.len() - failed.len(),
        failed.len(),
        failed.len() - unexpected_fail.len()
    );
    if !unexpected_pass.is_empty() {
        println!("known-unattainable criteria now pass, update the list: {unexpected_pass:?}");
    }
    if unexpected_fail.is_empty() && unexpected_pass.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
