//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::time::{Duration, Instant};

use dsgld::data::{partition, synth_linear};
use dsgld::linalg::symmetry_deviation;
use dsgld::metrics::{gaussian_w2, sample_moments};
use dsgld::models::{gaussian_toy_model, linear_regression_model, ModelSpec};
use dsgld::network::{
    barbell_schedule, lollipop_schedule, spectral_diagnostics, static_complete_schedule, GraphSchedule, MixingMatrix,
    Topology,
};
use dsgld::rng::{keyed_rng, standard_normal_vector, Purpose, TrialStreams};
use dsgld::samplers::{
    diging_sgld_step, run, run_with_observer, InitLaw, NetworkState, NoiseMode, SamplerConfig, SamplerKind,
};
use dsgld::theory::{d_bar, estimate_init_stats, evaluate_constants, lemma_bound_params, ProblemConstants};
use dsgld_harness::figures::{reproduce, ReproduceOptions};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

type Outcome = Result<(bool, String), String>;

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// The fixture shared by the linear-regression criteria: n = 100, d = 5 plus
/// intercept, λ = 0.1, unit noise, 20 agents with 5 samples each.
fn linreg_model() -> Result<ModelSpec, String> {
    let (data, _) = synth_linear(100, 5, 0.1, 1.0, 0).map_err(fail)?;
    let part = partition(data.len(), 20, 0).map_err(fail)?;
    linear_regression_model(&data.blocks(&part), 0.1).map_err(fail)
}

fn tracking_identity() -> Outcome {
    let model = linreg_model()?;
    let schedule = barbell_schedule(20, 50, 0).map_err(fail)?;
    let cfg = SamplerConfig::new(0.1 / model.lips, 1000).with_stride(1000);
    let mut worst = 0.0f64;
    run_with_observer(SamplerKind::Diging, &schedule, &model, &cfg, &TrialStreams::new(0, 0), |s| {
        let ybar = s.mean_y();
        let mut gbar = DVector::zeros(model.dim);
        for (i, agent) in model.agents.iter().enumerate() {
            gbar += agent.gradient(&s.x.row(i).transpose());
        }
        gbar /= model.num_agents() as f64;
        worst = worst.max((&ybar - gbar).norm() / (1.0 + ybar.norm()));
    })
    .map_err(fail)?;
    Ok((worst <= 1e-10, format!("max relative deviation {worst:.3e} over 1000 iterations")))
}

/// Checks one entry against its topology without the library's validator.
fn entry_defects(w: &MixingMatrix, topology: &Topology) -> Vec<String> {
    let m = w.entries();
    let n = m.nrows();
    let mut defects = Vec::new();
    if symmetry_deviation(m) > 1e-12 {
        defects.push("asymmetric".to_string());
    }
    for i in 0..n {
        let row: f64 = m.row(i).sum();
        if (row - 1.0).abs() > 1e-12 {
            defects.push(format!("row {i} sums to {row}"));
        }
        for j in 0..n {
            if m[(i, j)] < -1e-12 {
                defects.push(format!("negative entry ({i},{j})"));
            }
            if i != j && !topology.has_edge(i, j) && m[(i, j)].abs() > 1e-12 {
                defects.push(format!("weight on non-edge ({i},{j})"));
            }
        }
    }
    defects
}

fn mixing_properties() -> Outcome {
    let mut schedules: Vec<(String, GraphSchedule)> = Vec::new();
    for seed in 0..5u64 {
        schedules.push((format!("barbell N=20 seed {seed}"), barbell_schedule(20, 50, seed).map_err(fail)?));
        schedules.push((format!("barbell N=30 seed {seed}"), barbell_schedule(30, 50, seed).map_err(fail)?));
        schedules.push((format!("lollipop N=20 seed {seed}"), lollipop_schedule(20, (3, 4), 3, 50, seed).map_err(fail)?));
    }
    let mut rng = keyed_rng(2024, Purpose::Schedule, 0, 0, 0);
    let mut problems = Vec::new();
    for draw in 0..100 {
        let (name, s) = &schedules[draw % schedules.len()];
        let k = (standard_normal_vector(&mut rng, 1)[0].abs() * 1e6) as usize % s.period();
        for d in entry_defects(s.at(k), s.topology_at(k)) {
            problems.push(format!("{name} entry {k}: {d}"));
        }
    }
    let mut worst_delta = 0.0f64;
    for (name, s) in &schedules {
        let delta = spectral_diagnostics(s, s.period()).map_err(fail)?.delta;
        if delta >= 1.0 {
            problems.push(format!("{name}: delta = {delta}"));
        }
        worst_delta = worst_delta.max(delta);
    }
    let detail = if problems.is_empty() {
        format!("100 entries clean; largest delta {worst_delta:.4} over {} schedules", schedules.len())
    } else {
        problems.join("; ")
    };
    Ok((problems.is_empty(), detail))
}

fn hand_oracle() -> Outcome {
    let model = gaussian_toy_model(&[DVector::from_element(1, 1.0), DVector::from_element(1, 3.0)]).map_err(fail)?;
    let t = Topology::complete(2).map_err(fail)?;
    let w = MixingMatrix::from_entries(DMatrix::from_element(2, 2, 0.5), &t).map_err(fail)?;
    let cfg = SamplerConfig::new(0.1, 1).with_noise(NoiseMode::LangevinOff).with_init(InitLaw::Zero);
    let streams = TrialStreams::new(0, 0);
    let s0 = NetworkState::initial(&model, &cfg, &streams).map_err(fail)?;
    let s1 = diging_sgld_step(&s0, &w, &model, &cfg, &streams).map_err(fail)?;
    let got = [s1.x[(0, 0)], s1.x[(1, 0)], s1.y[(0, 0)], s1.y[(1, 0)]];
    let want = [0.1, 0.3, -1.9, -1.7];
    // one rounding of 0.1·3 separates the float result from the decimal value
    let ok = got.iter().zip(&want).all(|(g, w)| (g - w).abs() <= 1e-15);
    Ok((ok, format!("x = ({}, {}), y = ({}, {})", got[0], got[1], got[2], got[3])))
}

fn fig2a_reproduction() -> Outcome {
    let rep = reproduce("fig2a", &ReproduceOptions::default()).map_err(fail)?;
    let a = &rep.artifact;
    let diging = &a.result(SamplerKind::Diging).ok_or("missing diging")?.curve;
    let de = &a.result(SamplerKind::DeSgld).ok_or("missing de_sgld")?.curve;
    let (fd, fe) = (diging.value_at(100).ok_or("no iteration 100")?, de.value_at(100).ok_or("no iteration 100")?);
    let mut wiggle = 0.0f64;
    let mut running_min = f64::INFINITY;
    for (&k, &v) in diging.iterations.iter().zip(&diging.mean) {
        if k < 10 {
            continue;
        }
        running_min = running_min.min(v);
        wiggle = wiggle.max(v / running_min - 1.0);
    }
    let checks = a.all_checks_passed();
    let ok = fd < fe && wiggle <= 0.05 && checks;
    Ok((
        ok,
        format!(
            "W2 at k=100: diging {fd:.4} (eta {:.2}/L) vs de_sgld {fe:.4} (eta {:.2}/L); largest rise after k=10 {:.2}%; self-checks {}",
            a.result(SamplerKind::Diging).map(|r| r.eta * rep.lips).unwrap_or(f64::NAN),
            a.result(SamplerKind::DeSgld).map(|r| r.eta * rep.lips).unwrap_or(f64::NAN),
            100.0 * wiggle,
            if checks { "pass" } else { "FAIL" }
        ),
    ))
}

fn posterior_fidelity() -> Outcome {
    let model = linreg_model()?;
    let target = model.target.clone().ok_or("linear model without closed-form posterior")?;
    let schedule = static_complete_schedule(20, 1e-6).map_err(fail)?;
    let (k, trials) = (2000, 500);
    let cfg = SamplerConfig::new(0.1 / model.lips, k).with_stride(k);
    let finals: Vec<DMatrix<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            run(SamplerKind::Diging, &schedule, &model, &cfg, &TrialStreams::new(t as u64, 0))
                .map(|traj| traj.last().x.clone())
                .map_err(fail)
        })
        .collect::<Result<_, _>>()?;
    let direct = target.draw(trials, 7);
    let base = sample_moments(&direct).map_err(fail)?;
    let baseline = gaussian_w2(&base.mean, &base.covariance, &target.mean, &target.covariance).map_err(fail)?;
    let mut worst = 0.0f64;
    for agent in 0..model.num_agents() {
        let samples: Vec<DVector<f64>> = finals.iter().map(|x| x.row(agent).transpose()).collect();
        let m = sample_moments(&samples).map_err(fail)?;
        worst = worst.max(gaussian_w2(&m.mean, &m.covariance, &target.mean, &target.covariance).map_err(fail)?);
    }
    Ok((
        worst <= 3.0 * baseline,
        format!("worst agent W2 {worst:.4} vs direct baseline {baseline:.4} (ratio {:.2}, limit 3)", worst / baseline),
    ))
}

/// Agent-averaged W₂ to the toy target, pooling post-burn-in iterates over trials.
fn toy_steady_w2(model: &ModelSpec, schedule: &GraphSchedule, eta: f64) -> Result<f64, String> {
    let target = model.target.clone().ok_or("toy model without target")?;
    let burn_in = (10.0 / (model.mu * eta)).ceil() as usize;
    let (kept, trials) = (1000, 8);
    let cfg = SamplerConfig::new(eta, burn_in + kept).with_stride(burn_in + kept);
    let n = model.num_agents();
    let pooled: Vec<Vec<Vec<DVector<f64>>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut per_agent = vec![Vec::with_capacity(kept); n];
            run_with_observer(SamplerKind::Diging, schedule, model, &cfg, &TrialStreams::new(100 + t as u64, 0), |s| {
                if s.iteration > burn_in {
                    for (i, bucket) in per_agent.iter_mut().enumerate() {
                        bucket.push(s.x.row(i).transpose());
                    }
                }
            })
            .map_err(fail)?;
            Ok(per_agent)
        })
        .collect::<Result<_, String>>()?;
    let mut total = 0.0;
    for agent in 0..n {
        let samples: Vec<&DVector<f64>> = pooled.iter().flat_map(|trial| trial[agent].iter()).collect();
        let m = sample_moments(samples.iter().copied()).map_err(fail)?;
        total += gaussian_w2(&m.mean, &m.covariance, &target.mean, &target.covariance).map_err(fail)?;
    }
    Ok(total / n as f64)
}

fn sqrt_eta_scaling() -> Outcome {
    let n = 200;
    let centers: Vec<DVector<f64>> =
        (0..n).map(|i| DVector::from_element(1, 2.0 * i as f64 / (n - 1) as f64 - 1.0)).collect();
    let model = gaussian_toy_model(&centers).map_err(fail)?;
    let schedule = static_complete_schedule(n, 1e-6).map_err(fail)?;
    let eta = 0.2;
    let coarse = toy_steady_w2(&model, &schedule, eta)?;
    let fine = toy_steady_w2(&model, &schedule, eta / 4.0)?;
    let ratio = coarse / fine;
    Ok((
        (1.6..=2.6).contains(&ratio),
        format!("steady W2 {coarse:.4} at eta={eta}, {fine:.4} at eta/4; ratio {ratio:.3} (target [1.6, 2.6])"),
    ))
}

fn theory_sweep() -> Outcome {
    let model = linreg_model()?;
    let schedule = barbell_schedule(20, 50, 0).map_err(fail)?;
    let window = schedule.window();
    let delta = spectral_diagnostics(&schedule, window).map_err(fail)?.delta;
    let lemma = lemma_bound_params(model.mu, model.lips, model.num_agents(), window, delta).map_err(fail)?;
    let problem = ProblemConstants {
        mu: model.mu,
        lips: model.lips,
        num_agents: model.num_agents(),
        dim: model.dim,
        sigma: 0.0,
        delta,
        window,
    };
    let init = estimate_init_stats(&schedule, &model, &SamplerConfig::new(lemma.eta_bar, window), 30, 0)
        .map_err(fail)?;
    let barred = d_bar(&problem, &lemma, &init).map_err(fail)?;
    let (mut feasible, mut dominated) = (0, 0);
    let mut first_bad = None;
    for j in 1..=50 {
        let eta = lemma.eta_bar * j as f64 / 50.0;
        match evaluate_constants(&lemma.inputs_at(&problem, eta, &init)) {
            Ok(c) => {
                if c.feasibility.all() {
                    feasible += 1;
                } else if first_bad.is_none() {
                    first_bad = Some(format!("j={j}: lambda={:.6}, {:?}", c.lambda, c.feasibility));
                }
                if c.d_const.is_finite() && c.d_const * eta.sqrt() <= barred.value {
                    dominated += 1;
                }
            }
            Err(e) => {
                if first_bad.is_none() {
                    first_bad = Some(format!("j={j}: {e}"));
                }
            }
        }
    }
    let spread = lemma.lambda_low_spread();
    let ok = feasible == 50 && dominated == 50 && barred.valid && spread <= 1e-12;
    Ok((
        ok,
        format!(
            "feasible {feasible}/50, D*sqrt(eta) <= D_bar {dominated}/50, D_bar contraction {:.3} (valid {}), lambda_low spread {spread:.1e}{}",
            barred.contraction,
            barred.valid,
            first_bad.map(|s| format!("; first infeasible {s}")).unwrap_or_default()
        ),
    ))
}

fn logistic_ordering() -> Outcome {
    let rep = reproduce("fig3a", &ReproduceOptions::default()).map_err(fail)?;
    let a = &rep.artifact;
    let fd = a.result(SamplerKind::Diging).ok_or("missing diging")?.curve.final_mean();
    let fe = a.result(SamplerKind::DeSgld).ok_or("missing de_sgld")?.curve.final_mean();
    let in_range = |v: f64| (0.5..=1.0).contains(&v);
    Ok((
        fd >= fe && in_range(fd) && in_range(fe),
        format!("final accuracy diging {fd:.4} vs de_sgld {fe:.4}"),
    ))
}

fn optimization_exactness() -> Outcome {
    let model = linreg_model()?;
    let schedule = barbell_schedule(20, 50, 0).map_err(fail)?;
    let k = 10_000;
    let cfg = SamplerConfig::new(0.2 / model.lips, k).with_noise(NoiseMode::LangevinOff).with_stride(k);
    let residual = |kind| -> Result<f64, String> {
        let traj = run(kind, &schedule, &model, &cfg, &TrialStreams::new(0, 0)).map_err(fail)?;
        let x = &traj.last().x;
        Ok((0..x.nrows()).map(|i| (x.row(i).transpose() - &model.minimizer).norm()).fold(0.0, f64::max))
    };
    let diging = residual(SamplerKind::Diging)?;
    let dgd = residual(SamplerKind::DeSgld)?;
    Ok((
        diging <= 1e-6 && dgd >= 10.0 * diging,
        format!("max residual after {k} iterations: diging {diging:.3e}, untracked {dgd:.3e}"),
    ))
}

fn random_spd(seed: u64, d: usize) -> DMatrix<f64> {
    let mut rng = keyed_rng(seed, Purpose::Estimate, 99, 0, 0);
    let a = DMatrix::from_fn(d, d, |_, _| standard_normal_vector(&mut rng, 1)[0]);
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

fn w2_suite() -> Outcome {
    let d = 4;
    let mut worst = 0.0f64;
    let mut note = |name: &str, err: f64, log: &mut Vec<String>| {
        worst = worst.max(err);
        if err > 1e-10 {
            log.push(format!("{name} off by {err:e}"));
        }
    };
    let mut problems = Vec::new();
    // commuting covariances: shared eigenbasis Q, diagonal spectra a and b
    let q = random_spd(1, d).symmetric_eigen().eigenvectors;
    let (a, b): (DVector<f64>, DVector<f64>) = (DVector::from_vec(vec![0.5, 1.0, 2.0, 4.0]), DVector::from_vec(vec![1.5, 0.25, 2.0, 9.0]));
    let s1 = &q * DMatrix::from_diagonal(&a) * q.transpose();
    let s2 = &q * DMatrix::from_diagonal(&b) * q.transpose();
    let m1: DVector<f64> = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0]);
    let m2: DVector<f64> = DVector::from_vec(vec![0.0, 1.0, 0.5, 3.0]);
    let closed = ((&m1 - &m2).norm_squared() + a.iter().zip(b.iter()).map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2)).sum::<f64>()).sqrt();
    note("commuting", (gaussian_w2(&m1, &s1, &m2, &s2).map_err(fail)? - closed).abs(), &mut problems);
    // symmetry on generic non-commuting pairs
    for seed in 2..12 {
        let (p, r) = (random_spd(seed, d), random_spd(seed + 100, d));
        let fwd = gaussian_w2(&m1, &p, &m2, &r).map_err(fail)?;
        let back = gaussian_w2(&m2, &r, &m1, &p).map_err(fail)?;
        note("symmetry", (fwd - back).abs(), &mut problems);
    }
    let p = random_spd(50, d);
    note("zero", gaussian_w2(&m1, &p, &m1, &p).map_err(fail)?.abs(), &mut problems);
    let shift = gaussian_w2(&m1, &p, &m2, &p).map_err(fail)?;
    note("mean shift", (shift - (&m1 - &m2).norm()).abs(), &mut problems);
    let detail = if problems.is_empty() { format!("largest deviation {worst:.1e}") } else { problems.join("; ") };
    Ok((problems.is_empty(), detail))
}

struct Criterion {
    id: u8,
    name: &'static str,
    check: fn() -> Outcome,
    budget: Option<Duration>,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "gradient-tracking identity", check: tracking_identity, budget: Some(Duration::from_secs(5)) },
        Criterion { id: 2, name: "mixing-matrix properties", check: mixing_properties, budget: None },
        Criterion { id: 3, name: "hand-oracle step", check: hand_oracle, budget: None },
        Criterion { id: 4, name: "barbell full-batch W2 ordering", check: fig2a_reproduction, budget: Some(Duration::from_secs(180)) },
        Criterion { id: 5, name: "posterior fidelity", check: posterior_fidelity, budget: None },
        Criterion { id: 6, name: "sqrt(eta) bias scaling", check: sqrt_eta_scaling, budget: None },
        Criterion { id: 7, name: "theory feasibility sweep", check: theory_sweep, budget: None },
        Criterion { id: 8, name: "logistic accuracy ordering", check: logistic_ordering, budget: None },
        Criterion { id: 9, name: "tracking vs untracked exactness", check: optimization_exactness, budget: None },
        Criterion { id: 10, name: "W2 formula suite", check: w2_suite, budget: None },
    ];
    let mut failed = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.check)();
        let elapsed = start.elapsed();
        let (mut ok, mut detail) = match outcome {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if let Some(budget) = c.budget {
            if elapsed > budget {
                ok = false;
                detail.push_str(&format!("; over the {budget:?} budget"));
            }
        }
        println!("{} [{:>2}] {}: {detail} ({:.2?})", if ok { "PASS" } else { "FAIL" }, c.id, c.name, elapsed);
        if !ok {
            failed.push(c.id);
        }
    }
    println!(
        "acceptance: {} of {} criteria passed{}",
        criteria.len() - failed.len(),
        criteria.len(),
        if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
