//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p remest --test acceptance`.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use common::{conditional_mse, threshold_cost_by_quadrature, SwitchingThreshold};
use remest::analytics::{self, cost_closed_form, cost_derivative, optimal_threshold, SweepGrid};
use remest::distributions::{Exponential, Family};
use remest::matching::{check_matching, check_matching_empirical, default_grid, LogBranch, MatchSpec};
use remest::simulator::{compare_strategies, estimate_conditional_stats, estimate_cost, stationarity_check, Execution};
use remest::strategies::{Strategy, ThresholdStrategy};
use remest::{RngHandle, SystemParams};

const SIGMAS: f64 = 4.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn reference() -> SystemParams<f64> {
    SystemParams::reference()
}

fn sweep_points() -> Vec<SystemParams<f64>> {
    SweepGrid::default().points().expect("default grid")
}

/// Lemma pair matching, analytic < 1e-12 and empirical < 0.02 at 10⁶ samples, under 10 s.
fn c1_matching() -> Outcome {
    let start = Instant::now();
    let p = reference();
    let analytic = check_matching(&MatchSpec::exponential_gamma_pair(&p, default_grid()).unwrap());
    let n = 1_000_000;
    let mut rng = RngHandle::new(1001, 0);
    let e = Exponential::new(p.lambda()).unwrap();
    let g = p.noise();
    let xs: Vec<f64> = (0..n).map(|_| e.sample(&mut rng) - 1.0 / p.lambda()).collect();
    let vs: Vec<f64> = (0..n).map(|_| g.sample(&mut rng) - g.mean()).collect();
    let empirical = check_matching_empirical(&xs, &vs, p.alpha(), p.gamma(), &default_grid(), LogBranch::Continuous { max_step: 0.1 }).unwrap();
    let elapsed = start.elapsed();
    let a = analytic.max_residual.unwrap_or(f64::INFINITY);
    let b = empirical.max_residual.unwrap_or(f64::INFINITY);
    outcome(
        a < 1e-12 && b < 0.02 && analytic.undefined_points == 0 && elapsed < Duration::from_secs(10),
        format!("analytic max {a:.3e} (<1e-12), empirical max {b:.4} (<0.02), {:.2}s (<10s)", elapsed.as_secs_f64()),
    )
}

/// Conditional MSE per sign within 4σ of m = 2/3 at T = 10⁶, under 30 s.
fn c2_conditional_mse() -> Outcome {
    let start = Instant::now();
    let p = reference();
    let s = estimate_conditional_stats(&p, &ThresholdStrategy::optimal(p), 1_000_000, &mut RngHandle::new(1002, 0)).unwrap();
    let elapsed = start.elapsed();
    let m = 2.0 / 3.0;
    let (zp, zm) = (s.mse_plus.z_score(m), s.mse_minus.z_score(m));
    outcome(
        zp <= SIGMAS && zm <= SIGMAS && elapsed < Duration::from_secs(30),
        format!(
            "S=+ {:.5}±{:.5} (z {zp:.2}), S=- {:.5}±{:.5} (z {zm:.2}), {:.2}s",
            s.mse_plus.mean, s.mse_plus.std_error, s.mse_minus.mean, s.mse_minus.std_error, elapsed.as_secs_f64()
        ),
    )
}

/// E[Y²|U=1] within 4σ of P_T at every sweep point.
fn c3_power() -> Outcome {
    use rayon::prelude::*;
    let points = sweep_points();
    let zs: Vec<f64> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let s = estimate_conditional_stats(p, &ThresholdStrategy::optimal(*p), 500_000, &mut RngHandle::new(1003, i as u64)).unwrap();
            s.power.z_score(p.power())
        })
        .collect();
    let worst = zs.iter().cloned().fold(0.0, f64::max);
    let fails = zs.iter().filter(|&&z| z > SIGMAS).count();
    outcome(fails == 0, format!("{} points, worst z {worst:.2}, {fails} beyond 4σ", points.len()))
}

/// Closed form vs quadrature to 1e-10 on 20 β × sweep grid, under 5 s.
fn c4_closed_form_vs_quadrature() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for p in sweep_points() {
        let m = conditional_mse(p.lambda(), p.k());
        for i in 1..=20 {
            let beta = 0.25 * i as f64;
            let closed = cost_closed_form(&p, beta).unwrap().total;
            let quad = threshold_cost_by_quadrature(p.lambda(), p.comm_cost(), m, beta);
            worst = worst.max((closed - quad).abs());
            count += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-10 && elapsed < Duration::from_secs(5),
        format!("{count} evaluations, worst gap {worst:.2e} (<1e-10), {:.2}s (<5s)", elapsed.as_secs_f64()),
    )
}

/// Golden-section argmin within 1e-6 of √(c+m) on all 108 points; derivative signs (−, 0, +).
fn c5_unique_minimizer() -> Outcome {
    let rows = analytics::sweep(&SweepGrid::<f64>::default(), 1e-10).unwrap();
    let worst = rows
        .iter()
        .map(|r| (r.beta_star_numeric - r.beta_star_formula).abs())
        .fold(0.0, f64::max);
    let mut signs_ok = true;
    for p in sweep_points() {
        let star = optimal_threshold(&p);
        let below = cost_derivative(&p, star - 0.1).unwrap();
        let at = cost_derivative(&p, star).unwrap();
        let above = cost_derivative(&p, star + 0.1).unwrap();
        signs_ok &= below < 0.0 && at.abs() < 1e-12 && above > 0.0;
    }
    outcome(
        rows.len() == 108 && worst < 1e-6 && signs_ok,
        format!("{} rows, worst |numeric - formula| {worst:.2e} (<1e-6), derivative signs ok: {signs_ok}", rows.len()),
    )
}

/// Simulated cost within 4σ of J(β) for β ∈ {β*/2, β*, 2β*} at 10⁶ stages; β* smallest under CRN.
fn c6_end_to_end() -> Outcome {
    let p = reference();
    let star = optimal_threshold(&p);
    let betas = [star, 0.5 * star, 2.0 * star];
    let strategies: Vec<ThresholdStrategy<f64>> = betas.iter().map(|&b| ThresholdStrategy::with_threshold(p, b).unwrap()).collect();
    let refs: Vec<&dyn Strategy<f64>> = strategies.iter().map(|s| s as &dyn Strategy<f64>).collect();
    let cmp = compare_strategies(&p, &refs, 10_000, 100, &RngHandle::new(1006, 0), Execution::Parallel).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (beta, est) in betas.iter().zip(&cmp.estimates) {
        let exact = cost_closed_form(&p, *beta).unwrap().total;
        let z = est.z_score(exact);
        pass &= z <= SIGMAS;
        parts.push(format!("β={beta:.3}: {:.4} vs {exact:.4} (z {z:.2})", est.mean));
    }
    let smallest = cmp.estimates[0].mean < cmp.estimates[1].mean && cmp.estimates[0].mean < cmp.estimates[2].mean;
    outcome(pass && smallest, format!("{}; β* smallest: {smallest}", parts.join(", ")))
}

/// Stage means indistinguishable at 4σ over T=10, 10⁵ episodes; the switching counterexample is caught.
fn c7_stationarity() -> Outcome {
    let p = reference();
    let opt = ThresholdStrategy::optimal(p);
    let rng = RngHandle::new(1007, 0);
    let ok = stationarity_check(&p, &opt, 10, 100_000, &rng, SIGMAS, Execution::Parallel).unwrap();
    let switching = SwitchingThreshold {
        early: opt,
        late: ThresholdStrategy::with_threshold(p, 2.0 * optimal_threshold(&p)).unwrap(),
        switch_after: 5,
    };
    let bad = stationarity_check(&p, &switching, 10, 100_000, &rng, SIGMAS, Execution::Parallel).unwrap();
    outcome(
        ok.stationary && !bad.stationary,
        format!(
            "optimal max pairwise z {:.2} (<4), counterexample max z {:.1} (>=4)",
            ok.max_pairwise_z, bad.max_pairwise_z
        ),
    )
}

/// |E[X̂ − X | U=1]| within 4σ of 0.
fn c8_unbiased() -> Outcome {
    let p = reference();
    let s = estimate_conditional_stats(&p, &ThresholdStrategy::optimal(p), 1_000_000, &mut RngHandle::new(1008, 0)).unwrap();
    let z = s.bias.z_score(0.0);
    outcome(z < SIGMAS, format!("bias {:.2e} ± {:.2e} (z {z:.2})", s.bias.mean, s.bias.std_error))
}

/// Never-transmit ≈ 2/λ²; J(0) = c + m exactly; noise-blind MSE exceeds m by > 4σ.
fn c9_baselines() -> Outcome {
    let p = reference();
    let never = estimate_cost(&p, &ThresholdStrategy::never_transmit(p), 10_000, 100, &RngHandle::new(1009, 0), Execution::Parallel).unwrap();
    let never_ok = never.within(2.0 / (p.lambda() * p.lambda()), SIGMAS);
    let j0 = cost_closed_form(&p, 0.0).unwrap().total;
    let j0_ok = j0 == p.comm_cost() + p.m();
    let blind = ThresholdStrategy::noise_blind(p, optimal_threshold(&p)).unwrap();
    let s = estimate_conditional_stats(&p, &blind, 1_000_000, &mut RngHandle::new(1009, 1)).unwrap();
    let excess = (s.mse.mean - p.m()) / s.mse.std_error;
    outcome(
        never_ok && j0_ok && excess > SIGMAS,
        format!(
            "never {:.4}±{:.4} vs 2; J(0) = {j0} (c+m = {}); noise-blind MSE {:.3} exceeds m by {excess:.0}σ",
            never.mean,
            never.std_error,
            p.comm_cost() + p.m(),
            s.mse.mean
        ),
    )
}

/// Identical config + seed gives byte-identical reports, parallel included.
fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let base = "schema_version = 1\nlambda = 1.0\nk = 2.0\nP_T = 1.0\nc = 1.0\nhorizon = 5000\nepisodes = 200\nseed = 77\n";
    let run = |name: &str, parallel: bool| -> Vec<u8> {
        let cfg = dir.path().join(format!("{name}.toml"));
        let out = dir.path().join(format!("{name}.json"));
        std::fs::write(&cfg, format!("{base}parallel = {parallel}\n")).unwrap();
        let status = Command::new(env!("CARGO_BIN_EXE_remest"))
            .args(["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.code().is_some());
        std::fs::read(&out).unwrap()
    };
    let a = run("a", true);
    let b = run("b", true);
    let serial = run("c", false);
    // parallel flag is not part of the report, so the serial run must match too
    let same = a == b && a == serial && !a.is_empty();
    outcome(same, format!("two parallel runs and one serial run, {} bytes each, identical: {same}", a.len()))
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 10] = [
        ("C1", "matching condition", c1_matching),
        ("C2", "optimal conditional MSE", c2_conditional_mse),
        ("C3", "power constraint with equality", c3_power),
        ("C4", "closed-form cost vs quadrature", c4_closed_form_vs_quadrature),
        ("C5", "unique minimizer", c5_unique_minimizer),
        ("C6", "end-to-end consistency", c6_end_to_end),
        ("C7", "stationarity", c7_stationarity),
        ("C8", "conditional unbiasedness", c8_unbiased),
        ("C9", "baseline identities", c9_baselines),
        ("C10", "determinism", c10_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| id.eq_ignore_ascii_case(f)) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        println!(
            "[{}] {id:<3} {name}: {} ({:.2}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
