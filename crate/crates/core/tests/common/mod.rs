//! Reference computations used as independent oracles by the integration
//! and acceptance tests. Nothing here calls into the closed forms under test.

#![allow(dead_code)]

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 50)
}

/// Expected stage cost of a threshold policy, straight from its defining integrals:
/// `2∫₀^β x²p(x)dx + 2(c + m)∫_β^∞ p(x)dx` with `p(x) = (λ/2)e^{−λ|x|}`.
pub fn threshold_cost_by_quadrature(lambda: f64, c: f64, m: f64, beta: f64) -> f64 {
    let p = move |x: f64| 0.5 * lambda * (-lambda * x.abs()).exp();
    let body = adaptive_simpson(&|x| x * x * p(x), 0.0, beta, 1e-15);
    // the tail past β + 80/λ is below e^{-80}
    let tail = adaptive_simpson(&p, beta, beta + 80.0 / lambda, 1e-16);
    2.0 * body + 2.0 * (c + m) * tail
}

/// `m = 1/((1/k + 1)λ²)`, recomputed from the inputs.
pub fn conditional_mse(lambda: f64, k: f64) -> f64 {
    1.0 / ((1.0 / k + 1.0) * lambda * lambda)
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub struct Moments {
    pub n: f64,
    pub mean: f64,
    pub var: f64,
    /// Fourth central moment.
    pub m4: f64,
}

impl Moments {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        Self { n, mean, var, m4 }
    }

    pub fn mean_se(&self) -> f64 {
        (self.var / self.n).sqrt()
    }

    pub fn var_se(&self) -> f64 {
        ((self.m4 - self.var * self.var) / self.n).sqrt()
    }
}

use remest::strategies::{Message, SideInfo, Strategy, ThresholdStrategy};

/// Nonstationary comparator: one threshold policy up to stage `switch_after`, another afterwards.
pub struct SwitchingThreshold {
    pub early: ThresholdStrategy<f64>,
    pub late: ThresholdStrategy<f64>,
    pub switch_after: usize,
}

impl SwitchingThreshold {
    fn pick(&self, stage: usize) -> &ThresholdStrategy<f64> {
        if stage > self.switch_after {
            &self.late
        } else {
            &self.early
        }
    }
}

impl Strategy<f64> for SwitchingThreshold {
    fn schedule(&self, stage: usize, x: f64) -> bool {
        self.pick(stage).schedule(stage, x)
    }
    fn encode(&self, stage: usize, x: Message<f64>) -> remest::Result<Message<f64>> {
        self.pick(stage).encode(stage, x)
    }
    fn decode(&self, stage: usize, y: Message<f64>, s: SideInfo) -> remest::Result<f64> {
        self.pick(stage).decode(stage, y, s)
    }
}
