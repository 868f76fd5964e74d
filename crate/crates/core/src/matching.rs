//! Characteristic-function matching `F_X(αω) = F_V(ω)^γ`.
//!
//! When the source and noise satisfy this identity the affine
//! encoder/decoder pair is optimal. The checks here evaluate both sides on
//! a grid of ω, either from analytic characteristic functions or from
//! samples, and report the residual `|lhs − rhs|` at every point.
//!
//! ## The power `F_V^γ`
//!
//! The noise characteristic function of a shifted gamma law winds around
//! the origin as ω grows: at `k = 2, θ = 1` its phase leaves `(−π, π]`
//! near `|ω| ≈ 2.8`. Raising through the principal logarithm then lands
//! on a different branch from the one that makes `F_V^{1/k}` the
//! characteristic function of the `1/k`-th convolution root, and the two
//! sides disagree by a factor `e^{±2πjγ}`. [`LogBranch::Continuous`] uses
//! the distinguished logarithm instead: the phase is continued from
//! `log F_V(0) = 0` along a path of small steps, each step taking the
//! principal log of the ratio of consecutive values.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{empirical_char_fn, Exponential, Family, Gamma};
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::scalar::Scalar;

pub type CharFn<F> = Arc<dyn Fn(F) -> Complex<F> + Send + Sync>;

/// Minimum sample count for [`check_matching_empirical`].
pub const MIN_EMPIRICAL_SAMPLES: usize = 10_000;

/// Empirical noise CF modulus below which a grid point is flagged unreliable.
pub const RELIABILITY_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBranch<F> {
    Principal,
    /// Phase continuation from ω = 0 with steps no longer than `max_step`.
    Continuous { max_step: F },
}

impl<F: Scalar> Default for LogBranch<F> {
    fn default() -> Self {
        LogBranch::Continuous { max_step: F::lit(0.05) }
    }
}

/// 101 evenly spaced points on `[−5, 5]`.
pub fn default_grid<F: Scalar>() -> Vec<F> {
    (0..=100).map(|i| F::lit(-5.0 + 0.1 * i as f64)).collect()
}

#[derive(Clone)]
pub struct MatchSpec<F> {
    source_cf: CharFn<F>,
    noise_cf: CharFn<F>,
    alpha: F,
    gamma: F,
    grid: Vec<F>,
    branch: LogBranch<F>,
}

fn check_grid<F: Scalar>(grid: &[F]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid("omega grid"));
    }
    if let Some(w) = grid.iter().find(|w| !w.is_finite()) {
        return Err(Error::invalid("omega", format!("grid point {w} is not finite")));
    }
    Ok(())
}

fn check_exponents<F: Scalar>(alpha: F, gamma: F) -> Result<()> {
    for (name, v) in [("alpha", alpha), ("gamma", gamma)] {
        if !(v.is_finite() && v > F::zero()) {
            return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
        }
    }
    Ok(())
}

fn check_branch<F: Scalar>(branch: LogBranch<F>) -> Result<()> {
    if let LogBranch::Continuous { max_step } = branch {
        if !(max_step.is_finite() && max_step > F::zero()) {
            return Err(Error::invalid("max_step", format!("must be finite and > 0, got {max_step}")));
        }
    }
    Ok(())
}

impl<F: Scalar> MatchSpec<F> {
    pub fn new(source_cf: CharFn<F>, noise_cf: CharFn<F>, alpha: F, gamma: F, grid: Vec<F>) -> Result<Self> {
        check_grid(&grid)?;
        check_exponents(alpha, gamma)?;
        Ok(Self {
            source_cf,
            noise_cf,
            alpha,
            gamma,
            grid,
            branch: LogBranch::default(),
        })
    }

    pub fn with_branch(mut self, branch: LogBranch<F>) -> Result<Self> {
        check_branch(branch)?;
        self.branch = branch;
        Ok(self)
    }

    /// Centred exponential source against centred `Γ(k, θ)` noise with
    /// `θ = √P_T`, `α = λθ`, `γ = 1/k`.
    pub fn exponential_gamma_pair(p: &SystemParams<F>, grid: Vec<F>) -> Result<Self> {
        Self::new(
            shifted_exponential_cf(p.lambda())?,
            centered_gamma_cf(p.k(), p.theta())?,
            p.alpha(),
            p.gamma(),
            grid,
        )
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn gamma(&self) -> F {
        self.gamma
    }

    pub fn grid(&self) -> &[F] {
        &self.grid
    }

    pub fn branch(&self) -> LogBranch<F> {
        self.branch
    }
}

/// Characteristic function of `X_e − 1/λ`, `X_e ~ Exp(λ)`.
pub fn shifted_exponential_cf<F: Scalar>(lambda: F) -> Result<CharFn<F>> {
    let d = Exponential::new(lambda)?;
    Ok(Arc::new(move |w: F| {
        d.char_fn(w) * Complex::new(F::zero(), -w / lambda).exp()
    }))
}

/// Characteristic function of `V_g − kθ`, `V_g ~ Γ(k, θ)`.
pub fn centered_gamma_cf<F: Scalar>(k: F, theta: F) -> Result<CharFn<F>> {
    let d = Gamma::new(k, theta)?;
    Ok(Arc::new(move |w: F| {
        d.char_fn(w) * Complex::new(F::zero(), -w * k * theta).exp()
    }))
}

/// `F_V(ω)^γ` for centred gamma noise in closed form: `(1 − jωθ)^{−kγ} e^{−jωkθγ}`.
///
/// `Re(1 − jωθ) = 1`, so the principal logarithm of the base is the
/// continuous one and no branch choice is involved.
pub fn centered_gamma_cf_power<F: Scalar>(k: F, theta: F, gamma: F, omega: F) -> Complex<F> {
    let base = Complex::new(F::one(), -omega * theta);
    let exponent = k * gamma;
    (base.ln() * -exponent).exp() * Complex::new(F::zero(), -omega * k * theta * gamma).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualRecord<F> {
    pub omega: F,
    pub lhs: Complex<F>,
    /// `None` when the noise CF vanishes on the path to this ω.
    pub rhs: Option<Complex<F>>,
    pub residual: Option<F>,
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CfResidualReport<F> {
    pub records: Vec<ResidualRecord<F>>,
    /// Largest residual over defined, reliable points.
    pub max_residual: Option<F>,
    pub undefined_points: usize,
    pub unreliable_points: usize,
}

pub const RESIDUAL_CSV_HEADER: [&str; 6] = ["omega", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "residual"];

impl<F: Scalar> CfResidualReport<F> {
    fn from_records(records: Vec<ResidualRecord<F>>) -> Self {
        let max_residual = records
            .iter()
            .filter(|r| r.reliable)
            .filter_map(|r| r.residual)
            .fold(None, |acc: Option<F>, r| Some(acc.map_or(r, |a| a.max(r))));
        let undefined_points = records.iter().filter(|r| r.residual.is_none()).count();
        let unreliable_points = records.iter().filter(|r| !r.reliable).count();
        Self {
            records,
            max_residual,
            undefined_points,
            unreliable_points,
        }
    }

    /// Largest residual over every defined point, reliable or not.
    pub fn max_residual_any(&self) -> Option<F> {
        self.records
            .iter()
            .filter_map(|r| r.residual)
            .fold(None, |acc: Option<F>, r| Some(acc.map_or(r, |a| a.max(r))))
    }

    pub fn csv_row(r: &ResidualRecord<F>) -> [String; 6] {
        let opt = |v: Option<F>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            r.omega.to_string(),
            r.lhs.re.to_string(),
            r.lhs.im.to_string(),
            opt(r.rhs.map(|z| z.re)),
            opt(r.rhs.map(|z| z.im)),
            opt(r.residual),
        ]
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(RESIDUAL_CSV_HEADER)?;
        for r in &self.records {
            w.write_record(Self::csv_row(r))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Node set for continuing the logarithm out to every grid point.
///
/// Built from the sorted grid, so it does not depend on grid order.
struct Path<F> {
    /// Nodes on the positive side, increasing from the first step past 0.
    pos: Vec<F>,
    /// Nodes on the negative side, decreasing from the first step past 0.
    neg: Vec<F>,
}

impl<F: Scalar> Path<F> {
    fn new(grid: &[F], max_step: F) -> Self {
        let mut targets: Vec<F> = grid.to_vec();
        targets.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
        targets.dedup();
        let walk = |ends: Vec<F>| {
            let mut nodes = Vec::new();
            let mut here = F::zero();
            for end in ends {
                let gap = (end - here).abs();
                // slack keeps a gap equal to max_step (up to rounding) at one step
                let steps = (gap / max_step - F::lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1);
                let n = F::from_usize(steps).expect("step count fits scalar");
                for i in 1..steps {
                    nodes.push(here + (end - here) * F::from_usize(i).unwrap() / n);
                }
                nodes.push(end);
                here = end;
            }
            nodes
        };
        let pos = walk(targets.iter().copied().filter(|w| *w > F::zero()).collect());
        let neg = walk(targets.iter().rev().copied().filter(|w| *w < F::zero()).collect());
        Self { pos, neg }
    }

    /// Continued log at every node, plus the minimum modulus seen so far along the path.
    fn continue_log(nodes: &[F], values: &[Complex<F>], origin: Complex<F>) -> Vec<(F, Option<Complex<F>>, F)> {
        let mut out = Vec::with_capacity(nodes.len());
        let mut prev = origin;
        let mut log = if origin.norm() > F::zero() { Some(origin.ln()) } else { None };
        let mut floor = origin.norm();
        for (&w, &v) in nodes.iter().zip(values) {
            floor = floor.min(v.norm());
            log = match log {
                Some(l) if v.norm() > F::zero() => Some(l + (v / prev).ln()),
                _ => None,
            };
            prev = v;
            out.push((w, log, floor));
        }
        out
    }
}

/// `log F(ω)` on the chosen branch for each grid point, with the smallest
/// `|F|` encountered on the way.
fn logs_on_grid<F: Scalar>(
    cf: &(dyn Fn(F) -> Complex<F> + Send + Sync),
    grid: &[F],
    branch: LogBranch<F>,
) -> Vec<(Option<Complex<F>>, F)> {
    match branch {
        LogBranch::Principal => grid
            .par_iter()
            .map(|&w| {
                let v = cf(w);
                let m = v.norm();
                (if m > F::zero() { Some(v.ln()) } else { None }, m)
            })
            .collect(),
        LogBranch::Continuous { max_step } => {
            let path = Path::new(grid, max_step);
            let origin = cf(F::zero());
            let eval = |nodes: &[F]| nodes.par_iter().map(|&w| cf(w)).collect::<Vec<_>>();
            let pos_vals = eval(&path.pos);
            let neg_vals = eval(&path.neg);
            let pos = Path::continue_log(&path.pos, &pos_vals, origin);
            let neg = Path::continue_log(&path.neg, &neg_vals, origin);
            let lookup = |w: F| -> (Option<Complex<F>>, F) {
                if w == F::zero() {
                    let m = origin.norm();
                    return (if m > F::zero() { Some(origin.ln()) } else { None }, m);
                }
                let side = if w > F::zero() { &pos } else { &neg };
                let (_, log, floor) = side
                    .iter()
                    .find(|(node, _, _)| *node == w)
                    .copied()
                    .expect("every grid point is a path node");
                (log, floor)
            };
            grid.iter().map(|&w| lookup(w)).collect()
        }
    }
}

fn assemble<F: Scalar>(
    grid: &[F],
    lhs: Vec<Complex<F>>,
    logs: Vec<(Option<Complex<F>>, F)>,
    gamma: F,
    floor: F,
) -> CfResidualReport<F> {
    let records = grid
        .iter()
        .zip(lhs)
        .zip(logs)
        .map(|((&omega, lhs), (log, min_modulus))| {
            let rhs = log.map(|l| (l * gamma).exp());
            ResidualRecord {
                omega,
                lhs,
                rhs,
                residual: rhs.map(|r| (lhs - r).norm()),
                reliable: rhs.is_some() && min_modulus >= floor,
            }
        })
        .collect();
    CfResidualReport::from_records(records)
}

/// Evaluate `F_X(αω)` and `F_V(ω)^γ` analytically on the configured grid.
pub fn check_matching<F: Scalar>(spec: &MatchSpec<F>) -> CfResidualReport<F> {
    let lhs: Vec<_> = spec.grid.par_iter().map(|&w| (spec.source_cf)(spec.alpha * w)).collect();
    let logs = logs_on_grid(spec.noise_cf.as_ref(), &spec.grid, spec.branch);
    assemble(&spec.grid, lhs, logs, spec.gamma, F::zero())
}

/// Sample-based version of [`check_matching`] using empirical characteristic functions.
///
/// Points where the empirical noise CF drops below [`RELIABILITY_FLOOR`]
/// (at the point, or anywhere on the continuation path to it) are flagged
/// unreliable and excluded from `max_residual`.
pub fn check_matching_empirical<F: Scalar>(
    source: &[F],
    noise: &[F],
    alpha: F,
    gamma: F,
    grid: &[F],
    branch: LogBranch<F>,
) -> Result<CfResidualReport<F>> {
    for s in [source, noise] {
        if s.len() < MIN_EMPIRICAL_SAMPLES {
            return Err(Error::InsufficientSamples {
                required: MIN_EMPIRICAL_SAMPLES,
                found: s.len(),
            });
        }
    }
    check_grid(grid)?;
    check_exponents(alpha, gamma)?;
    check_branch(branch)?;
    let lhs: Vec<_> = grid
        .par_iter()
        .map(|&w| empirical_char_fn(source, alpha * w).expect("nonempty"))
        .collect();
    let noise_cf = |w: F| empirical_char_fn(noise, w).expect("nonempty");
    let logs = logs_on_grid(&noise_cf, grid, branch);
    Ok(assemble(grid, lhs, logs, gamma, F::lit(RELIABILITY_FLOOR)))
}
