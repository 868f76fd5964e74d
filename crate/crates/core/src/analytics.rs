//! Closed-form expected stage cost of a threshold policy and its minimiser.
//!
//! With the affine coder, a stage costs `x²` when silent and `c + m` in
//! expectation when transmitting, so
//!
//! ```text
//! J(β) = 2∫₀^β x² p(x) dx + 2(c + m)∫_β^∞ p(x) dx,    p(x) = (λ/2)e^{−λ|x|}.
//! ```
//!
//! Both integrals are elementary. Integrating `x²e^{−λx}` by parts twice,
//!
//! ```text
//! 2∫₀^β x²(λ/2)e^{−λx} dx = 2/λ² − e^{−λβ}(β² + 2β/λ + 2/λ²)
//!                         = (2/λ²)·[1 − e^{−u}(1 + u + u²/2)],   u = λβ,
//! 2∫_β^∞ (λ/2)e^{−λx} dx  = e^{−λβ}.
//! ```
//!
//! The bracket `1 − e^{−u}(1 + u + u²/2)` equals `e^{−u}Σ_{n≥3} uⁿ/n!`;
//! the series form is used for small `u` where the direct form cancels.
//!
//! `J'(β) = λe^{−λβ}(β² − (c + m))`, negative below `β* = √(c + m)` and
//! positive above it, so `β*` is the unique minimiser on `(0, ∞)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown<F> {
    pub total: F,
    /// `c·P(|X| > β)`.
    pub comm: F,
    /// `E[X²; |X| ≤ β]`.
    pub est_no_tx: F,
    /// `E[(X − X̂)²; |X| > β]`.
    pub est_tx: F,
    pub tx_prob: F,
}

fn check_beta<F: Scalar>(beta: F) -> Result<F> {
    if beta.is_finite() && beta >= F::zero() {
        Ok(beta)
    } else {
        Err(Error::invalid("beta", format!("must be finite and >= 0, got {beta}")))
    }
}

/// `E[X²; |X| ≤ β]` for the Laplace source.
pub fn truncated_second_moment<F: Scalar>(lambda: F, beta: F) -> F {
    let u = lambda * beta;
    let bracket = if u < F::one() {
        // e^{-u} Σ_{n≥3} uⁿ/n!
        let mut term = u * u * u / F::lit(6.0);
        let mut sum = F::zero();
        let mut n = 3.0;
        while term > F::epsilon() * sum || sum == F::zero() {
            sum = sum + term;
            n += 1.0;
            term = term * u / F::lit(n);
            if term == F::zero() {
                break;
            }
        }
        (-u).exp() * sum
    } else {
        F::one() - (-u).exp() * (F::one() + u + F::lit(0.5) * u * u)
    };
    F::lit(2.0) / (lambda * lambda) * bracket
}

/// Expected stage cost when the decoder achieves `cond_mse` given a transmission.
pub fn cost_with_conditional_mse<F: Scalar>(p: &SystemParams<F>, beta: F, cond_mse: F) -> Result<CostBreakdown<F>> {
    let beta = check_beta(beta)?;
    let tx_prob = (-p.lambda() * beta).exp();
    let comm = p.comm_cost() * tx_prob;
    let est_no_tx = truncated_second_moment(p.lambda(), beta);
    let est_tx = cond_mse * tx_prob;
    Ok(CostBreakdown {
        total: comm + est_no_tx + est_tx,
        comm,
        est_no_tx,
        est_tx,
        tx_prob,
    })
}

/// `J(β)` for the threshold scheduler with the optimal affine coder.
pub fn cost_closed_form<F: Scalar>(p: &SystemParams<F>, beta: F) -> Result<CostBreakdown<F>> {
    cost_with_conditional_mse(p, beta, p.m())
}

/// `E[X²] = 2/λ²`, the stage cost of never transmitting.
pub fn never_transmit_cost<F: Scalar>(p: &SystemParams<F>) -> F {
    F::lit(2.0) / (p.lambda() * p.lambda())
}

/// Conditional MSE of the noise-blind decoder.
///
/// It recovers `x + V/α` exactly, so the error is `V/α` and the MSE is
/// `E[V²]/α² = (kθ² + k²θ²)/(λ²θ²) = k(k + 1)/λ²`.
pub fn noise_blind_conditional_mse<F: Scalar>(p: &SystemParams<F>) -> F {
    p.k() * (p.k() + F::one()) / (p.lambda() * p.lambda())
}

/// `dJ/dβ = λe^{−λβ}(β² − (c + m))`.
pub fn cost_derivative<F: Scalar>(p: &SystemParams<F>, beta: F) -> Result<F> {
    if !(beta.is_finite() && beta > F::zero()) {
        return Err(Error::invalid("beta", format!("must be finite and > 0, got {beta}")));
    }
    let lambda = p.lambda();
    Ok(lambda * (-lambda * beta).exp() * (beta * beta - (p.comm_cost() + p.m())))
}

/// `β* = √(c + m)`.
pub fn optimal_threshold<F: Scalar>(p: &SystemParams<F>) -> F {
    (p.comm_cost() + p.m()).sqrt()
}

/// Golden-section minimiser of `f` on `[lo, hi]`, stopping once the bracket is narrower than `tol`.
pub fn golden_section<F: Scalar>(mut f: impl FnMut(F) -> F, lo: F, hi: F, tol: F) -> Result<F> {
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return Err(Error::InvalidInterval {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        });
    }
    if !(tol.is_finite() && tol > F::zero()) {
        return Err(Error::invalid("tol", format!("must be finite and > 0, got {tol}")));
    }
    let inv_phi = (F::lit(5.0).sqrt() - F::one()) / F::lit(2.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    // the bracket shrinks by 1/φ each round; 400 rounds exhausts any f64 interval
    for _ in 0..400 {
        if b - a <= tol {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    Ok((a + b) / F::lit(2.0))
}

/// Numerical minimiser of [`cost_closed_form`] on `[lo, hi]`.
///
/// Uses only cost evaluations, never the derivative, so it is an
/// independent check of [`optimal_threshold`].
pub fn numeric_argmin<F: Scalar>(p: &SystemParams<F>, lo: F, hi: F, tol: F) -> Result<F> {
    if lo < F::zero() {
        return Err(Error::InvalidInterval {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        });
    }
    golden_section(
        |beta| cost_closed_form(p, beta).map(|c| c.total).unwrap_or(F::infinity()),
        lo,
        hi,
        tol,
    )
}

/// Upper end of a search bracket, found by doubling until the cost rises.
pub fn search_upper_bound<F: Scalar>(p: &SystemParams<F>) -> F {
    let cost = |b: F| cost_closed_form(p, b).map(|c| c.total).unwrap_or(F::infinity());
    let mut h = p.lambda().recip();
    let limit = F::lit(1e6);
    while cost(h + h) <= cost(h) && h < limit {
        h = h + h;
    }
    h + h
}

/// Cartesian parameter grid. Rows are emitted with λ varying slowest, then k, P_T, c.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid<F> {
    pub lambdas: Vec<F>,
    pub ks: Vec<F>,
    pub powers: Vec<F>,
    pub comm_costs: Vec<F>,
}

impl<F: Scalar> Default for SweepGrid<F> {
    /// 3 × 4 × 3 × 3 grid covering γ < 1, γ = 1 and γ > 1.
    fn default() -> Self {
        let v = |xs: &[f64]| xs.iter().map(|&x| F::lit(x)).collect();
        Self {
            lambdas: v(&[0.5, 1.0, 2.0]),
            ks: v(&[0.5, 1.0, 2.0, 5.0]),
            powers: v(&[0.25, 1.0, 4.0]),
            comm_costs: v(&[0.1, 1.0, 10.0]),
        }
    }
}

impl<F: Scalar> SweepGrid<F> {
    pub fn len(&self) -> usize {
        self.lambdas.len() * self.ks.len() * self.powers.len() * self.comm_costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Result<Vec<SystemParams<F>>> {
        if self.is_empty() {
            return Err(Error::EmptyGrid("sweep grid"));
        }
        let mut out = Vec::with_capacity(self.len());
        for &lambda in &self.lambdas {
            for &k in &self.ks {
                for &power in &self.powers {
                    for &c in &self.comm_costs {
                        out.push(SystemParams::new(lambda, k, power, c)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow<F> {
    pub lambda: F,
    pub k: F,
    #[serde(rename = "P_T")]
    pub power: F,
    pub c: F,
    pub beta_star_formula: F,
    pub beta_star_numeric: F,
    #[serde(rename = "J_at_beta_star")]
    pub cost_at_beta_star: F,
}

pub const SWEEP_CSV_HEADER: [&str; 7] = [
    "lambda",
    "k",
    "P_T",
    "c",
    "beta_star_formula",
    "beta_star_numeric",
    "J_at_beta_star",
];

pub fn sweep_point<F: Scalar>(p: &SystemParams<F>, tol: F) -> Result<SweepRow<F>> {
    let formula = optimal_threshold(p);
    let numeric = numeric_argmin(p, F::zero(), search_upper_bound(p), tol)?;
    Ok(SweepRow {
        lambda: p.lambda(),
        k: p.k(),
        power: p.power(),
        c: p.comm_cost(),
        beta_star_formula: formula,
        beta_star_numeric: numeric,
        cost_at_beta_star: cost_closed_form(p, formula)?.total,
    })
}

pub fn sweep<F: Scalar>(grid: &SweepGrid<F>, tol: F) -> Result<Vec<SweepRow<F>>> {
    use rayon::prelude::*;
    grid.points()?.par_iter().map(|p| sweep_point(p, tol)).collect()
}

pub fn write_sweep_csv<F: Scalar, W: std::io::Write>(rows: &[SweepRow<F>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(SWEEP_CSV_HEADER)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> SystemParams<f64> {
        SystemParams::reference()
    }

    #[test]
    fn boundary_identities() {
        let p = reference();
        let at_zero = cost_closed_form(&p, 0.0).unwrap();
        assert_eq!(at_zero.total, p.comm_cost() + p.m());
        assert_eq!(at_zero.tx_prob, 1.0);
        assert_eq!(at_zero.est_no_tx, 0.0);
        let far = cost_closed_form(&p, 50.0).unwrap();
        assert!((far.total - 2.0).abs() < 1e-15, "{}", far.total);
    }

    #[test]
    fn value_at_optimum() {
        // 30-digit quadrature of the two integrals: 0.7399659905604149169...
        let p = reference();
        let j = cost_closed_form(&p, optimal_threshold(&p)).unwrap();
        assert!((j.total - 0.739_965_990_560_414_9).abs() < 1e-14, "{}", j.total);
        assert!((j.tx_prob - 0.274_997_176_473_929_2).abs() < 1e-15);
    }

    #[test]
    fn breakdown_sums() {
        let p = SystemParams::new(2.0, 0.5, 4.0, 0.1).unwrap();
        for beta in [0.0, 0.01, 0.3, 1.0, 7.5] {
            let b = cost_closed_form(&p, beta).unwrap();
            assert_eq!(b.total, b.comm + b.est_no_tx + b.est_tx);
            assert_eq!(b.comm, p.comm_cost() * b.tx_prob);
        }
        assert!(cost_closed_form(&p, -1.0).is_err());
        assert!(cost_closed_form(&p, f64::NAN).is_err());
    }

    #[test]
    fn series_and_direct_forms_meet() {
        for lambda in [0.5f64, 1.0, 3.0] {
            let u = 1.0;
            let beta = u / lambda;
            let below = truncated_second_moment(lambda, beta * (1.0 - 1e-12));
            let above = truncated_second_moment(lambda, beta);
            assert!((below - above).abs() < 1e-11 / (lambda * lambda), "{below} {above}");
        }
    }

    #[test]
    fn derivative_examples() {
        let p = reference();
        let star = optimal_threshold(&p);
        assert!(cost_derivative(&p, star).unwrap().abs() < 1e-15);
        assert!(cost_derivative(&p, 0.5 * star).unwrap() < 0.0);
        assert!(cost_derivative(&p, 1.5 * star).unwrap() > 0.0);
        let d2 = cost_derivative(&p, 2.0).unwrap();
        assert!((d2 - 0.315_782_327_552_096_3).abs() < 1e-15, "{d2}");
        assert!(cost_derivative(&p, 0.0).is_err());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let p = reference();
        let h = 1e-6;
        let fd = (cost_closed_form(&p, 2.0 + h).unwrap().total - cost_closed_form(&p, 2.0 - h).unwrap().total) / (2.0 * h);
        assert!((fd - cost_derivative(&p, 2.0).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn optimal_threshold_examples() {
        assert!((optimal_threshold(&reference()) - 1.290_994_448_735_805_6).abs() < 1e-15);
        let p = SystemParams::<f64>::new(2.0, 1.0, 4.0, 0.5).unwrap();
        assert!((p.m() - 0.125).abs() < 1e-16);
        assert!((optimal_threshold(&p) - 0.790_569_415_042_094_8).abs() < 1e-15);
        let tiny = SystemParams::new(1.0, 1e-12, 1.0, 1e-12).unwrap();
        assert!(optimal_threshold(&tiny) < 1e-5);
    }

    #[test]
    fn numeric_argmin_examples() {
        let p = reference();
        let b = numeric_argmin(&p, 0.0, 10.0, 1e-8).unwrap();
        assert!((b - (5.0f64 / 3.0).sqrt()).abs() < 1e-6, "{b}");
        assert!(numeric_argmin(&p, 1.0, 1.0, 1e-8).is_err());
        assert!(numeric_argmin(&p, 2.0, 1.0, 1e-8).is_err());
        assert!(numeric_argmin(&p, 0.0, f64::INFINITY, 1e-8).is_err());
        assert!(numeric_argmin(&p, 0.0, 1.0, 0.0).is_err());
        let big = p.with_comm_cost(10.0).unwrap();
        assert!(numeric_argmin(&big, 0.0, 10.0, 1e-8).unwrap() > b);
    }

    #[test]
    fn golden_section_on_parabola() {
        let x = golden_section(|x: f64| (x - 0.3).powi(2), -2.0, 5.0, 1e-10).unwrap();
        assert!((x - 0.3).abs() < 1e-9);
    }

    #[test]
    fn default_grid_has_108_points() {
        let g = SweepGrid::<f64>::default();
        assert_eq!(g.len(), 108);
        assert_eq!(g.points().unwrap().len(), 108);
        let empty = SweepGrid::<f64> { ks: vec![], ..g };
        assert!(matches!(empty.points(), Err(Error::EmptyGrid(_))));
    }

    #[test]
    fn sweep_csv_header() {
        let rows = sweep(&SweepGrid::<f64>::default(), 1e-9).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), SWEEP_CSV_HEADER.join(","));
        assert_eq!(text.lines().count(), 109);
    }

    #[test]
    fn f32_closed_form() {
        let p = SystemParams::<f32>::reference();
        let j = cost_closed_form(&p, optimal_threshold(&p)).unwrap();
        assert!((j.total - 0.739_966).abs() < 1e-5);
    }
}
