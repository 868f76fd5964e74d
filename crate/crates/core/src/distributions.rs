//! The three distribution families of the model: the Laplace source, its
//! one-sided exponential tail, and the gamma channel noise.
//!
//! Distribution values are immutable and validated at construction, so
//! sampling and evaluation never fail afterwards.

use num_complex::Complex;
use rand_core::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Density, moments, characteristic function and sampler of one family.
pub trait Family<F: Scalar> {
    fn mean(&self) -> F;
    fn variance(&self) -> F;
    fn pdf(&self, x: F) -> F;
    /// Analytic characteristic function `E[exp(j ω X)]`.
    fn char_fn(&self, omega: F) -> Complex<F>;
    fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> F;
}

fn positive<F: Scalar>(name: &'static str, v: F) -> Result<F> {
    if v.is_finite() && v > F::zero() {
        Ok(v)
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

/// Zero-location Laplace law with density `(λ/2)·exp(−λ|x|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Laplace<F> {
    rate: F,
}

impl<F: Scalar> Laplace<F> {
    pub fn new(rate: F) -> Result<Self> {
        Ok(Self {
            rate: positive("lambda", rate)?,
        })
    }

    pub fn rate(&self) -> F {
        self.rate
    }

    /// Scale parameter `1/λ`.
    pub fn scale(&self) -> F {
        self.rate.recip()
    }

    pub fn cdf(&self, x: F) -> F {
        let half = F::lit(0.5);
        if x < F::zero() {
            half * (self.rate * x).exp()
        } else {
            F::one() - half * (-self.rate * x).exp()
        }
    }
}

impl<F: Scalar> Family<F> for Laplace<F> {
    fn mean(&self) -> F {
        F::zero()
    }

    fn variance(&self) -> F {
        F::lit(2.0) / (self.rate * self.rate)
    }

    fn pdf(&self, x: F) -> F {
        // (λ/2) e^{-λx} for x >= 0, mirrored for x < 0
        F::lit(0.5) * self.rate * (-self.rate * x.abs()).exp()
    }

    fn char_fn(&self, omega: F) -> Complex<F> {
        let r = omega / self.rate;
        Complex::new((F::one() + r * r).recip(), F::zero())
    }

    /// Inverse CDF of one open-interval uniform draw.
    fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> F {
        let u = F::unit_open(rng) - F::lit(0.5);
        let tail = F::one() - F::lit(2.0) * u.abs();
        let magnitude = -tail.ln() / self.rate;
        if u < F::zero() {
            -magnitude
        } else {
            magnitude
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponential<F> {
    rate: F,
}

impl<F: Scalar> Exponential<F> {
    pub fn new(rate: F) -> Result<Self> {
        Ok(Self {
            rate: positive("lambda", rate)?,
        })
    }

    pub fn rate(&self) -> F {
        self.rate
    }

    pub fn cdf(&self, x: F) -> F {
        if x <= F::zero() {
            F::zero()
        } else {
            -(-self.rate * x).exp_m1()
        }
    }
}

impl<F: Scalar> Family<F> for Exponential<F> {
    fn mean(&self) -> F {
        self.rate.recip()
    }

    fn variance(&self) -> F {
        (self.rate * self.rate).recip()
    }

    fn pdf(&self, x: F) -> F {
        if x < F::zero() {
            F::zero()
        } else {
            self.rate * (-self.rate * x).exp()
        }
    }

    fn char_fn(&self, omega: F) -> Complex<F> {
        Complex::new(F::one(), -omega / self.rate).inv()
    }

    fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> F {
        -F::unit_open(rng).ln() / self.rate
    }
}

/// Gamma law `Γ(k, θ)` with shape `k` and scale `θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gamma<F> {
    shape: F,
    scale: F,
    #[serde(skip)]
    sampler: MarsagliaTsang<F>,
}

impl<F: Scalar> Gamma<F> {
    pub fn new(shape: F, scale: F) -> Result<Self> {
        let shape = positive("k", shape)?;
        let scale = positive("theta", scale)?;
        Ok(Self {
            shape,
            scale,
            sampler: MarsagliaTsang::new(shape),
        })
    }

    pub fn shape(&self) -> F {
        self.shape
    }

    pub fn scale(&self) -> F {
        self.scale
    }
}

impl<F: Scalar> Family<F> for Gamma<F> {
    fn mean(&self) -> F {
        self.shape * self.scale
    }

    fn variance(&self) -> F {
        self.shape * self.scale * self.scale
    }

    fn pdf(&self, x: F) -> F {
        let k = self.shape;
        if x < F::zero() {
            return F::zero();
        }
        if x == F::zero() {
            return match k.partial_cmp(&F::one()) {
                Some(std::cmp::Ordering::Less) => F::infinity(),
                Some(std::cmp::Ordering::Equal) => self.scale.recip(),
                _ => F::zero(),
            };
        }
        let z = x / self.scale;
        let log_density = (k - F::one()) * z.ln() - z - F::lit(ln_gamma(k.as_f64())) - self.scale.ln();
        log_density.exp()
    }

    /// `(1 − jωθ)^{−k}`. The base has real part 1, so the principal
    /// logarithm never crosses its branch cut.
    fn char_fn(&self, omega: F) -> Complex<F> {
        let base = Complex::new(F::one(), -omega * self.scale);
        (base.ln() * -self.shape).exp()
    }

    fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> F {
        self.scale * self.sampler.sample_unit(rng)
    }
}

/// Marsaglia–Tsang squeeze/rejection sampler for `Γ(k, 1)`.
///
/// Valid for every `k > 0`: for `k < 1` it draws from `Γ(k + 1, 1)` and
/// multiplies by `U^{1/k}`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct MarsagliaTsang<F> {
    shape: F,
    d: F,
    c: F,
}

impl<F: Scalar> MarsagliaTsang<F> {
    fn new(shape: F) -> Self {
        let boosted = if shape < F::one() { shape + F::one() } else { shape };
        let d = boosted - F::lit(1.0 / 3.0);
        Self {
            shape,
            d,
            c: (F::lit(9.0) * d).sqrt().recip(),
        }
    }

    fn sample_unit<R: RngCore + ?Sized>(&self, rng: &mut R) -> F {
        let one = F::one();
        let draw = loop {
            let (x, v) = loop {
                let x = standard_normal::<F, R>(rng);
                let v = one + self.c * x;
                if v > F::zero() {
                    break (x, v * v * v);
                }
            };
            let u = F::unit_open(rng);
            let x2 = x * x;
            if u < one - F::lit(0.0331) * x2 * x2 {
                break self.d * v;
            }
            if u.ln() < F::lit(0.5) * x2 + self.d * (one - v + v.ln()) {
                break self.d * v;
            }
        };
        if self.shape < one {
            draw * F::unit_open(rng).powf(self.shape.recip())
        } else {
            draw
        }
    }
}

/// Marsaglia polar method; one of the pair is discarded so the draw is stateless.
fn standard_normal<F: Scalar, R: RngCore + ?Sized>(rng: &mut R) -> F {
    let two = F::lit(2.0);
    loop {
        let a = two * F::unit_open(rng) - F::one();
        let b = two * F::unit_open(rng) - F::one();
        let s = a * a + b * b;
        if s > F::zero() && s < F::one() {
            return a * (-two * s.ln() / s).sqrt();
        }
    }
}

/// `ln Γ(x)` for `x > 0`, Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `(1/N)·Σ exp(j ω x_i)`.
pub fn empirical_char_fn<F: Scalar>(samples: &[F], omega: F) -> Result<Complex<F>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let (re, im) = samples.iter().fold((F::zero(), F::zero()), |(re, im), &x| {
        let (s, c) = (omega * x).sin_cos();
        (re + c, im + s)
    });
    let n = F::from_usize(samples.len()).expect("sample count fits scalar");
    Ok(Complex::new(re / n, im / n))
}
