//! System parameters and the quantities derived from them.
//!
//! The noise scale is never an input: it is pinned to `θ = √P_T`, which
//! together with `Γ(k, θ)` noise and a Laplace(λ) source makes the affine
//! coder optimal. From that:
//!
//! * `α = λθ` (encoder gain),
//! * `γ = P_T / (kθ²) = 1/k` (signal-to-noise ratio),
//! * `m = 1 / ((γ + 1) λ²)` (conditional MSE given a transmission).

use serde::{Deserialize, Serialize};

use crate::distributions::{Exponential, Gamma, Laplace};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemParams<F> {
    /// Source rate λ.
    lambda: F,
    /// Noise shape k.
    k: F,
    /// Conditional power budget P_T.
    power: F,
    /// Per-transmission communication cost c.
    comm_cost: F,
}

fn check<F: Scalar>(name: &'static str, v: F) -> Result<F> {
    if v.is_finite() && v > F::zero() {
        Ok(v)
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

impl<F: Scalar> SystemParams<F> {
    pub fn new(lambda: F, k: F, power: F, comm_cost: F) -> Result<Self> {
        let p = Self {
            lambda: check("lambda", lambda)?,
            k: check("k", k)?,
            power: check("P_T", power)?,
            comm_cost: check("c", comm_cost)?,
        };
        for (name, v) in [("theta", p.theta()), ("alpha", p.alpha()), ("gamma", p.gamma()), ("m", p.m())] {
            if !(v.is_finite() && v > F::zero()) {
                return Err(Error::invalid(name, format!("derived value {v} out of range")));
            }
        }
        Ok(p)
    }

    /// λ = 1, k = 2, P_T = 1, c = 1.
    pub fn reference() -> Self {
        Self::new(F::one(), F::lit(2.0), F::one(), F::one()).expect("reference parameters are valid")
    }

    pub fn lambda(&self) -> F {
        self.lambda
    }

    pub fn k(&self) -> F {
        self.k
    }

    pub fn power(&self) -> F {
        self.power
    }

    pub fn comm_cost(&self) -> F {
        self.comm_cost
    }

    pub fn with_comm_cost(&self, comm_cost: F) -> Result<Self> {
        Self::new(self.lambda, self.k, self.power, comm_cost)
    }

    pub fn theta(&self) -> F {
        self.power.sqrt()
    }

    pub fn alpha(&self) -> F {
        self.lambda * self.theta()
    }

    pub fn gamma(&self) -> F {
        self.k.recip()
    }

    /// `γ / (γ + 1)`, the decoder's shrinkage factor.
    pub fn shrinkage(&self) -> F {
        let g = self.gamma();
        g / (g + F::one())
    }

    pub fn m(&self) -> F {
        ((self.gamma() + F::one()) * self.lambda * self.lambda).recip()
    }

    /// Noise variance `σ_V² = kθ²`.
    pub fn noise_variance(&self) -> F {
        self.k * self.power
    }

    pub fn source(&self) -> Laplace<F> {
        Laplace::new(self.lambda).expect("validated")
    }

    pub fn source_tail(&self) -> Exponential<F> {
        Exponential::new(self.lambda).expect("validated")
    }

    pub fn noise(&self) -> Gamma<F> {
        Gamma::new(self.k, self.theta()).expect("validated")
    }

    pub fn derived(&self) -> DerivedQuantities<F> {
        DerivedQuantities {
            theta: self.theta(),
            alpha: self.alpha(),
            gamma: self.gamma(),
            m: self.m(),
            beta_star: (self.comm_cost + self.m()).sqrt(),
        }
    }
}

/// Everything a reader needs to audit a run against the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities<F> {
    pub theta: F,
    pub alpha: F,
    pub gamma: F,
    pub m: F,
    pub beta_star: F,
}
