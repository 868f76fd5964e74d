//! Scheduler, encoder and decoder policies.
//!
//! The optimal triple for a symmetric threshold `β` is
//!
//! * schedule: transmit iff `|x| > β`;
//! * encode: `y = α|x̃| − αβ − α/λ`, with `sgn(x̃)` sent on a noiseless side channel;
//! * decode: `x̂ = s·((1/α)·γ/(γ+1)·ỹ + γ/(γ+1)/λ + β)`, and `0` when nothing arrives.
//!
//! Conditioned on `|X| > β`, `|X| − β` is exponential with rate λ, so the
//! encoder output is `α(E − 1/λ)`: zero mean, second moment exactly `P_T`.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::scalar::Scalar;

/// A channel symbol: a real payload or the free "no message" symbol ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Message<F> {
    Silent,
    Payload(F),
}

impl<F: Copy> Message<F> {
    pub fn is_silent(&self) -> bool {
        matches!(self, Message::Silent)
    }

    pub fn payload(&self) -> Option<F> {
        match *self {
            Message::Silent => None,
            Message::Payload(v) => Some(v),
        }
    }
}

impl<F: Serialize> Serialize for Message<F> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Message::Silent => s.serialize_none(),
            Message::Payload(v) => s.serialize_some(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    /// `sgn` with the convention `sgn(0) = +1`.
    pub fn of<F: Scalar>(x: F) -> Sign {
        if x < F::zero() {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn value<F: Scalar>(self) -> F {
        match self {
            Sign::Plus => F::one(),
            Sign::Minus => -F::one(),
        }
    }
}

/// What the noiseless side channel carries: a sign, or ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideInfo {
    Silent,
    Sign(Sign),
}

impl Serialize for SideInfo {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SideInfo::Silent => s.serialize_none(),
            SideInfo::Sign(Sign::Plus) => s.serialize_some(&1i8),
            SideInfo::Sign(Sign::Minus) => s.serialize_some(&-1i8),
        }
    }
}

pub fn side_channel<F: Scalar>(x_tilde: Message<F>) -> SideInfo {
    match x_tilde {
        Message::Silent => SideInfo::Silent,
        Message::Payload(x) => SideInfo::Sign(Sign::of(x)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdPolicy<F> {
    beta: F,
}

impl<F: Scalar> ThresholdPolicy<F> {
    pub fn new(beta: F) -> Result<Self> {
        if beta.is_finite() && beta >= F::zero() {
            Ok(Self { beta })
        } else {
            Err(Error::invalid("beta", format!("must be finite and >= 0, got {beta}")))
        }
    }

    pub fn beta(&self) -> F {
        self.beta
    }

    /// `true` iff `|x| > β`; the boundary `|x| = β` stays silent.
    pub fn schedule(&self, x: F) -> bool {
        x.abs() > self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Scheduler<F> {
    Threshold(ThresholdPolicy<F>),
    /// Never transmits. Kept distinct from `β = ∞`.
    Never,
}

impl<F: Scalar> Scheduler<F> {
    pub fn schedule(&self, x: F) -> bool {
        match self {
            Scheduler::Threshold(p) => p.schedule(x),
            Scheduler::Never => false,
        }
    }
}

/// Piecewise-affine encoder/decoder pair tuned to threshold `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineCoder<F> {
    params: SystemParams<F>,
    beta: F,
}

impl<F: Scalar> AffineCoder<F> {
    pub fn new(params: SystemParams<F>, beta: F) -> Result<Self> {
        let beta = ThresholdPolicy::new(beta)?.beta();
        Ok(Self { params, beta })
    }

    pub fn params(&self) -> &SystemParams<F> {
        &self.params
    }

    pub fn beta(&self) -> F {
        self.beta
    }

    pub fn encode(&self, x_tilde: Message<F>) -> Result<Message<F>> {
        let Message::Payload(x) = x_tilde else {
            return Ok(Message::Silent);
        };
        if x.abs() <= self.beta {
            return Err(Error::ContractViolation(format!(
                "encoder received |x| = {} <= beta = {}",
                x.abs(),
                self.beta
            )));
        }
        let alpha = self.params.alpha();
        Ok(Message::Payload(
            alpha * x.abs() - alpha * self.beta - alpha / self.params.lambda(),
        ))
    }

    /// MMSE decoder: shrinks the received symbol by `γ/(γ+1)`.
    pub fn decode(&self, y_tilde: Message<F>, side: SideInfo) -> Result<F> {
        let (y, sign) = paired(y_tilde, side)?;
        let Some(y) = y else { return Ok(F::zero()) };
        let p = &self.params;
        let shrink = p.shrinkage();
        let magnitude = shrink * y / p.alpha() + shrink / p.lambda() + self.beta;
        Ok(sign.value::<F>() * magnitude)
    }

    /// Exact inverse of the encoder, ignoring the channel noise entirely.
    pub fn decode_noise_blind(&self, y_tilde: Message<F>, side: SideInfo) -> Result<F> {
        let (y, sign) = paired(y_tilde, side)?;
        let Some(y) = y else { return Ok(F::zero()) };
        let p = &self.params;
        Ok(sign.value::<F>() * (y / p.alpha() + self.beta + p.lambda().recip()))
    }
}

fn paired<F: Scalar>(y_tilde: Message<F>, side: SideInfo) -> Result<(Option<F>, Sign)> {
    match (y_tilde, side) {
        (Message::Silent, SideInfo::Silent) => Ok((None, Sign::Plus)),
        (Message::Payload(y), SideInfo::Sign(s)) => Ok((Some(y), s)),
        (Message::Silent, SideInfo::Sign(_)) => Err(Error::ProtocolViolation(
            "side channel carries a sign but the main channel is silent".into(),
        )),
        (Message::Payload(_), SideInfo::Silent) => Err(Error::ProtocolViolation(
            "main channel carries a payload but the side channel is silent".into(),
        )),
    }
}

/// A per-stage policy triple. `stage` is 1-based.
///
/// Stationary strategies ignore `stage`; the argument exists so that
/// nonstationary comparators can be run through the same simulator.
pub trait Strategy<F: Scalar>: Send + Sync {
    fn schedule(&self, stage: usize, x: F) -> bool;
    fn encode(&self, stage: usize, x_tilde: Message<F>) -> Result<Message<F>>;
    fn decode(&self, stage: usize, y_tilde: Message<F>, side: SideInfo) -> Result<F>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderRule {
    Shrinkage,
    NoiseBlind,
}

/// Threshold scheduler with the affine coder, plus the baselines built from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdStrategy<F> {
    scheduler: Scheduler<F>,
    coder: AffineCoder<F>,
    decoder: DecoderRule,
}

impl<F: Scalar> ThresholdStrategy<F> {
    pub fn with_threshold(params: SystemParams<F>, beta: F) -> Result<Self> {
        Ok(Self {
            scheduler: Scheduler::Threshold(ThresholdPolicy::new(beta)?),
            coder: AffineCoder::new(params, beta)?,
            decoder: DecoderRule::Shrinkage,
        })
    }

    /// Threshold at `β* = √(c + m)`.
    pub fn optimal(params: SystemParams<F>) -> Self {
        let beta = (params.comm_cost() + params.m()).sqrt();
        Self::with_threshold(params, beta).expect("β* is finite and positive")
    }

    pub fn always_transmit(params: SystemParams<F>) -> Self {
        Self::with_threshold(params, F::zero()).expect("β = 0 is valid")
    }

    pub fn never_transmit(params: SystemParams<F>) -> Self {
        Self {
            scheduler: Scheduler::Never,
            coder: AffineCoder::new(params, F::zero()).expect("β = 0 is valid"),
            decoder: DecoderRule::Shrinkage,
        }
    }

    pub fn noise_blind(params: SystemParams<F>, beta: F) -> Result<Self> {
        Ok(Self {
            decoder: DecoderRule::NoiseBlind,
            ..Self::with_threshold(params, beta)?
        })
    }

    pub fn scheduler(&self) -> &Scheduler<F> {
        &self.scheduler
    }

    pub fn coder(&self) -> &AffineCoder<F> {
        &self.coder
    }

    pub fn decoder(&self) -> DecoderRule {
        self.decoder
    }

    /// `None` for the never-transmit baseline.
    pub fn threshold(&self) -> Option<F> {
        match self.scheduler {
            Scheduler::Threshold(p) => Some(p.beta()),
            Scheduler::Never => None,
        }
    }
}

impl<F: Scalar> Strategy<F> for ThresholdStrategy<F> {
    fn schedule(&self, _stage: usize, x: F) -> bool {
        self.scheduler.schedule(x)
    }

    fn encode(&self, _stage: usize, x_tilde: Message<F>) -> Result<Message<F>> {
        self.coder.encode(x_tilde)
    }

    fn decode(&self, _stage: usize, y_tilde: Message<F>, side: SideInfo) -> Result<F> {
        match self.decoder {
            DecoderRule::Shrinkage => self.coder.decode(y_tilde, side),
            DecoderRule::NoiseBlind => self.coder.decode_noise_blind(y_tilde, side),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use super::Strategy;

    fn coder(k: f64, beta: f64) -> AffineCoder<f64> {
        AffineCoder::new(SystemParams::new(1.0, k, 1.0, 1.0).unwrap(), beta).unwrap()
    }

    #[test]
    fn schedule_is_strict() {
        let p = ThresholdPolicy::new(1.0).unwrap();
        assert!(p.schedule(1.5));
        assert!(!p.schedule(-0.5));
        assert!(!p.schedule(1.0));
        assert!(!p.schedule(-1.0));
        assert!(ThresholdPolicy::new(-0.1).is_err());
        assert!(ThresholdPolicy::new(f64::INFINITY).is_err());
    }

    #[test]
    fn encode_examples() {
        let c = coder(2.0, 1.0);
        assert_eq!(c.encode(Message::Payload(2.5)).unwrap(), Message::Payload(0.5));
        assert_eq!(c.encode(Message::Payload(-2.5)).unwrap(), Message::Payload(0.5));
        assert_eq!(c.encode(Message::Silent).unwrap(), Message::Silent);
        assert!(matches!(
            c.encode(Message::Payload(0.7)),
            Err(Error::ContractViolation(_))
        ));
        assert!(c.encode(Message::Payload(1.0)).is_err());
    }

    #[test]
    fn side_channel_signs() {
        assert_eq!(side_channel(Message::Payload(-3.0)), SideInfo::Sign(Sign::Minus));
        assert_eq!(side_channel::<f64>(Message::Silent), SideInfo::Silent);
        assert_eq!(side_channel(Message::Payload(0.0)), SideInfo::Sign(Sign::Plus));
        assert_eq!(side_channel(Message::Payload(-0.0)), SideInfo::Sign(Sign::Plus));
    }

    #[test]
    fn decode_examples() {
        let c = coder(2.0, 1.0);
        let plus = c.decode(Message::Payload(0.9), SideInfo::Sign(Sign::Plus)).unwrap();
        let expected = 0.9 / 3.0 + 1.0 / 3.0 + 1.0;
        assert!((plus - expected).abs() < 1e-15);
        assert!((plus - 1.633_333_333_333_333_3).abs() < 1e-15);
        let minus = c.decode(Message::Payload(0.9), SideInfo::Sign(Sign::Minus)).unwrap();
        assert_eq!(minus, -plus);
        assert_eq!(c.decode(Message::Silent, SideInfo::Silent).unwrap(), 0.0);
    }

    #[test]
    fn decode_rejects_mixed_symbols() {
        let c = coder(2.0, 1.0);
        assert!(matches!(
            c.decode(Message::Silent, SideInfo::Sign(Sign::Plus)),
            Err(Error::ProtocolViolation(_))
        ));
        assert!(matches!(
            c.decode_noise_blind(Message::Payload(1.0), SideInfo::Silent),
            Err(Error::ProtocolViolation(_))
        ));
    }

    #[test]
    fn noise_blind_inverts_encoder() {
        let c = coder(2.0, 0.8);
        for x in [-4.0, -0.81, 0.9, 3.3] {
            let y = c.encode(Message::Payload(x)).unwrap();
            let back = c.decode_noise_blind(y, side_channel(Message::Payload(x))).unwrap();
            assert!((back - x).abs() < 1e-14);
        }
    }

    #[test]
    fn baselines() {
        let p = SystemParams::<f64>::reference();
        let never = ThresholdStrategy::never_transmit(p);
        assert!(!never.schedule(1, 1e300));
        assert_eq!(never.threshold(), None);
        let always = ThresholdStrategy::always_transmit(p);
        assert!(always.schedule(1, 1e-300));
        assert!(!always.schedule(1, 0.0));
        let opt = ThresholdStrategy::optimal(p);
        assert!((opt.threshold().unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn silent_is_not_zero() {
        assert_ne!(Message::Payload(0.0), Message::Silent);
        assert_eq!(serde_json::to_string(&Message::<f64>::Silent).unwrap(), "null");
        assert_eq!(serde_json::to_string(&Message::Payload(0.0)).unwrap(), "0.0");
        assert_eq!(serde_json::to_string(&SideInfo::Sign(Sign::Minus)).unwrap(), "-1");
    }

    proptest! {
        #[test]
        fn decoder_is_odd(y in -50.0f64..50.0, k in 0.1f64..10.0, beta in 0.0f64..5.0) {
            let c = coder(k, beta);
            let plus = c.decode(Message::Payload(y), SideInfo::Sign(Sign::Plus)).unwrap();
            let minus = c.decode(Message::Payload(y), SideInfo::Sign(Sign::Minus)).unwrap();
            prop_assert_eq!(minus, -plus);
        }

        #[test]
        fn encoder_depends_on_magnitude_only(x in 0.0f64..30.0, beta in 0.0f64..5.0) {
            prop_assume!(x > beta);
            let c = coder(2.0, beta);
            prop_assert_eq!(c.encode(Message::Payload(x)).unwrap(), c.encode(Message::Payload(-x)).unwrap());
        }
    }
}
