//! Monte Carlo simulation of the sensor → encoder → channel → decoder loop.
//!
//! Each stage draws the source sample and then the channel noise from the
//! same stream, in that order, whether or not a transmission happens. Two
//! strategies run from the same [`RngHandle`] therefore see identical
//! source and noise sequences (common random numbers).
//!
//! Multi-episode estimates fork one child stream per episode index and
//! reduce results in index order, so serial and parallel execution give
//! bit-identical numbers.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{Family, Gamma, Laplace};
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::rng::RngHandle;
use crate::scalar::Scalar;
use crate::strategies::{side_channel, Message, SideInfo, Sign, Strategy};

/// Fewest transmissions [`estimate_conditional_stats`] accepts.
pub const MIN_TRANSMISSIONS: usize = 100;

/// Episodes mapped per parallel batch before the ordered fold.
const BATCH: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageOutcome<F> {
    /// 1-based stage index.
    pub t: usize,
    pub x: F,
    pub u: u8,
    pub y: Message<F>,
    /// Noise draw, recorded even when unused.
    pub v: F,
    pub y_tilde: Message<F>,
    pub s: SideInfo,
    pub x_hat: F,
    pub stage_cost: F,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeTrace<F> {
    pub params: SystemParams<F>,
    pub horizon: usize,
    pub stages: Vec<StageOutcome<F>>,
    pub total_cost: F,
}

impl<F: Scalar> EpisodeTrace<F> {
    pub fn average_cost(&self) -> F {
        self.total_cost / F::from_usize(self.horizon).expect("horizon fits scalar")
    }

    /// One JSON object per stage, newline separated.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for stage in &self.stages {
            serde_json::to_writer(&mut out, stage)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate<F> {
    pub mean: F,
    pub std_error: F,
    pub n: usize,
}

impl<F: Scalar> MonteCarloEstimate<F> {
    /// `|mean − target| / std_error`. Infinite when the error is zero and the mean is off target.
    pub fn z_score(&self, target: F) -> F {
        let gap = (self.mean - target).abs();
        if gap == F::zero() {
            F::zero()
        } else {
            gap / self.std_error
        }
    }

    pub fn within(&self, target: F, sigmas: F) -> bool {
        self.z_score(target) <= sigmas
    }
}

/// Welford running mean/variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator<F> {
    n: usize,
    mean: F,
    m2: F,
}

impl<F: Scalar> Accumulator<F> {
    pub fn new() -> Self {
        Self {
            n: 0,
            mean: F::zero(),
            m2: F::zero(),
        }
    }

    pub fn push(&mut self, x: F) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean = self.mean + delta / F::from_usize(self.n).expect("count fits scalar");
        self.m2 = self.m2 + delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn estimate(&self) -> Result<MonteCarloEstimate<F>> {
        if self.n < 2 {
            return Err(Error::InsufficientSamples { required: 2, found: self.n });
        }
        let n = F::from_usize(self.n).expect("count fits scalar");
        let var = self.m2 / (n - F::one());
        Ok(MonteCarloEstimate {
            mean: self.mean,
            std_error: (var / n).sqrt(),
            n: self.n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

/// Maps `f` over `0..n` (in parallel batches when asked) and folds the results in index order.
fn fold_indexed<R, M, G>(n: usize, exec: Execution, map: M, mut fold: G) -> Result<()>
where
    R: Send,
    M: Fn(u64) -> Result<R> + Sync,
    G: FnMut(R),
{
    let mut start = 0;
    while start < n {
        let end = (start + BATCH).min(n);
        let batch: Vec<R> = match exec {
            Execution::Serial => (start..end).map(|i| map(i as u64)).collect::<Result<_>>()?,
            Execution::Parallel => (start..end).into_par_iter().map(|i| map(i as u64)).collect::<Result<_>>()?,
        };
        batch.into_iter().for_each(&mut fold);
        start = end;
    }
    Ok(())
}

struct Plant<'a, F> {
    comm_cost: F,
    source: Laplace<F>,
    noise: Gamma<F>,
    strategy: &'a dyn Strategy<F>,
}

impl<'a, F: Scalar> Plant<'a, F> {
    fn new(p: &SystemParams<F>, strategy: &'a dyn Strategy<F>) -> Self {
        Self {
            comm_cost: p.comm_cost(),
            source: p.source(),
            noise: p.noise(),
            strategy,
        }
    }

    fn stage(&self, t: usize, rng: &mut RngHandle) -> Result<StageOutcome<F>> {
        let x = self.source.sample(rng);
        let v = self.noise.sample(rng);
        let transmit = self.strategy.schedule(t, x);
        let x_tilde = if transmit { Message::Payload(x) } else { Message::Silent };
        let y = self.strategy.encode(t, x_tilde)?;
        let y_tilde = match y {
            Message::Payload(y) => Message::Payload(y + v),
            Message::Silent => Message::Silent,
        };
        let s = side_channel(x_tilde);
        let x_hat = self.strategy.decode(t, y_tilde, s)?;
        let err = x - x_hat;
        let comm = if transmit { self.comm_cost } else { F::zero() };
        Ok(StageOutcome {
            t,
            x,
            u: transmit as u8,
            y,
            v,
            y_tilde,
            s,
            x_hat,
            stage_cost: comm + err * err,
        })
    }

    fn episode(&self, horizon: usize, rng: &mut RngHandle, mut visit: impl FnMut(&StageOutcome<F>)) -> Result<()> {
        for t in 1..=horizon {
            visit(&self.stage(t, rng)?);
        }
        Ok(())
    }
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        Err(Error::invalid("horizon", "must be >= 1"))
    } else {
        Ok(())
    }
}

fn check_episodes(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::invalid("episodes", format!("must be >= 2, got {n}")))
    } else {
        Ok(())
    }
}

fn count<F: Scalar>(n: usize) -> F {
    F::from_usize(n).expect("count fits scalar")
}

/// Run `horizon` stages of the system with the same strategy at every stage.
pub fn run_episode<F: Scalar>(
    p: &SystemParams<F>,
    strategy: &dyn Strategy<F>,
    horizon: usize,
    rng: &mut RngHandle,
) -> Result<EpisodeTrace<F>> {
    check_horizon(horizon)?;
    let plant = Plant::new(p, strategy);
    let mut stages = Vec::with_capacity(horizon);
    plant.episode(horizon, rng, |s| stages.push(*s))?;
    let total_cost = stages.iter().fold(F::zero(), |acc, s| acc + s.stage_cost);
    Ok(EpisodeTrace {
        params: *p,
        horizon,
        stages,
        total_cost,
    })
}

fn episode_average<F: Scalar>(plant: &Plant<'_, F>, horizon: usize, mut rng: RngHandle) -> Result<F> {
    let mut total = F::zero();
    plant.episode(horizon, &mut rng, |s| total = total + s.stage_cost)?;
    Ok(total / count(horizon))
}

/// Mean and standard error of the per-stage average cost across episodes.
///
/// Episode `i` runs on `rng.fork(i)`.
pub fn estimate_cost<F: Scalar>(
    p: &SystemParams<F>,
    strategy: &dyn Strategy<F>,
    horizon: usize,
    n_episodes: usize,
    rng: &RngHandle,
    exec: Execution,
) -> Result<MonteCarloEstimate<F>> {
    check_horizon(horizon)?;
    check_episodes(n_episodes)?;
    let plant = Plant::new(p, strategy);
    let mut acc = Accumulator::new();
    fold_indexed(
        n_episodes,
        exec,
        |i| episode_average(&plant, horizon, rng.fork(i)),
        |avg| acc.push(avg),
    )?;
    acc.estimate()
}

/// Cost estimates for several strategies on shared random numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrnComparison<F> {
    pub estimates: Vec<MonteCarloEstimate<F>>,
    /// Paired per-episode difference `strategy[i] − strategy[0]`.
    pub differences: Vec<MonteCarloEstimate<F>>,
}

pub fn compare_strategies<F: Scalar>(
    p: &SystemParams<F>,
    strategies: &[&dyn Strategy<F>],
    horizon: usize,
    n_episodes: usize,
    rng: &RngHandle,
    exec: Execution,
) -> Result<CrnComparison<F>> {
    check_horizon(horizon)?;
    check_episodes(n_episodes)?;
    if strategies.is_empty() {
        return Err(Error::EmptyGrid("strategy list"));
    }
    let plants: Vec<_> = strategies.iter().map(|s| Plant::new(p, *s)).collect();
    let mut totals = vec![Accumulator::new(); plants.len()];
    let mut diffs = vec![Accumulator::new(); plants.len()];
    fold_indexed(
        n_episodes,
        exec,
        |i| {
            plants
                .iter()
                .map(|plant| episode_average(plant, horizon, rng.fork(i)))
                .collect::<Result<Vec<F>>>()
        },
        |avgs| {
            for (j, &a) in avgs.iter().enumerate() {
                totals[j].push(a);
                diffs[j].push(a - avgs[0]);
            }
        },
    )?;
    Ok(CrnComparison {
        estimates: totals.iter().map(|a| a.estimate()).collect::<Result<_>>()?,
        differences: diffs.iter().map(|a| a.estimate()).collect::<Result<_>>()?,
    })
}

/// Statistics conditioned on a transmission having happened.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionalStats<F> {
    pub transmissions: usize,
    pub stages: usize,
    /// `E[(X − X̂)² | U = 1]`.
    pub mse: MonteCarloEstimate<F>,
    /// `E[(X − X̂)² | U = 1, S = +1]`.
    pub mse_plus: MonteCarloEstimate<F>,
    /// `E[(X − X̂)² | U = 1, S = −1]`.
    pub mse_minus: MonteCarloEstimate<F>,
    /// `E[Y² | U = 1]`.
    pub power: MonteCarloEstimate<F>,
    /// Fraction of stages with `U = 1`.
    pub tx_frequency: MonteCarloEstimate<F>,
    /// `E[X̂ − X | U = 1]`.
    pub bias: MonteCarloEstimate<F>,
    pub bias_plus: MonteCarloEstimate<F>,
    pub bias_minus: MonteCarloEstimate<F>,
}

/// Single long episode; every stage with `U = 1` contributes.
pub fn estimate_conditional_stats<F: Scalar>(
    p: &SystemParams<F>,
    strategy: &dyn Strategy<F>,
    horizon: usize,
    rng: &mut RngHandle,
) -> Result<ConditionalStats<F>> {
    check_horizon(horizon)?;
    let plant = Plant::new(p, strategy);
    let mut mse = Accumulator::new();
    let mut mse_plus = Accumulator::new();
    let mut mse_minus = Accumulator::new();
    let mut power = Accumulator::new();
    let mut freq = Accumulator::new();
    let mut bias = Accumulator::new();
    let mut bias_plus = Accumulator::new();
    let mut bias_minus = Accumulator::new();
    let mut protocol: Result<()> = Ok(());
    plant.episode(horizon, rng, |s| {
        freq.push(F::from_u8(s.u).expect("0 or 1"));
        if s.u == 0 {
            return;
        }
        let (Some(y), SideInfo::Sign(sign)) = (s.y.payload(), s.s) else {
            protocol = Err(Error::ProtocolViolation(format!("stage {} transmitted without payload", s.t)));
            return;
        };
        let err = s.x_hat - s.x;
        mse.push(err * err);
        bias.push(err);
        power.push(y * y);
        match sign {
            Sign::Plus => {
                mse_plus.push(err * err);
                bias_plus.push(err);
            }
            Sign::Minus => {
                mse_minus.push(err * err);
                bias_minus.push(err);
            }
        }
    })?;
    protocol?;
    let transmissions = mse.count();
    if transmissions < MIN_TRANSMISSIONS || mse_plus.count() < 2 || mse_minus.count() < 2 {
        return Err(Error::InsufficientTransmissions {
            required: MIN_TRANSMISSIONS,
            found: transmissions,
        });
    }
    Ok(ConditionalStats {
        transmissions,
        stages: horizon,
        mse: mse.estimate()?,
        mse_plus: mse_plus.estimate()?,
        mse_minus: mse_minus.estimate()?,
        power: power.estimate()?,
        tx_frequency: freq.estimate()?,
        bias: bias.estimate()?,
        bias_plus: bias_plus.estimate()?,
        bias_minus: bias_minus.estimate()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityReport<F> {
    pub stage_means: Vec<MonteCarloEstimate<F>>,
    /// Largest `|mean_i − mean_j| / √(se_i² + se_j²)` over stage pairs.
    pub max_pairwise_z: F,
    /// 1-based stages attaining `max_pairwise_z`.
    pub worst_pair: Option<(usize, usize)>,
    pub sigmas: F,
    pub stationary: bool,
}

/// Per-stage mean cost across episodes, and whether all stages agree within `sigmas`.
pub fn stationarity_check<F: Scalar>(
    p: &SystemParams<F>,
    strategy: &dyn Strategy<F>,
    horizon: usize,
    n_episodes: usize,
    rng: &RngHandle,
    sigmas: F,
    exec: Execution,
) -> Result<StationarityReport<F>> {
    check_horizon(horizon)?;
    check_episodes(n_episodes)?;
    let plant = Plant::new(p, strategy);
    let mut per_stage = vec![Accumulator::new(); horizon];
    fold_indexed(
        n_episodes,
        exec,
        |i| {
            let mut rng = rng.fork(i);
            let mut costs = Vec::with_capacity(horizon);
            plant.episode(horizon, &mut rng, |s| costs.push(s.stage_cost))?;
            Ok(costs)
        },
        |costs| {
            for (acc, c) in per_stage.iter_mut().zip(costs) {
                acc.push(c);
            }
        },
    )?;
    let stage_means: Vec<_> = per_stage.iter().map(|a| a.estimate()).collect::<Result<_>>()?;
    let mut max_z = F::zero();
    let mut worst_pair = None;
    for i in 0..horizon {
        for j in (i + 1)..horizon {
            let (a, b) = (&stage_means[i], &stage_means[j]);
            let se = (a.std_error * a.std_error + b.std_error * b.std_error).sqrt();
            let gap = (a.mean - b.mean).abs();
            let z = if gap == F::zero() { F::zero() } else { gap / se };
            if worst_pair.is_none() || z > max_z {
                max_z = z;
                worst_pair = Some((i + 1, j + 1));
            }
        }
    }
    Ok(StationarityReport {
        stage_means,
        max_pairwise_z: max_z,
        worst_pair,
        sigmas,
        stationary: max_z < sigmas,
    })
}
