//! Monte Carlo play of the last-arrival game.
//!
//! Each trial draws from its own ChaCha8 stream keyed by
//! `(seed, partition, trial within partition)`, so the win count depends
//! only on `(seed, partitions, trials)` and never on scheduling.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numerics::Real;
use crate::thresholds::{win_prob_exact, TailRule, ThresholdStrategy};

/// Trials are split into this many independently keyed partitions unless a
/// caller asks otherwise.
pub const DEFAULT_PARTITIONS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SelectorStrategy {
    /// Accept the `k`-th arrival iff it comes at or after `a_k`.
    Threshold(ThresholdStrategy),
    /// Count the `k` arrivals in `[0, 1/2]`, then accept the first arrival
    /// at or after `1 - 1/(2k)`; with `k = 0` accept the first arrival.
    HalfObserve,
    /// Threshold strategy with `a_k = 1 - 1/(k+1)`.
    Odds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AdversaryChoice {
    Fixed { n: usize },
    /// `weights[i]` is the probability of `n = i + 1`.
    Categorical { weights: Vec<f64> },
    /// `n ~ Poisson(lambda)`; `n = 0` is a selector win.
    Poisson { lambda: f64 },
}

impl AdversaryChoice {
    fn validate(&self) -> Result<()> {
        match self {
            AdversaryChoice::Fixed { n } if *n == 0 => domain("fixed adversary needs n >= 1"),
            AdversaryChoice::Categorical { weights } => {
                if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return domain("categorical weights must be finite and non-negative");
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return domain(format!("categorical weights sum to {total}, not 1"));
                }
                Ok(())
            }
            AdversaryChoice::Poisson { lambda } if !(lambda.is_finite() && *lambda > 0.0) => {
                domain(format!("poisson rate {lambda} must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Largest `n` the adversary plays with non-negligible probability.
    fn max_n(&self) -> usize {
        match self {
            AdversaryChoice::Fixed { n } => *n,
            AdversaryChoice::Categorical { weights } => weights.len(),
            AdversaryChoice::Poisson { lambda } => (lambda + 15.0 * lambda.sqrt() + 40.0) as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub trials: u64,
    pub wins: u64,
    pub estimate: f64,
    pub std_error: f64,
    pub seed: u64,
    pub partitions: usize,
}

impl SimResult {
    fn new(trials: u64, wins: u64, seed: u64, partitions: usize) -> Self {
        let estimate = wins as f64 / trials as f64;
        let std_error = (estimate * (1.0 - estimate) / trials as f64).sqrt();
        SimResult { trials, wins, estimate, std_error, seed, partitions }
    }
}

/// A strategy lowered to `f64` for play.
#[derive(Debug, Clone)]
pub struct Compiled {
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Table { head: Vec<f64>, harmonic: bool },
    HalfObserve,
    Odds,
}

impl Compiled {
    /// Lowers `strategy`; threshold strategies must cover every `n <= max_n`.
    pub fn new(strategy: &SelectorStrategy, max_n: usize) -> Result<Self> {
        let kind = match strategy {
            SelectorStrategy::Threshold(s) => {
                if !s.covers(max_n) {
                    return domain(format!("threshold strategy does not cover n = {max_n}"));
                }
                let harmonic = matches!(s.tail(), TailRule::Harmonic { .. });
                Kind::Table { head: s.head().iter().map(Real::to_f64).collect(), harmonic }
            }
            SelectorStrategy::HalfObserve => Kind::HalfObserve,
            SelectorStrategy::Odds => Kind::Odds,
        };
        Ok(Compiled { kind })
    }

    /// `a_k`, 1-indexed; past a finite horizon the selector never accepts.
    fn threshold(&self, k: usize) -> f64 {
        match &self.kind {
            Kind::Table { head, harmonic } => match head.get(k - 1) {
                Some(a) => *a,
                None if *harmonic => 1.0 - 1.0 / k as f64,
                None => f64::INFINITY,
            },
            Kind::Odds => 1.0 - 1.0 / (k + 1) as f64,
            Kind::HalfObserve => unreachable!("half-observe has no threshold table"),
        }
    }
}

/// One game against `n >= 1` items; true iff the accepted item is the last.
pub fn play_once<R: Rng + ?Sized>(rng: &mut R, strategy: &Compiled, n: usize, buf: &mut Vec<f64>) -> bool {
    buf.clear();
    buf.extend((0..n).map(|_| rng.random::<f64>()));
    match strategy.kind {
        Kind::HalfObserve => half_observe(buf),
        _ => {
            buf.sort_unstable_by(f64::total_cmp);
            for (k, &t) in buf.iter().enumerate() {
                if t >= strategy.threshold(k + 1) {
                    return k + 1 == n;
                }
            }
            false
        }
    }
}

/// Decides the half-observe game without sorting: the selector wins iff
/// exactly one arrival lies at or after its cutoff.
fn half_observe(times: &[f64]) -> bool {
    let k = times.iter().filter(|&&t| t <= 0.5).count();
    if k == 0 {
        return times.len() == 1;
    }
    let cutoff = 1.0 - 1.0 / (2 * k) as f64;
    times.iter().filter(|&&t| t >= cutoff).count() == 1
}

fn stream_rng(seed: u64, partition: usize, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((partition as u64) << 40) | trial);
    rng
}

/// Plays `trials` games with `n` drawn from `adversary` for each.
pub fn estimate(
    strategy: &SelectorStrategy,
    adversary: &AdversaryChoice,
    trials: u64,
    seed: u64,
    partitions: usize,
) -> Result<SimResult> {
    if trials == 0 {
        return domain("estimate needs at least one trial");
    }
    if partitions == 0 || partitions as u64 > trials {
        return domain(format!("partitions must lie in 1..={trials}"));
    }
    if trials / partitions as u64 >= 1 << 40 {
        return domain("too many trials per partition");
    }
    adversary.validate()?;
    let compiled = Compiled::new(strategy, adversary.max_n())?;
    let draw = Draw::new(adversary)?;
    let p = partitions as u64;
    let wins: u64 = (0..partitions)
        .into_par_iter()
        .map(|part| {
            let lo = trials * part as u64 / p;
            let hi = trials * (part as u64 + 1) / p;
            let mut buf = Vec::new();
            let mut wins = 0;
            for trial in 0..hi - lo {
                let mut rng = stream_rng(seed, part, trial);
                let won = match draw.sample(&mut rng) {
                    0 => true,
                    n => play_once(&mut rng, &compiled, n, &mut buf),
                };
                wins += u64::from(won);
            }
            wins
        })
        .sum();
    Ok(SimResult::new(trials, wins, seed, partitions))
}

enum Draw {
    Fixed(usize),
    Categorical(WeightedIndex<f64>),
    Poisson(Poisson<f64>),
}

impl Draw {
    fn new(adversary: &AdversaryChoice) -> Result<Self> {
        Ok(match adversary {
            AdversaryChoice::Fixed { n } => Draw::Fixed(*n),
            AdversaryChoice::Categorical { weights } => Draw::Categorical(
                WeightedIndex::new(weights).map_err(|e| crate::Error::Domain(e.to_string()))?,
            ),
            AdversaryChoice::Poisson { lambda } => {
                Draw::Poisson(Poisson::new(*lambda).map_err(|e| crate::Error::Domain(e.to_string()))?)
            }
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            Draw::Fixed(n) => *n,
            Draw::Categorical(w) => w.sample(rng) + 1,
            Draw::Poisson(p) => p.sample(rng) as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub result: SimResult,
    /// `win_prob_exact`, present for nondecreasing threshold strategies.
    pub exact: Option<Real>,
}

/// [`estimate`] against each fixed `n`, with the exact value alongside when
/// one is available.
pub fn sweep(
    strategy: &SelectorStrategy,
    n_values: &[usize],
    trials: u64,
    seed: u64,
    partitions: usize,
) -> Result<Vec<SweepRow>> {
    let max_n = n_values.iter().copied().max().unwrap_or(0);
    let exact_source = match strategy {
        SelectorStrategy::Threshold(s) if s.is_nondecreasing(max_n)? => Some(s.clone()),
        SelectorStrategy::Odds => Some(ThresholdStrategy::odds(Default::default(), max_n.max(1))),
        _ => None,
    };
    n_values
        .iter()
        .map(|&n| {
            let result = estimate(strategy, &AdversaryChoice::Fixed { n }, trials, seed, partitions)?;
            let exact = exact_source.as_ref().map(|s| win_prob_exact(s, n)).transpose()?;
            Ok(SweepRow { n, result, exact })
        })
        .collect()
}
