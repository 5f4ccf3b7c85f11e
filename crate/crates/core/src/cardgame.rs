//! The finite card game: the devil labels between 1 and `N` of `d` cards,
//! the deck is shuffled and turned up one card at a time, and the selector
//! must stop on the last labeled card. The selector sees only the position
//! `i` and the number `k` of labeled cards so far.
//!
//! Values are in `f64`; every quantity here is a finite sum of products of
//! binomial ratios.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Largest `N` accepted by [`fictitious_play`].
pub const FP_MAX_LABELED: usize = 12;
/// Largest deck accepted by [`fictitious_play`].
pub const FP_MAX_DECK: usize = 30;

/// Devil weights below this count as outside the support.
pub const SUPPORT_EPS: f64 = 1e-3;

/// Accept probabilities within this distance of 0 or 1 count as 0 or 1 in
/// the sharp-threshold check.
pub const SHARPNESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardGameConfig {
    pub deck: usize,
    pub max_labeled: usize,
}

impl CardGameConfig {
    pub fn new(deck: usize, max_labeled: usize) -> Result<Self> {
        if max_labeled == 0 || max_labeled > deck {
            return domain(format!("card game needs 1 <= N <= d, got N = {max_labeled}, d = {deck}"));
        }
        if deck > 1000 {
            return domain(format!("deck size {deck} exceeds 1000"));
        }
        Ok(CardGameConfig { deck, max_labeled })
    }

    /// `1 / C(d, n)` for `n = 0..=N`.
    fn inv_binomials(&self) -> Vec<f64> {
        let d = self.deck;
        let mut c = 1.0f64;
        let mut out = vec![1.0];
        for n in 1..=self.max_labeled {
            c = c * (d + 1 - n) as f64 / n as f64;
            out.push(1.0 / c);
        }
        out
    }
}

/// Probability weights `p[n-1]` for `n = 1..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevilMix {
    pub weights: Vec<f64>,
}

impl DevilMix {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return domain("devil weights must be finite and non-negative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return domain(format!("devil weights sum to {total}, not 1"));
        }
        Ok(DevilMix { weights })
    }

    pub fn uniform(n: usize) -> Self {
        DevilMix { weights: vec![1.0 / n as f64; n] }
    }

    pub fn point(n_max: usize, n: usize) -> Self {
        let mut weights = vec![0.0; n_max];
        weights[n - 1] = 1.0;
        DevilMix { weights }
    }

    pub fn support(&self) -> Vec<usize> {
        (1..=self.weights.len()).filter(|&n| self.weights[n - 1] > SUPPORT_EPS).collect()
    }
}

/// `f_k(i)`: probability of accepting the `k`-th labeled card when it is
/// the `i`-th card turned, for `1 <= k <= N` and `k <= i <= d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehavioralStrategy {
    pub deck: usize,
    /// `accept[k-1][i-k]`.
    pub accept: Vec<Vec<f64>>,
}

impl BehavioralStrategy {
    fn zeros(config: &CardGameConfig) -> Self {
        let d = config.deck;
        BehavioralStrategy {
            deck: d,
            accept: (1..=config.max_labeled).map(|k| vec![0.0; d + 1 - k]).collect(),
        }
    }

    pub fn max_labeled(&self) -> usize {
        self.accept.len()
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.accept[k - 1][i - k]
    }

    pub fn set(&mut self, k: usize, i: usize, p: f64) {
        self.accept[k - 1][i - k] = p;
    }

    pub fn is_deterministic(&self) -> bool {
        self.accept.iter().flatten().all(|&p| p == 0.0 || p == 1.0)
    }

    fn check(&self, config: &CardGameConfig) -> Result<()> {
        if self.deck != config.deck || self.max_labeled() != config.max_labeled {
            return domain("strategy shape does not match the card game");
        }
        let d = config.deck;
        for (k, row) in self.accept.iter().enumerate() {
            if row.len() != d - k || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return domain("accept probabilities must lie in [0, 1] on k <= i <= d");
            }
        }
        Ok(())
    }
}

/// `reach[i][k]`: number of length-`i` card sequences with `k` labeled,
/// weighted by the probability the selector has not yet stopped. It does
/// not depend on the devil's `n`.
fn reach(config: &CardGameConfig, s: &BehavioralStrategy) -> Vec<Vec<f64>> {
    let (d, big_n) = (config.deck, config.max_labeled);
    let mut r = vec![vec![0.0; big_n + 1]; d + 1];
    r[0][0] = 1.0;
    for i in 0..d {
        for k in 0..=big_n.min(i) {
            let here = r[i][k];
            if here == 0.0 {
                continue;
            }
            r[i + 1][k] += here;
            if k < big_n {
                r[i + 1][k + 1] += here * (1.0 - s.get(k + 1, i + 1));
            }
        }
    }
    r
}

/// Win probability of `s` against each `n = 1..=N`.
pub fn win_profile(config: &CardGameConfig, s: &BehavioralStrategy) -> Result<Vec<f64>> {
    s.check(config)?;
    Ok(profile_from_reach(config, s, &reach(config, s)))
}

fn profile_from_reach(config: &CardGameConfig, s: &BehavioralStrategy, r: &[Vec<f64>]) -> Vec<f64> {
    let inv = config.inv_binomials();
    (1..=config.max_labeled)
        .map(|n| {
            // the n-th labeled card at position i, all later cards blank
            let hits: f64 = (n..=config.deck).map(|i| r[i - 1][n - 1] * s.get(n, i)).sum();
            hits * inv[n]
        })
        .collect()
}

/// Optimal deterministic selector reply to `mix`, with its win probability.
/// Ties go to rejecting.
pub fn best_response(config: &CardGameConfig, mix: &DevilMix) -> Result<(f64, BehavioralStrategy)> {
    if mix.weights.len() != config.max_labeled {
        return domain(format!(
            "mix has {} weights for N = {}",
            mix.weights.len(),
            config.max_labeled
        ));
    }
    let (d, big_n) = (config.deck, config.max_labeled);
    let inv = config.inv_binomials();
    // value of stopping on the k-th labeled card, per card sequence
    let stop: Vec<f64> = (0..=big_n)
        .map(|k| if k == 0 { 0.0 } else { mix.weights[k - 1] * inv[k] })
        .collect();
    let mut s = BehavioralStrategy::zeros(config);
    // w[k]: continuation value from (i, k) per sequence, for the current i
    let mut w = vec![0.0; big_n + 1];
    for i in (0..d).rev() {
        let mut next = vec![0.0; big_n + 1];
        for k in 0..=big_n.min(i) {
            let mut v = w[k];
            if k < big_n {
                let (accept, reject) = (stop[k + 1], w[k + 1]);
                if accept > reject {
                    s.set(k + 1, i + 1, 1.0);
                    v += accept;
                } else {
                    v += reject;
                }
            }
            next[k] = v;
        }
        w = next;
    }
    Ok((w[0], s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FictitiousPlayReport {
    pub config: CardGameConfig,
    pub iterations: usize,
    /// Midpoint of `lower` and `upper`.
    pub value: f64,
    /// Worst-case win probability of the averaged selector strategy.
    pub lower: f64,
    /// Best-response value against the averaged devil mix.
    pub upper: f64,
    pub gap: f64,
    pub converged: bool,
    pub mix: DevilMix,
    pub strategy: BehavioralStrategy,
    /// Win probability of `strategy` against each `n`.
    pub profile: Vec<f64>,
}

/// Fictitious play: each round the selector best-responds to the averaged
/// devil mix and the devil best-responds to the averaged selector strategy.
/// Stops once `upper - lower < tol`.
pub fn fictitious_play(config: &CardGameConfig, iterations: usize, tol: f64) -> Result<FictitiousPlayReport> {
    if config.max_labeled > FP_MAX_LABELED || config.deck > FP_MAX_DECK {
        return domain(format!(
            "fictitious play limited to N <= {FP_MAX_LABELED}, d <= {FP_MAX_DECK}"
        ));
    }
    if iterations == 0 || tol.is_nan() || tol < 0.0 {
        return domain("fictitious play needs iterations >= 1 and tol >= 0");
    }
    let (d, big_n) = (config.deck, config.max_labeled);
    let mut devil_counts = vec![0.0; big_n];
    let mut mix = DevilMix::uniform(big_n);
    let mut profile_sum = vec![0.0; big_n];
    // sums of reach-weighted accept probabilities and of reach weights
    let mut accept_sum = BehavioralStrategy::zeros(config);
    let mut reach_sum = BehavioralStrategy::zeros(config);
    let (mut lower, mut upper) = (0.0, 1.0);
    let mut done = 0;
    for t in 1..=iterations {
        done = t;
        let (br_value, br) = best_response(config, &mix)?;
        let r = reach(config, &br);
        for (acc, p) in profile_sum.iter_mut().zip(profile_from_reach(config, &br, &r)) {
            *acc += p;
        }
        for k in 1..=big_n {
            for i in k..=d {
                let weight = r[i - 1][k - 1];
                reach_sum.accept[k - 1][i - k] += weight;
                accept_sum.accept[k - 1][i - k] += weight * br.get(k, i);
            }
        }
        let tf = t as f64;
        let (worst_n, worst) = argmin(profile_sum.iter().map(|p| p / tf));
        upper = br_value;
        lower = worst;
        if upper - lower < tol {
            break;
        }
        devil_counts[worst_n - 1] += 1.0;
        let total: f64 = devil_counts.iter().sum();
        mix = DevilMix { weights: devil_counts.iter().map(|c| c / total).collect() };
    }
    let mut strategy = BehavioralStrategy::zeros(config);
    for k in 1..=big_n {
        for i in k..=d {
            let weight = reach_sum.get(k, i);
            let p = if weight > 0.0 { accept_sum.get(k, i) / weight } else { 0.0 };
            strategy.set(k, i, p.clamp(0.0, 1.0));
        }
    }
    let profile = win_profile(config, &strategy)?;
    let gap = upper - lower;
    Ok(FictitiousPlayReport {
        config: *config,
        iterations: done,
        value: 0.5 * (upper + lower),
        lower,
        upper,
        gap,
        converged: gap < tol,
        mix,
        strategy,
        profile,
    })
}

fn argmin(values: impl Iterator<Item = f64>) -> (usize, f64) {
    values
        .enumerate()
        .fold((1, f64::INFINITY), |best, (i, v)| if v < best.1 { (i + 1, v) } else { best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpnessViolation {
    pub k: usize,
    pub i: usize,
    pub at_i: f64,
    pub at_next: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub profile: Vec<f64>,
    pub support: Vec<usize>,
    /// Max minus min of the win profile over the support.
    pub spread: f64,
    pub violations: Vec<SharpnessViolation>,
}

/// Checks the equilibrium necessary conditions: equal win probability
/// across the devil's support, full support, and sharp thresholds
/// (`f_k(i) > 0` implies `f_k(i+1) = 1`) wherever the decision is reachable.
pub fn structure_check(
    config: &CardGameConfig,
    mix: &DevilMix,
    strategy: &BehavioralStrategy,
) -> Result<StructureReport> {
    strategy.check(config)?;
    if mix.weights.len() != config.max_labeled {
        return domain("mix length does not match N");
    }
    let r = reach(config, strategy);
    let profile = profile_from_reach(config, strategy, &r);
    let support = mix.support();
    let on_support = support.iter().map(|&n| profile[n - 1]);
    let spread = on_support.clone().fold(f64::NEG_INFINITY, f64::max)
        - on_support.fold(f64::INFINITY, f64::min);
    let mut violations = Vec::new();
    for k in 1..=config.max_labeled {
        #[allow(clippy::needless_range_loop)]
        for i in k..config.deck {
            let (now, next) = (strategy.get(k, i), strategy.get(k, i + 1));
            // the decision at (i+1, k) is reached through state (i, k-1)
            if r[i][k - 1] > 0.0 && now > SHARPNESS_TOL && next < 1.0 - SHARPNESS_TOL {
                violations.push(SharpnessViolation { k, i, at_i: now, at_next: next });
            }
        }
    }
    Ok(StructureReport { profile, support, spread: spread.max(0.0), violations })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Every deterministic selector strategy's win profile.
    fn all_profiles(config: &CardGameConfig) -> Vec<Vec<f64>> {
        let slots: Vec<(usize, usize)> = (1..=config.max_labeled)
            .flat_map(|k| (k..=config.deck).map(move |i| (k, i)))
            .collect();
        assert!(slots.len() <= 20);
        (0u32..1 << slots.len())
            .map(|bits| {
                let mut s = BehavioralStrategy::zeros(config);
                for (j, &(k, i)) in slots.iter().enumerate() {
                    s.set(k, i, f64::from((bits >> j) & 1));
                }
                win_profile(config, &s).unwrap()
            })
            .collect()
    }

    /// Exact value of an `N = 2` game: minimise the upper envelope of
    /// `t w1 + (1 - t) w2` over `t`, checking every breakpoint.
    fn two_column_value(config: &CardGameConfig) -> f64 {
        let profiles = all_profiles(config);
        let envelope = |t: f64| {
            profiles.iter().map(|w| t * w[0] + (1.0 - t) * w[1]).fold(f64::MIN, f64::max)
        };
        let mut candidates = vec![0.0, 1.0];
        for a in &profiles {
            for b in &profiles {
                // t a1 + (1-t) a2 = t b1 + (1-t) b2
                let denom = (a[0] - a[1]) - (b[0] - b[1]);
                if denom.abs() > 1e-15 {
                    let t = (b[1] - a[1]) / denom;
                    if (0.0..=1.0).contains(&t) {
                        candidates.push(t);
                    }
                }
            }
        }
        candidates.into_iter().map(envelope).fold(f64::MAX, f64::min)
    }

    fn cfg(d: usize, n: usize) -> CardGameConfig {
        CardGameConfig::new(d, n).unwrap()
    }

    #[test]
    fn config_bounds() {
        assert!(CardGameConfig::new(3, 4).is_err());
        assert!(CardGameConfig::new(3, 0).is_err());
        assert!(DevilMix::new(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn point_masses_win_surely() {
        let c = cfg(5, 1);
        let (v, s) = best_response(&c, &DevilMix::point(1, 1)).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        assert_eq!(win_profile(&c, &s).unwrap(), vec![1.0]);
        let c = cfg(6, 3);
        let (v, _) = best_response(&c, &DevilMix::point(3, 3)).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_by_two_by_hand() {
        let c = cfg(2, 2);
        // best reply to (1/2, 1/2): accept the first labeled card only in
        // position 2, and the second always, winning 3/4
        let (v, s) = best_response(&c, &DevilMix::uniform(2)).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
        assert_eq!(win_profile(&c, &s).unwrap().iter().sum::<f64>() / 2.0, v);
        assert!((two_column_value(&c) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dp_matches_enumeration() {
        for (d, n) in [(2, 2), (4, 2), (5, 2), (4, 3)] {
            let c = cfg(d, n);
            let profiles = all_profiles(&c);
            for weights in [vec![1.0 / n as f64; n], {
                let mut w: Vec<f64> = (1..=n).map(|j| j as f64).collect();
                let t: f64 = w.iter().sum();
                w.iter_mut().for_each(|x| *x /= t);
                w
            }] {
                let mix = DevilMix::new(weights.clone()).unwrap();
                let best = profiles
                    .iter()
                    .map(|w| w.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>())
                    .fold(f64::MIN, f64::max);
                let (v, s) = best_response(&c, &mix).unwrap();
                assert!((v - best).abs() < 1e-13, "d={d} N={n}: {v} vs {best}");
                let realised: f64 =
                    win_profile(&c, &s).unwrap().iter().zip(&weights).map(|(a, b)| a * b).sum();
                assert!((realised - v).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn fictitious_play_matches_oracle() {
        let c = cfg(4, 2);
        let oracle = two_column_value(&c);
        let rep = fictitious_play(&c, 200_000, 1e-3).unwrap();
        assert!(rep.converged, "gap {}", rep.gap);
        assert!(rep.lower <= oracle + 1e-12 && oracle <= rep.upper + 1e-12);
        assert!((rep.value - oracle).abs() < 1e-3);
    }

    #[test]
    fn single_label_converges_at_once() {
        let rep = fictitious_play(&cfg(3, 1), 10, 1e-12).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.gap, 0.0);
        assert!((rep.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn averaged_profile_is_consistent() {
        let c = cfg(6, 3);
        let rep = fictitious_play(&c, 300, 0.0).unwrap();
        let worst = rep.profile.iter().copied().fold(f64::MAX, f64::min);
        assert!((worst - rep.lower).abs() < 1e-12, "{worst} vs {}", rep.lower);
    }

    #[test]
    fn best_responses_have_sharp_thresholds() {
        let c = cfg(9, 3);
        for weights in [vec![0.2, 0.3, 0.5], vec![0.6, 0.3, 0.1], vec![1.0 / 3.0; 3]] {
            let mix = DevilMix::new(weights).unwrap();
            let (_, s) = best_response(&c, &mix).unwrap();
            assert!(s.is_deterministic());
            assert!(structure_check(&c, &mix, &s).unwrap().violations.is_empty());
        }
    }

    #[test]
    fn perturbed_strategy_is_flagged() {
        let c = cfg(9, 3);
        let mix = DevilMix::uniform(3);
        let (_, mut s) = best_response(&c, &mix).unwrap();
        let k = 1;
        let i = (k..c.deck).find(|&i| s.get(k, i) == 1.0).unwrap();
        s.set(k, i + 1, 0.0);
        let rep = structure_check(&c, &mix, &s).unwrap();
        assert!(rep.violations.iter().any(|v| v.k == k && v.i == i), "{rep:?}");
    }
}
