//! Threshold strategies and the canonical threshold recursions.
//!
//! A threshold strategy accepts the `k`-th arriving item iff it arrives after
//! time `a_k`. Fixing a target success probability `theta`, two recursions
//! are provided:
//!
//! - [`upper_bounds`]: bounds `b_n >= a_n` that every strategy achieving
//!   `theta` against every `n` must respect. A negative `b_n` proves `theta`
//!   unattainable.
//! - [`lower_strategy`]: a nondecreasing sequence `a_n` whose (bounded) win
//!   probability is at least `theta` for every `n` reached.
//!
//! Both come in an exact form, which evaluates the full `P_{n-1}`, and a
//! windowed form which tracks only the last `N + 1` thresholds exactly.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numerics::{binomial, Precision, Real};
use crate::ppoly::staircase_top;

/// Default window for the bound and strategy recursions.
pub const DEFAULT_WINDOW: usize = 24;

/// Default construction horizon.
pub const DEFAULT_HORIZON: usize = 1000;

/// Largest horizon accepted by the recursions.
pub const MAX_HORIZON: usize = 5000;

/// How much of the threshold history a recursion evaluates exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Full `P_{n-1}` at every step.
    Exact,
    /// Exact for `n <= N + 1`, truncated to the last `N + 1` thresholds
    /// afterwards.
    Truncated(usize),
}

impl Window {
    /// `Some(N)` when `n` falls in the truncated regime.
    fn truncation_at(self, n: usize) -> Option<usize> {
        match self {
            Window::Truncated(w) if n >= w + 2 => Some(w),
            _ => None,
        }
    }
}

/// Rule for thresholds beyond the explicit head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRule {
    /// The strategy is only defined on its head.
    None,
    /// `a_n = 1 - 1/n` for every `n >= start`; the head covers `1..start`.
    Harmonic { start: usize },
}

/// Thresholds `a_1, a_2, ...`: an explicit head plus an optional tail rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStrategy {
    head: Vec<Real>,
    tail: TailRule,
}

impl ThresholdStrategy {
    pub fn new(head: Vec<Real>, tail: TailRule) -> Result<Self> {
        if let TailRule::Harmonic { start } = tail {
            if start < 2 || head.len() != start - 1 {
                return domain(format!(
                    "harmonic tail from {start} needs a head of {} thresholds, got {}",
                    start.saturating_sub(1),
                    head.len()
                ));
            }
        }
        if head.is_empty() && tail == TailRule::None {
            return domain("a threshold strategy needs at least one threshold");
        }
        for (k, a) in head.iter().enumerate() {
            if a.is_negative() || a > &Real::one(a.precision()) {
                return domain(format!("threshold a_{} = {a} is outside [0, 1]", k + 1));
            }
        }
        Ok(ThresholdStrategy { head, tail })
    }

    /// The odds heuristic `a_k = 1 - 1/(k+1)` for `k = 1..=len`.
    pub fn odds(prec: Precision, len: usize) -> Self {
        let head = (1..=len as i64).map(|k| Real::ratio(prec, k, k + 1)).collect();
        ThresholdStrategy { head, tail: TailRule::None }
    }

    /// A single time cutoff applied to the first `len` items.
    pub fn constant(prec: Precision, cutoff: &Real, len: usize) -> Result<Self> {
        Self::new(vec![cutoff.with_precision(prec); len], TailRule::None)
    }

    pub fn head(&self) -> &[Real] {
        &self.head
    }

    pub fn tail(&self) -> TailRule {
        self.tail
    }

    pub fn precision(&self) -> Precision {
        self.head.first().map_or_else(Precision::default, Real::precision)
    }

    /// Re-rounds every stored threshold.
    pub fn with_precision(&self, prec: Precision) -> Self {
        ThresholdStrategy {
            head: self.head.iter().map(|a| a.with_precision(prec)).collect(),
            tail: self.tail,
        }
    }

    /// Largest index covered, `None` when the tail rule covers all `n`.
    pub fn horizon(&self) -> Option<usize> {
        match self.tail {
            TailRule::None => Some(self.head.len()),
            TailRule::Harmonic { .. } => None,
        }
    }

    pub fn covers(&self, n: usize) -> bool {
        self.horizon().is_none_or(|h| n <= h)
    }

    /// `a_k`, 1-indexed.
    pub fn threshold(&self, k: usize) -> Result<Real> {
        if k == 0 {
            return domain("thresholds are indexed from 1");
        }
        if k <= self.head.len() {
            return Ok(self.head[k - 1].clone());
        }
        match self.tail {
            TailRule::Harmonic { .. } => {
                let prec = self.precision();
                Ok(Real::ratio(prec, 1, k as i64).one_minus())
            }
            TailRule::None => domain(format!(
                "a_{k} requested but the strategy only covers n <= {}",
                self.head.len()
            )),
        }
    }

    /// `a_1..a_n`.
    pub fn thresholds(&self, n: usize) -> Result<Vec<Real>> {
        if !self.covers(n) {
            return domain(format!(
                "n = {n} lies beyond the strategy horizon {}",
                self.head.len()
            ));
        }
        (1..=n).map(|k| self.threshold(k)).collect()
    }

    /// Whether `a_1 <= ... <= a_n`.
    pub fn is_nondecreasing(&self, n: usize) -> Result<bool> {
        let a = self.thresholds(n)?;
        Ok(a.windows(2).all(|w| w[0] <= w[1]))
    }

    /// `alpha_{i,n} = min_{i <= j <= n} a_j` for `i = 1..=n`.
    pub fn running_minima(&self, n: usize) -> Result<Vec<Real>> {
        Ok(suffix_minima(self.thresholds(n)?))
    }
}

fn suffix_minima(mut a: Vec<Real>) -> Vec<Real> {
    for i in (0..a.len().saturating_sub(1)).rev() {
        if a[i + 1] < a[i] {
            a[i] = a[i + 1].clone();
        }
    }
    a
}

/// Probability that none of `n` items is accepted:
/// `P_n(alpha_1, alpha_2 - alpha_1, ..., alpha_n - alpha_{n-1})`.
pub fn nonacceptance_prob(s: &ThresholdStrategy, n: usize) -> Result<Real> {
    let alpha = s.running_minima(n)?;
    Ok(staircase_top(s.precision(), &alpha))
}

/// Exact win probability against `n` items of a strategy nondecreasing on
/// `1..=n`: `n (1 - a_n) P_{n-1}(a_1, a_2 - a_1, ..., a_{n-1} - a_{n-2})`.
///
/// Non-monotone heads are refused; the same expression is then only an upper
/// bound.
pub fn win_prob_exact(s: &ThresholdStrategy, n: usize) -> Result<Real> {
    if n == 0 {
        return domain("win_prob_exact: n must be at least 1");
    }
    let a = s.thresholds(n)?;
    if let Some(k) = a.windows(2).position(|w| w[1] < w[0]) {
        return domain(format!(
            "win_prob_exact: thresholds decrease at a_{} -> a_{}; only bounds are available",
            k + 1,
            k + 2
        ));
    }
    let prec = s.precision();
    let last = a[n - 1].one_minus();
    if n == 1 {
        return Ok(last);
    }
    Ok(last.mul_u(n as u64) * staircase_top(prec, &a[..n - 1]))
}

/// Outcome of an upper-bound recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Ok,
    /// `b_n < 0` at this (first) index.
    FailedAt(usize),
}

/// The sequence `b_1..b_H` together with the running minima `beta`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSequence {
    pub theta: Real,
    pub window: Window,
    pub b: Vec<Real>,
    /// `beta_i = min_{i <= j <= H} b_j` after the last update.
    pub beta: Vec<Real>,
    /// `lowered[n-1]` is true when `b_n` lowered an earlier `beta_i`.
    pub lowered: Vec<bool>,
    pub status: BoundStatus,
}

impl BoundSequence {
    /// `b_n`, 1-indexed.
    pub fn get(&self, n: usize) -> Option<&Real> {
        n.checked_sub(1).and_then(|i| self.b.get(i))
    }

    pub fn failure_index(&self) -> Option<usize> {
        match self.status {
            BoundStatus::FailedAt(n) => Some(n),
            BoundStatus::Ok => None,
        }
    }

    /// Running minima recomputed from `b` in one pass.
    pub fn recomputed_minima(&self) -> Vec<Real> {
        suffix_minima(self.b.clone())
    }
}

fn check_theta(theta: &Real, what: &str) -> Result<()> {
    if !theta.is_positive() || theta >= &Real::one(theta.precision()) {
        return domain(format!("{what}: theta must lie in (0, 1), got {theta}"));
    }
    Ok(())
}

fn check_horizon(horizon: usize, window: Window, what: &str) -> Result<()> {
    if horizon == 0 || horizon > MAX_HORIZON {
        return domain(format!("{what}: horizon must lie in 1..={MAX_HORIZON}, got {horizon}"));
    }
    if window == Window::Truncated(0) {
        return domain(format!("{what}: window must be at least 1"));
    }
    Ok(())
}

/// Upper bounds `b_n = 1 - theta / (n B_{n-1})` on every threshold of any
/// strategy winning with probability at least `theta` for all `n`.
///
/// `B_{n-1}` is `P_{n-1}` on the differences of the running minima (exact
/// form), or the window-truncated sum
/// `sum_{i=0}^{N} C(n-1, i) beta_{n-N-1}^{n-1-i} P_i(beta_{n-i} - beta_{n-N-1}, ...)`
/// for `n >= N + 2`. After each step every earlier `beta_i` is lowered to
/// `b_n` if larger. The recursion stops at the first negative `b_n`; a
/// non-positive denominator counts as `b_n = -inf`.
pub fn upper_bounds(theta: &Real, horizon: usize, window: Window) -> Result<BoundSequence> {
    check_theta(theta, "upper_bounds")?;
    check_horizon(horizon, window, "upper_bounds")?;
    Ok(upper_bounds_unchecked(theta, horizon, window))
}

fn upper_bounds_unchecked(theta: &Real, horizon: usize, window: Window) -> BoundSequence {
    let prec = theta.precision();
    let mut b: Vec<Real> = Vec::with_capacity(horizon);
    let mut beta: Vec<Real> = Vec::with_capacity(horizon);
    let mut lowered = Vec::with_capacity(horizon);
    let mut status = BoundStatus::Ok;
    for n in 1..=horizon {
        let denom = match window.truncation_at(n) {
            None => staircase_top(prec, &beta),
            Some(w) => windowed_upper_denominator(prec, &beta, n, w),
        };
        let bn = if denom.is_positive() {
            (theta / &(denom.mul_u(n as u64))).one_minus()
        } else {
            Real::neg_infinity(prec)
        };
        let mut any = false;
        for bi in beta.iter_mut() {
            if &bn < bi {
                *bi = bn.clone();
                any = true;
            }
        }
        lowered.push(any);
        b.push(bn.clone());
        beta.push(bn.clone());
        if bn.is_negative() {
            status = BoundStatus::FailedAt(n);
            break;
        }
    }
    BoundSequence { theta: theta.clone(), window, b, beta, lowered, status }
}

/// `sum_{i=0}^{N} C(n-1, i) base^{n-1-i} P_i(c_{n-i} - base, ..., c_{n-1} - base)`
/// where `base = c_{n-N-1}` and `c` holds the (1-indexed) thresholds so far.
fn windowed_upper_denominator(prec: Precision, c: &[Real], n: usize, w: usize) -> Real {
    let base = &c[n - w - 2];
    let shifted: Vec<Real> = c[n - w - 1..n - 1].iter().map(|x| x - base).collect();
    let mut total = Real::zero(prec);
    for i in 0..=w {
        let p_i = staircase_top(prec, &shifted[w - i..]);
        let weight = binomial(prec, (n - 1) as u64, i as u64).expect("i <= n - 1")
            * base.powu((n - 1 - i) as u32);
        total += weight * p_i;
    }
    total
}

/// Correction sums of the windowed lower bound:
///
/// `S_i = sum_{k=N+2-i}^{n-1-i} C(n-1-i, k) (1 - a_{n-i-k} / a_{n-N-1})^k`
///
/// for `i = 0..=N`. Reindexed by `j = n - i - k` (which runs over
/// `1..=n-N-2` for every `i`), each `j` needs one power and then steps
/// through `i` by multiplication.
fn lower_corrections(prec: Precision, a: &[Real], n: usize, w: usize) -> Vec<Real> {
    let base = &a[n - w - 2];
    let mut sums = vec![Real::zero(prec); w + 1];
    // binom_top = C(n-1, j-1), advanced with j.
    let mut binom_top = Real::one(prec);
    for j in 1..=n - w - 2 {
        if j > 1 {
            binom_top = binom_top.mul_u((n - j + 1) as u64).div_u((j - 1) as u64);
        }
        let ratio = (&a[j - 1] / base).one_minus();
        if ratio.is_zero() {
            continue;
        }
        // i = N first: exponent k = n - N - j, then k grows by one per step
        // down in i.
        let mut power = ratio.powu((n - w - j) as u32);
        // C(n-1-i, j-1) at i = N.
        let mut binom = binom_top.clone();
        for m in (n - 1 - w..n - 1).rev() {
            // C(m, j-1) = C(m+1, j-1) * (m + 1 - (j-1)) / (m + 1)
            binom = binom.mul_u((m + 2 - j) as u64).div_u((m + 1) as u64);
        }
        for i in (0..=w).rev() {
            sums[i] += &binom * &power;
            if i > 0 {
                power *= &ratio;
                // C(n-i, j-1) from C(n-1-i, j-1)
                let m = n - 1 - i;
                binom = binom.mul_u((m + 1) as u64).div_u((m + 2 - j) as u64);
            }
        }
    }
    sums
}

/// The windowed lower-bound denominator
///
/// `sum_{i=0}^{N} C(n-1, i) a_{n-N-1}^{n-1-i} (1 - S_i) P_i(a_{n-i} - a_{n-N-1}, ...)`
///
/// which satisfies `P(success against n) >= n (1 - a_n) * L` for a
/// nondecreasing strategy.
fn windowed_lower_denominator(prec: Precision, a: &[Real], n: usize, w: usize) -> Real {
    let base = &a[n - w - 2];
    let shifted: Vec<Real> = a[n - w - 1..n - 1].iter().map(|x| x - base).collect();
    let corrections = lower_corrections(prec, a, n, w);
    let mut total = Real::zero(prec);
    for (i, s_i) in corrections.iter().enumerate() {
        let p_i = staircase_top(prec, &shifted[w - i..]);
        let weight = binomial(prec, (n - 1) as u64, i as u64).expect("i <= n - 1")
            * base.powu((n - 1 - i) as u32);
        total += weight * s_i.one_minus() * p_i;
    }
    total
}

/// Step-by-step construction of the lower-bound thresholds.
///
/// `a_n = 1 - theta / (n L_{n-1})` where `L_{n-1}` is `P_{n-1}` of the
/// threshold differences for `n <= N + 1` (or always, in the exact form) and
/// the windowed lower-bound denominator afterwards.
#[derive(Debug, Clone)]
pub struct LowerRecursion {
    theta: Real,
    window: Window,
    a: Vec<Real>,
}

impl LowerRecursion {
    pub fn new(theta: &Real, window: Window) -> Result<Self> {
        check_theta(theta, "lower_strategy")?;
        check_horizon(1, window, "lower_strategy")?;
        Ok(LowerRecursion { theta: theta.clone(), window, a: Vec::new() })
    }

    pub fn thresholds(&self) -> &[Real] {
        &self.a
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Computes and appends the next threshold, failing if it would break
    /// monotonicity (or its denominator is not positive).
    pub fn step(&mut self) -> Result<&Real> {
        let prec = self.theta.precision();
        let n = self.a.len() + 1;
        if n > MAX_HORIZON {
            return domain(format!("lower_strategy: horizon capped at {MAX_HORIZON}"));
        }
        let denom = match self.window.truncation_at(n) {
            None => staircase_top(prec, &self.a),
            Some(w) => windowed_lower_denominator(prec, &self.a, n, w),
        };
        if !denom.is_positive() {
            return Err(Error::MonotonicityViolation { n });
        }
        let an = (&self.theta / &denom.mul_u(n as u64)).one_minus();
        let floor = self.a.last().cloned().unwrap_or_else(|| Real::zero(prec));
        if an < floor {
            return Err(Error::MonotonicityViolation { n });
        }
        self.a.push(an);
        Ok(self.a.last().unwrap())
    }
}

/// Thresholds `a_1..a_horizon` of the lower-bound construction, starting
/// from `a_1 = 1 - theta`.
pub fn lower_strategy(theta: &Real, horizon: usize, window: Window) -> Result<ThresholdStrategy> {
    check_horizon(horizon, window, "lower_strategy")?;
    let mut rec = LowerRecursion::new(theta, window)?;
    for _ in 0..horizon {
        rec.step()?;
    }
    ThresholdStrategy::new(rec.a, TailRule::None)
}

/// Lower bound on the win probability against `n >= N + 2` items:
/// `n (1 - a_n)` times the windowed lower-bound denominator.
pub fn lower_bound_winprob(s: &ThresholdStrategy, n: usize, window: usize) -> Result<Real> {
    if window == 0 || n < window + 2 {
        return domain(format!(
            "lower_bound_winprob: needs n >= N + 2 (n = {n}, N = {window}); use win_prob_exact"
        ));
    }
    let a = s.thresholds(n)?;
    if let Some(k) = a.windows(2).position(|w| w[1] < w[0]) {
        return domain(format!(
            "lower_bound_winprob: thresholds decrease at a_{} -> a_{}",
            k + 1,
            k + 2
        ));
    }
    let prec = s.precision();
    let denom = windowed_lower_denominator(prec, &a, n, window);
    Ok(a[n - 1].one_minus().mul_u(n as u64) * denom)
}

/// Bracket width at which [`theta_restricted`] stops bisecting.
pub const RESTRICTED_WIDTH_EXP10: i32 = -22;

/// Largest `N` accepted by [`theta_restricted`].
pub const RESTRICTED_MAX_N: usize = 60;

/// Value `theta_N` of the game restricted to `1 <= n <= N`, located by
/// bisection as the largest `theta` for which the canonical recursion
/// ([`CanonicalRecursion`]) survives through `N` (it ends at `a_N = 0`).
///
/// Bisection continues until the bracket is narrower than `1e-22` and
/// `|a_N| < tol`, or until the working precision is exhausted.
pub fn theta_restricted(n: usize, tol: &Real) -> Result<Real> {
    if n == 0 || n > RESTRICTED_MAX_N {
        return domain(format!("theta_restricted: N must lie in 1..={RESTRICTED_MAX_N}, got {n}"));
    }
    let prec = tol.precision();
    let one = Real::one(prec);
    // Some(a_N) iff the recursion survives through N
    let survives = |theta: &Real| -> Option<Real> {
        let mut rec = CanonicalRecursion::new(theta);
        for _ in 0..n {
            rec.step().ok()?;
        }
        rec.thresholds().last().cloned()
    };
    if survives(&one).is_some() {
        return Ok(one);
    }
    let width = Real::from_u64(prec, 10).powi(RESTRICTED_WIDTH_EXP10);
    let floor = crate::numerics::ldexp(prec, -(prec.bits() as i32) + 8);
    let mut lo = Real::zero(prec);
    let mut hi = one;
    let mut last_lo = Real::one(prec);
    loop {
        let mid = (&lo + &hi).div_u(2);
        match survives(&mid) {
            Some(a_n) => {
                lo = mid;
                last_lo = a_n;
            }
            None => hi = mid,
        }
        let gap = &hi - &lo;
        if (gap < width && lo.is_positive() && last_lo.abs() < *tol) || gap < floor {
            return Ok(lo);
        }
    }
}

/// Win probability against `n` items for arbitrary thresholds: the chance
/// that the first `n - 1` arrivals are all rejected, less the chance that
/// all `n` are.
pub fn win_prob(s: &ThresholdStrategy, n: usize) -> Result<Real> {
    if n == 0 {
        return domain("win_prob: n must be at least 1");
    }
    let a = s.thresholds(n)?;
    let alpha = suffix_minima(a[..n - 1].to_vec());
    Ok(canonical_win(s.precision(), &alpha, &a[n - 1]))
}

/// `NA_n(alpha, 1) - NA_n(min(alpha, x), x)` where `alpha` are the running
/// minima of `a_1..a_{n-1}`.
fn canonical_win(prec: Precision, alpha: &[Real], x: &Real) -> Real {
    let mut c: Vec<Real> = alpha.to_vec();
    c.push(Real::one(prec));
    let all_rejected_before = staircase_top(prec, &c);
    for ci in c.iter_mut() {
        if &*ci > x {
            *ci = x.clone();
        }
    }
    all_rejected_before - staircase_top(prec, &c)
}

/// The canonical thresholds: each `a_n` is the largest value giving win
/// probability at least `theta` against `n`, given `a_1..a_{n-1}`, with no
/// monotonicity assumed.
#[derive(Debug, Clone)]
pub struct CanonicalRecursion {
    theta: Real,
    a: Vec<Real>,
    /// Suffix minima of `a`.
    alpha: Vec<Real>,
}

impl CanonicalRecursion {
    pub fn new(theta: &Real) -> Self {
        CanonicalRecursion { theta: theta.clone(), a: Vec::new(), alpha: Vec::new() }
    }

    pub fn thresholds(&self) -> &[Real] {
        &self.a
    }

    /// Computes the next threshold; `Err(NoSolution)` when even `a_n = 0`
    /// falls short of `theta`.
    pub fn step(&mut self) -> Result<&Real> {
        let prec = self.theta.precision();
        let n = self.a.len() + 1;
        let zero = Real::zero(prec);
        let win_at_zero = canonical_win(prec, &self.alpha, &zero);
        if win_at_zero < self.theta {
            return Err(Error::NoSolution(format!("canonical threshold a_{n} would be negative")));
        }
        let top = staircase_top(prec, &self.alpha);
        let x = if n == 1 {
            self.theta.one_minus()
        } else {
            // above every earlier threshold the win probability is n (1 - x) top
            let closed = Real::one(prec) - &self.theta / &top.mul_u(n as u64);
            if closed >= self.alpha[n - 2] {
                closed
            } else {
                let start = closed.max(&zero).clone();
                self.solve_below(n, start, &win_at_zero)
            }
        };
        let x = x.max(&zero).clone();
        for al in self.alpha.iter_mut() {
            if *al > x {
                *al = x.clone();
            }
        }
        self.alpha.push(x.clone());
        self.a.push(x);
        Ok(self.a.last().unwrap())
    }

    /// Safeguarded Newton on `[0, start]`, where the win probability
    /// decreases with slope `-n P_{n-1}(min(alpha, x))`. `start` is the
    /// closed-form value, which overshoots: `n (1 - x) top` bounds the win
    /// probability from above.
    fn solve_below(&self, n: usize, start: Real, win_at_zero: &Real) -> Real {
        let prec = self.theta.precision();
        let (mut lo, mut hi) = (Real::zero(prec), start.clone());
        let eps = crate::numerics::ldexp(prec, -(prec.bits() as i32) + 4);
        let mut x = start;
        for _ in 0..4 * prec.bits() {
            let mut capped: Vec<Real> =
                self.alpha.iter().map(|al| if al > &x { x.clone() } else { al.clone() }).collect();
            let slope = staircase_top(prec, &capped).mul_u(n as u64);
            capped.push(x.clone());
            let f = win_at_zero - &staircase_top(prec, &capped) - &self.theta;
            if f.is_negative() {
                hi = x.clone();
            } else {
                lo = x.clone();
                if f < &eps * &self.theta {
                    break;
                }
            }
            if &hi - &lo < eps {
                break;
            }
            let next = &x + &(&f / &slope);
            x = if slope.is_positive() && next > lo && next < hi {
                next
            } else {
                (&lo + &hi).div_u(2)
            };
        }
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Precision {
        Precision::default()
    }

    fn r(s: &str) -> Real {
        Real::parse(p(), s).unwrap()
    }

    fn close(a: &Real, b: &Real, tol: f64) -> bool {
        (a - b).abs() < Real::from_f64(p(), tol)
    }

    #[test]
    fn strategy_construction_rules() {
        assert!(ThresholdStrategy::new(vec![r("1.5")], TailRule::None).is_err());
        assert!(ThresholdStrategy::new(vec![r("-0.1")], TailRule::None).is_err());
        assert!(ThresholdStrategy::new(vec![], TailRule::None).is_err());
        assert!(ThresholdStrategy::new(vec![r("0.5")], TailRule::Harmonic { start: 3 }).is_err());
        let s = ThresholdStrategy::new(vec![r("0.5"), r("0.6")], TailRule::Harmonic { start: 3 })
            .unwrap();
        assert_eq!(s.horizon(), None);
        assert_eq!(s.threshold(4).unwrap(), Real::ratio(p(), 3, 4));
        assert!(s.threshold(0).is_err());
        let t = ThresholdStrategy::odds(p(), 3);
        assert!(t.threshold(4).is_err());
        assert!(nonacceptance_prob(&t, 4).is_err());
    }

    #[test]
    fn nonacceptance_examples() {
        let s = ThresholdStrategy::new(vec![r("0.5"), r("0.3")], TailRule::None).unwrap();
        assert!(close(&nonacceptance_prob(&s, 2).unwrap(), &r("0.09"), 1e-33));
        assert!(close(&nonacceptance_prob(&s, 1).unwrap(), &r("0.5"), 1e-33));
        // invariant under replacing a by its running minima
        let alpha = ThresholdStrategy::new(s.running_minima(2).unwrap(), TailRule::None).unwrap();
        assert_eq!(nonacceptance_prob(&alpha, 2).unwrap(), nonacceptance_prob(&s, 2).unwrap());
        assert_eq!(nonacceptance_prob(&s, 0).unwrap(), Real::one(p()));
    }

    #[test]
    fn win_prob_exact_examples() {
        let odds = ThresholdStrategy::odds(p(), 10);
        assert!(close(&win_prob_exact(&odds, 1).unwrap(), &Real::ratio(p(), 1, 2), 1e-34));
        assert!(close(&win_prob_exact(&odds, 2).unwrap(), &Real::ratio(p(), 1, 3), 1e-34));
        assert!(close(&win_prob_exact(&odds, 3).unwrap(), &Real::ratio(p(), 5, 16), 1e-34));

        let theta = r("0.3529170002071955");
        let s = ThresholdStrategy::new(vec![theta.one_minus()], TailRule::None).unwrap();
        assert!(close(&win_prob_exact(&s, 1).unwrap(), &theta, 1e-35));

        let bad = ThresholdStrategy::new(vec![r("0.5"), r("0.3")], TailRule::None).unwrap();
        assert!(matches!(win_prob_exact(&bad, 2), Err(Error::Domain(_))));
        assert!(win_prob_exact(&bad, 1).is_ok());
    }

    #[test]
    fn upper_bounds_start_and_errors() {
        let t = r("0.000001");
        let seq = upper_bounds(&t, 3, Window::Exact).unwrap();
        assert_eq!(seq.b[0], t.one_minus());
        assert!(upper_bounds(&Real::zero(p()), 3, Window::Exact).is_err());
        assert!(upper_bounds(&Real::one(p()), 3, Window::Exact).is_err());
        assert!(upper_bounds(&t, 0, Window::Exact).is_err());
        assert!(upper_bounds(&t, MAX_HORIZON + 1, Window::Exact).is_err());
    }

    #[test]
    fn upper_bound_minima_are_consistent() {
        let seq = upper_bounds(&Real::inv_e(p()), 20, Window::Exact).unwrap();
        assert_eq!(seq.status, BoundStatus::FailedAt(11));
        assert_eq!(seq.recomputed_minima(), seq.beta);
        assert!(seq.beta.windows(2).all(|w| w[0] <= w[1]));
        // b_8 < b_7 is the first lowering step
        assert!(!seq.lowered[6] && seq.lowered[7]);
    }

    #[test]
    fn lower_strategy_exact_consistency() {
        let theta = r("0.34");
        let s = lower_strategy(&theta, 12, Window::Exact).unwrap();
        assert_eq!(s.threshold(1).unwrap(), theta.one_minus());
        for n in 1..=12 {
            let w = win_prob_exact(&s, n).unwrap();
            assert!(close(&w, &theta, 1e-25), "n = {n}: {w}");
        }
    }

    #[test]
    fn lower_strategy_rejects_infeasible_theta() {
        let theta = r("0.5");
        let err = lower_strategy(&theta, 5, Window::Exact).unwrap_err();
        assert_eq!(err, Error::MonotonicityViolation { n: 3 });
    }

    #[test]
    fn windowed_lower_bound_with_full_window_is_exact() {
        // With N = n - 2 the correction sum is empty and the truncated sum is
        // the exact decomposition of P_{n-1} by the count above a_1.
        let odds = ThresholdStrategy::odds(p(), 12);
        for n in 3..=12 {
            let lb = lower_bound_winprob(&odds, n, n - 2).unwrap();
            let ex = win_prob_exact(&odds, n).unwrap();
            assert!(close(&lb, &ex, 1e-30), "n = {n}: {lb} vs {ex}");
        }
        assert!(lower_bound_winprob(&odds, 5, 4).is_err());
    }

    #[test]
    fn windowed_lower_bound_is_below_exact() {
        let odds = ThresholdStrategy::odds(p(), 30);
        let lb = lower_bound_winprob(&odds, 30, 24).unwrap();
        let ex = win_prob_exact(&odds, 30).unwrap();
        assert!(lb <= ex, "{lb} > {ex}");
        let lb = lower_bound_winprob(&odds, 30, 5).unwrap();
        assert!(lb <= ex, "{lb} > {ex}");
    }

    #[test]
    fn corrections_match_direct_sum() {
        let odds = ThresholdStrategy::odds(p(), 40);
        let a = odds.thresholds(40).unwrap();
        let (n, w) = (40usize, 6usize);
        let fast = lower_corrections(p(), &a, n, w);
        let base = &a[n - w - 2];
        for (i, got) in fast.iter().enumerate() {
            let mut want = Real::zero(p());
            for k in (w + 2 - i)..=(n - 1 - i) {
                let ratio = (&a[n - i - k - 1] / base).one_minus();
                want += binomial(p(), (n - 1 - i) as u64, k as u64).unwrap()
                    * ratio.powu(k as u32);
            }
            assert!(close(got, &want, 1e-30), "i = {i}: {got} vs {want}");
        }
    }

    #[test]
    fn restricted_small_values() {
        let tol = Real::from_u64(p(), 10).powi(-20);
        assert_eq!(theta_restricted(1, &tol).unwrap(), Real::one(p()));
        // a_2 = 0 wins iff the first of two arrivals is rejected:
        // 1 - theta^2 = theta
        let t2 = theta_restricted(2, &tol).unwrap();
        let golden = (Real::from_u64(p(), 5).sqrt() - Real::one(p())).div_u(2);
        assert!(close(&t2, &golden, 1e-21), "{t2}");
        assert!(theta_restricted(0, &tol).is_err());
        assert!(theta_restricted(61, &tol).is_err());
    }

    #[test]
    fn general_win_prob() {
        let odds = ThresholdStrategy::odds(p(), 12);
        for n in 1..=12 {
            let a = win_prob(&odds, n).unwrap();
            let b = win_prob_exact(&odds, n).unwrap();
            assert!(close(&a, &b, 1e-33), "n = {n}");
        }
        // P(min < 0.5) - P(max < 0.3) for two arrivals
        let bad = ThresholdStrategy::new(vec![r("0.5"), r("0.3")], TailRule::None).unwrap();
        assert!(close(&win_prob(&bad, 2).unwrap(), &r("0.66"), 1e-34));
    }

    #[test]
    fn canonical_matches_lower_recursion_while_monotone() {
        let theta = r("0.34");
        let mut canon = CanonicalRecursion::new(&theta);
        let mut lower = LowerRecursion::new(&theta, Window::Exact).unwrap();
        for _ in 0..10 {
            let a = canon.step().unwrap().clone();
            let b = lower.step().unwrap();
            assert!(close(&a, b, 1e-28), "{a} vs {b}");
        }
    }

    #[test]
    fn canonical_past_a_decrease() {
        // at 1/e the thresholds dip from n = 8 on and run out at n = 10
        let theta = Real::inv_e(p());
        let mut canon = CanonicalRecursion::new(&theta);
        for _ in 0..9 {
            canon.step().unwrap();
        }
        assert!(matches!(canon.step(), Err(Error::NoSolution(_))));
        let a = canon.thresholds().to_vec();
        assert!(a[8] < a[7]);
        let s = ThresholdStrategy::new(a, TailRule::None).unwrap();
        for n in 1..=9 {
            assert!(close(&win_prob(&s, n).unwrap(), &theta, 1e-28), "n = {n}");
        }
    }
}
