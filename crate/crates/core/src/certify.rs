//! Certificates bracketing the value of the last-arrival game.
//!
//! An upper certificate at `theta` records an index `n` with `b_n < 0` in the
//! windowed upper-bound recursion: no strategy wins with probability `theta`
//! against every `n`. A lower certificate at `theta` records an explicit
//! strategy (recursion head, harmonic tail `a_n = 1 - 1/n` from `m`), a
//! finite verification that it wins with probability at least `theta` for
//! every `n <= verify_to`, and an analytic tail bound covering all larger `n`.
//!
//! All arithmetic is round-to-nearest at the working precision; the
//! certificates are numerical evidence, not outward-rounded proofs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numerics::{Precision, Real};
use crate::thresholds::{
    lower_bound_winprob, upper_bounds, win_prob_exact, LowerRecursion, TailRule,
    ThresholdStrategy, Window,
};

/// Default upper end of the finite verification.
pub const DEFAULT_VERIFY_TO: usize = 750;

/// Values at most this far below `theta` still pass finite verification:
/// for `n < m` the constructed strategy attains `theta` exactly, up to
/// rounding.
pub const VERIFY_SLACK_EXP10: i32 = -25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    Upper,
    Lower,
}

/// Win probability established for one `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedValue {
    pub n: usize,
    pub method: Method,
    pub value: Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    LowerBound,
}

/// Result of [`verify_finite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteReport {
    pub theta: Real,
    pub window: usize,
    pub up_to: usize,
    pub values: Vec<VerifiedValue>,
    pub min_value: Real,
    pub min_at: usize,
    pub first_failure: Option<usize>,
}

impl FiniteReport {
    pub fn passed(&self) -> bool {
        self.first_failure.is_none()
    }
}

/// One inequality checked by [`certify_tail`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCheck {
    pub name: String,
    pub lhs: Real,
    pub rhs: Real,
    pub holds: bool,
}

/// Result of [`certify_tail`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub m: usize,
    pub from_n: usize,
    /// Index at which the combined bound is evaluated (`from_n + 1`).
    pub n: usize,
    /// `(m-1) n^(m-2) / (m-2)! (1 - a_1)^(n-m+1)` at `n`.
    pub far_tail: Real,
    /// `e^(-1) (1 - (e+1)/(n-2) - far_tail)`.
    pub bound: Real,
    pub checks: Vec<TailCheck>,
}

impl TailReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Evidence {
    Upper {
        failure_index: usize,
        b_at_failure: Real,
        horizon: usize,
    },
    Lower {
        head: Vec<Real>,
        tail_start: usize,
        finite: FiniteReport,
        tail: TailReport,
    },
}

/// A re-checkable certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub theta: Real,
    pub window: usize,
    pub precision_bits: u32,
    pub evidence: Evidence,
}

/// A certificate, or the reason none could be produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Certified { certificate: Box<Certificate> },
    Inconclusive { theta: Real, reason: String },
}

impl Outcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Outcome::Certified { certificate } => Some(certificate),
            Outcome::Inconclusive { .. } => None,
        }
    }

    pub fn is_certified(&self) -> bool {
        self.certificate().is_some()
    }

    fn inconclusive(theta: &Real, reason: impl Into<String>) -> Self {
        Outcome::Inconclusive { theta: theta.clone(), reason: reason.into() }
    }
}

/// Runs the windowed upper-bound recursion; certified iff some `b_n < 0`
/// within `horizon`, which shows the game value is below `theta`.
pub fn certify_upper(theta: &Real, window: usize, horizon: usize) -> Result<Outcome> {
    let seq = upper_bounds(theta, horizon, Window::Truncated(window))?;
    Ok(match seq.failure_index() {
        Some(n) => Outcome::Certified {
            certificate: Box::new(Certificate {
                kind: CertificateKind::Upper,
                theta: theta.clone(),
                window,
                precision_bits: theta.precision().bits(),
                evidence: Evidence::Upper {
                    failure_index: n,
                    b_at_failure: seq.b[n - 1].clone(),
                    horizon,
                },
            }),
        },
        None => Outcome::inconclusive(theta, format!("no negative b_n for n <= {horizon}")),
    })
}

/// Runs the windowed lower recursion until the thresholds first climb back
/// above the harmonic line `1 - 1/n` (after having been at or below it), at
/// index `m`. Returns the recursion head `a_1..a_{m-1}` with the harmonic
/// tail from `m`.
pub fn construct_strategy(theta: &Real, window: usize, horizon: usize) -> Result<ThresholdStrategy> {
    let prec = theta.precision();
    let mut rec = LowerRecursion::new(theta, Window::Truncated(window))?;
    let mut below_seen = false;
    for n in 1..=horizon {
        let an = rec.step()?.clone();
        let line = Real::ratio(prec, 1, n as i64).one_minus();
        if an <= line {
            below_seen = true;
        } else if below_seen {
            let mut head = rec.thresholds().to_vec();
            head.pop();
            let splice = Real::ratio(prec, 1, n as i64).one_minus();
            if head.last().is_some_and(|last| last > &splice) {
                return Err(Error::Invariant(format!(
                    "splice at m = {n} is not monotone: a_(m-1) > 1 - 1/m"
                )));
            }
            return ThresholdStrategy::new(head, TailRule::Harmonic { start: n });
        }
    }
    Err(Error::Inconclusive(format!(
        "thresholds never crossed above 1 - 1/n within n <= {horizon}"
    )))
}

/// Checks that `s` wins with probability at least `theta` against every
/// `n <= up_to`: exactly for `n <= window + 1`, by the windowed lower bound
/// beyond.
pub fn verify_finite(
    s: &ThresholdStrategy,
    theta: &Real,
    window: usize,
    up_to: usize,
) -> Result<FiniteReport> {
    if window == 0 || up_to == 0 {
        return domain("verify_finite: window and up_to must be positive");
    }
    let prec = theta.precision();
    let s = s.with_precision(prec);
    let values: Vec<VerifiedValue> = (1..=up_to)
        .into_par_iter()
        .map(|n| {
            if n <= window + 1 {
                win_prob_exact(&s, n).map(|value| VerifiedValue { n, method: Method::Exact, value })
            } else {
                lower_bound_winprob(&s, n, window).map(|value| VerifiedValue {
                    n,
                    method: Method::LowerBound,
                    value,
                })
            }
        })
        .collect::<Result<_>>()?;
    let slack = Real::from_u64(prec, 10).powi(VERIFY_SLACK_EXP10);
    let floor = theta - &slack;
    let first_failure = values.iter().find(|v| v.value < floor).map(|v| v.n);
    let min = values
        .iter()
        .min_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    Ok(FiniteReport {
        theta: theta.clone(),
        window,
        up_to,
        min_value: min.value.clone(),
        min_at: min.n,
        first_failure,
        values,
    })
}

/// Analytic bound for all `n > from_n` on a strategy with harmonic tail
/// from `m` and first threshold `a1`.
///
/// Conditioning on exactly one item after `a_n` (probability at least
/// `1/e`), the failure probability splits into the harmonic part, bounded by
/// `(e+1)/(n-2)`, and the far part, bounded by
/// `F(n) = (m-1) n^(m-2) / (m-2)! (1-a1)^(n-m+1)`. The combined bound is
/// checked at `n = from_n + 1`; every monotonicity condition that extends it
/// to all larger `n` is checked too, and the pass verdict requires all of
/// them.
pub fn certify_tail(m: usize, a1: &Real, theta: &Real, from_n: usize) -> Result<TailReport> {
    let prec = theta.precision();
    if m < 3 {
        return domain(format!("certify_tail: m = {m} must be at least 3"));
    }
    if from_n < 2 * m {
        return domain(format!(
            "certify_tail: from_n >= 2m violated ({from_n} < {})",
            2 * m
        ));
    }
    if !a1.is_positive() || a1 >= &Real::one(prec) {
        return domain(format!("certify_tail: a1 = {a1} must lie in (0, 1)"));
    }
    let e = Real::e(prec);
    let m_real = Real::from_usize(prec, m);
    let log_e_over_m = (&e / &m_real).ln();
    if !log_e_over_m.is_negative() {
        return domain(format!("certify_tail: m = {m} must exceed e"));
    }
    let harmonic_window = Real::from_u64(prec, 2) / &(-&log_e_over_m);
    let from_real = Real::from_usize(prec, from_n);
    if &from_real - &Real::from_u64(prec, 2) < harmonic_window {
        return domain(format!(
            "certify_tail: n - 2 >= 2/(-log(e/m)) violated at n = {from_n}"
        ));
    }

    let a1 = a1.with_precision(prec);
    let q = a1.one_minus();
    let n = from_n + 1;
    let far_tail = far_tail_bound(prec, m, &q, n);
    let harmonic = (&e + &Real::one(prec)) / &Real::from_usize(prec, n - 2);
    let bound = (Real::one(prec) - &harmonic - &far_tail) / &e;

    let mut checks = Vec::new();
    let mut check = |name: &str, lhs: Real, rhs: Real, holds: bool| {
        checks.push(TailCheck { name: name.to_string(), lhs, rhs, holds });
    };

    // F(n+1)/F(n) = (1 + 1/n)^(m-2) (1 - a1) < 1 once n >= (m-2)/(-log(1-a1)).
    let decay_start = Real::from_usize(prec, m - 2) / &(-&q.ln());
    let ok = from_real >= decay_start;
    check("far tail decreasing: n >= (m-2)/(-log(1-a1))", from_real.clone(), decay_start, ok);

    // (n-2)^2 (e/m)^n decreasing from from_n on; with equality at n = m + 2
    // this keeps e^2/(n-2)^2 >= (e/m)^(n-m) for every larger n.
    let nm2 = Real::from_usize(prec, n - 2);
    let cond_lhs = (&e * &e) / &(&nm2 * &nm2);
    let cond_rhs = (&e / &m_real).powu((n - m) as u32);
    let ok = cond_lhs >= cond_rhs;
    check("convexity endpoint: e^2/(n-2)^2 >= (e/m)^(n-m)", cond_lhs, cond_rhs, ok);
    let at_m2 = {
        let lhs = (&e * &e) / &Real::from_usize(prec, m * m);
        let rhs = (&e / &m_real).powu(2);
        (&lhs - &rhs).abs() <= Real::from_u64(prec, 10).powi(-30) * &lhs
    };
    check(
        "convexity endpoint equality at n = m + 2",
        Real::from_usize(prec, m + 2),
        Real::from_usize(prec, m + 2),
        at_m2,
    );
    let ok = from_real > Real::from_u64(prec, 2);
    check("(e+1)/(n-2) decreasing: n > 2", from_real.clone(), Real::from_u64(prec, 2), ok);

    let ok = from_n + 3 >= 2 * m;
    check(
        "far-tail split: n >= 2m - 3",
        from_real,
        Real::from_usize(prec, 2 * m - 3),
        ok,
    );

    let ok = &bound > theta;
    check("combined bound exceeds theta", bound.clone(), theta.clone(), ok);

    Ok(TailReport { m, from_n, n, far_tail, bound, checks })
}

/// `(m-1) n^(m-2) / (m-2)! q^(n-m+1)`.
pub fn far_tail_bound(prec: Precision, m: usize, q: &Real, n: usize) -> Real {
    let mut factorial = Real::one(prec);
    for k in 2..=(m - 2) as u64 {
        factorial = factorial.mul_u(k);
    }
    let n_pow = Real::from_usize(prec, n).powu((m - 2) as u32);
    Real::from_usize(prec, m - 1) * n_pow / factorial * q.powu((n - m + 1) as u32)
}

/// Options for [`bracket`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BracketOptions {
    pub window: usize,
    /// Horizon of the upper recursion and of the lower construction.
    pub horizon: usize,
    pub verify_to: usize,
    /// Bisection steps between the two endpoints; 0 disables refinement.
    pub refine: usize,
}

impl Default for BracketOptions {
    fn default() -> Self {
        BracketOptions {
            window: crate::thresholds::DEFAULT_WINDOW,
            horizon: crate::thresholds::DEFAULT_HORIZON,
            verify_to: DEFAULT_VERIFY_TO,
            refine: 0,
        }
    }
}

/// Both sides of a bracket, plus the tightest certified pair if refinement
/// ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketReport {
    pub lower: Outcome,
    pub upper: Outcome,
    pub refined: Option<Box<(Certificate, Certificate)>>,
}

impl BracketReport {
    pub fn is_certified(&self) -> bool {
        self.lower.is_certified() && self.upper.is_certified()
    }

    /// Tightest certified `(lower theta, upper theta)`.
    pub fn best(&self) -> Option<(&Real, &Real)> {
        if let Some(pair) = &self.refined {
            return Some((&pair.0.theta, &pair.1.theta));
        }
        Some((&self.lower.certificate()?.theta, &self.upper.certificate()?.theta))
    }
}

/// Lower certificate at `theta`: construction, finite verification, tail.
pub fn certify_lower(theta: &Real, opts: &BracketOptions) -> Result<Outcome> {
    let strategy = match construct_strategy(theta, opts.window, opts.horizon) {
        Ok(s) => s,
        Err(e @ (Error::MonotonicityViolation { .. } | Error::Inconclusive(_))) => {
            return Ok(Outcome::inconclusive(theta, format!("construction failed: {e}")));
        }
        Err(e) => return Err(e),
    };
    let TailRule::Harmonic { start: m } = strategy.tail() else {
        return Err(Error::Invariant("constructed strategy lacks a harmonic tail".into()));
    };
    let finite = verify_finite(&strategy, theta, opts.window, opts.verify_to)?;
    if let Some(n) = finite.first_failure {
        return Ok(Outcome::inconclusive(
            theta,
            format!("finite verification fails at n = {n}"),
        ));
    }
    let a1 = strategy.threshold(1)?;
    let tail = match certify_tail(m, &a1, theta, opts.verify_to) {
        Ok(t) => t,
        Err(Error::Domain(msg)) => return Ok(Outcome::inconclusive(theta, msg)),
        Err(e) => return Err(e),
    };
    if !tail.passed() {
        return Ok(Outcome::inconclusive(theta, "tail bound does not exceed theta"));
    }
    Ok(Outcome::Certified {
        certificate: Box::new(Certificate {
            kind: CertificateKind::Lower,
            theta: theta.clone(),
            window: opts.window,
            precision_bits: theta.precision().bits(),
            evidence: Evidence::Lower {
                head: strategy.head().to_vec(),
                tail_start: m,
                finite,
                tail,
            },
        }),
    })
}

/// Lower certificate at `theta_lo`, upper certificate at `theta_hi`, and
/// optionally `opts.refine` bisection steps between them.
pub fn bracket(theta_lo: &Real, theta_hi: &Real, opts: &BracketOptions) -> Result<BracketReport> {
    if theta_lo >= theta_hi {
        return domain(format!("bracket: theta_lo = {theta_lo} must be below theta_hi = {theta_hi}"));
    }
    let lower = certify_lower(theta_lo, opts)?;
    let upper = certify_upper(theta_hi, opts.window, opts.horizon)?;
    let mut refined = None;
    if opts.refine > 0 {
        if let (Some(lo), Some(hi)) = (lower.certificate(), upper.certificate()) {
            let (mut lo, mut hi) = (lo.clone(), hi.clone());
            for _ in 0..opts.refine {
                let mid = (&lo.theta + &hi.theta).div_u(2);
                if let Outcome::Certified { certificate } =
                    certify_upper(&mid, opts.window, opts.horizon)?
                {
                    hi = *certificate;
                } else if let Outcome::Certified { certificate } = certify_lower(&mid, opts)? {
                    lo = *certificate;
                } else {
                    break;
                }
            }
            refined = Some(Box::new((lo, hi)));
        }
    }
    Ok(BracketReport { lower, upper, refined })
}

impl Certificate {
    fn precision(&self) -> Result<Precision> {
        Precision::new(self.precision_bits)
    }

    /// Recomputes the evidence from the stored theta, window and strategy
    /// head at the recorded precision; `Ok(())` iff it reproduces exactly.
    pub fn recheck(&self) -> Result<()> {
        let prec = self.precision()?;
        let theta = self.theta.with_precision(prec);
        match &self.evidence {
            Evidence::Upper { failure_index, b_at_failure, horizon } => {
                let seq = upper_bounds(&theta, *horizon, Window::Truncated(self.window))?;
                if seq.failure_index() != Some(*failure_index) {
                    return Err(Error::Invariant(format!(
                        "upper certificate: recomputed failure {:?}, recorded {failure_index}",
                        seq.failure_index()
                    )));
                }
                let b = &seq.b[failure_index - 1];
                if b.to_decimal() != b_at_failure.with_precision(prec).to_decimal() {
                    return Err(Error::Invariant("upper certificate: b_n differs".into()));
                }
            }
            Evidence::Lower { head, tail_start, finite, tail } => {
                let head = head.iter().map(|a| a.with_precision(prec)).collect();
                let s = ThresholdStrategy::new(head, TailRule::Harmonic { start: *tail_start })?;
                let again = verify_finite(&s, &theta, self.window, finite.up_to)?;
                if !again.passed() {
                    return Err(Error::Invariant(format!(
                        "lower certificate: verification fails at {:?}",
                        again.first_failure
                    )));
                }
                if again.min_at != finite.min_at
                    || again.min_value.to_decimal() != finite.min_value.with_precision(prec).to_decimal()
                {
                    return Err(Error::Invariant("lower certificate: minimum differs".into()));
                }
                let a1 = s.threshold(1)?;
                let t = certify_tail(*tail_start, &a1, &theta, tail.from_n)?;
                if !t.passed() || t.bound.to_decimal() != tail.bound.with_precision(prec).to_decimal()
                {
                    return Err(Error::Invariant("lower certificate: tail report differs".into()));
                }
            }
        }
        Ok(())
    }
}
