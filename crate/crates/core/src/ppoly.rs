//! The staircase polynomials `P_n`.
//!
//! `P_n(x_1, ..., x_n)` sums `x_{f(1)} ... x_{f(n)}` over all maps
//! `f: [n] -> [n]` with `|f^{-1}([i])| >= i` for every `i`. When the `x_i` are
//! lengths of consecutive subintervals of `[0, 1]` starting at 0, `P_n` is the
//! probability that, of `n` independent uniform points, at least `i` fall in
//! the first `i` subintervals for every `i`.
//!
//! Two routes are provided. [`build_symbolic`] expands the monomials (only
//! feasible for small `n`, the term count being Catalan). [`eval_prefix`]
//! evaluates all prefixes `P_0..P_n` numerically in `O(n^2)` by conditioning
//! on the first violated index of the staircase.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::numerics::{Precision, Real};

/// Largest arity accepted by [`build_symbolic`].
pub const SYMBOLIC_MAX_N: usize = 12;

/// Largest arity accepted by [`eval_prefix`].
pub const PREFIX_MAX_N: usize = 5000;

/// Slack, as a power of ten, on the `x_1 + ... + x_n <= 1` check.
pub const CUMULATIVE_SLACK_EXP10: i32 = -25;

/// A monomial of `P_n`: exponents of `x_1..x_n` and a positive coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Term {
    pub exponents: Vec<u32>,
    pub coefficient: u64,
}

/// Fully expanded `P_n`, terms sorted lexicographically descending by exponent
/// vector (so `x_1^n` comes first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SymbolicPoly {
    pub n: usize,
    pub terms: Vec<Term>,
}

impl SymbolicPoly {
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient_sum(&self) -> u64 {
        self.terms.iter().map(|t| t.coefficient).sum()
    }

    /// Coefficient of the monomial with the given exponents, 0 if absent.
    pub fn coefficient(&self, exponents: &[u32]) -> u64 {
        self.terms
            .iter()
            .find(|t| t.exponents == exponents)
            .map_or(0, |t| t.coefficient)
    }
}

type Monomials = BTreeMap<Vec<u32>, u64>;

/// Expands `P_n` by the substitution recursion
///
/// `P_n = sum_{i=0}^{n-1} C(n, n-i) x_1^{n-i} P_i(x_2 + ... + x_{n-i+1}, x_{n-i+2}, ..., x_n)`
///
/// where the first variable of `P_i` is replaced by a sum of `n - i`
/// variables and the remaining ones are shifted.
pub fn build_symbolic(n: usize) -> Result<SymbolicPoly> {
    if n == 0 || n > SYMBOLIC_MAX_N {
        if n == 0 {
            return domain("build_symbolic: n must be at least 1");
        }
        return Err(Error::Capacity(format!(
            "build_symbolic({n}): the term count is Catalan(n); only n <= {SYMBOLIC_MAX_N} is supported"
        )));
    }
    let mut polys: Vec<Monomials> = Vec::with_capacity(n + 1);
    polys.push(BTreeMap::from([(Vec::new(), 1u64)]));
    for m in 1..=n {
        let mut out = Monomials::new();
        #[allow(clippy::needless_range_loop)]
        for i in 0..m {
            let lead = (m - i) as u32;
            let scale = binomial_u64(m as u64, lead as u64);
            let spread = m - i; // x_1 of P_i becomes x_2 + ... + x_{spread+1}
            for (exps, coeff) in &polys[i] {
                let mut base = vec![0u32; m];
                base[0] = lead;
                // x_j -> x_{j + m - i} for j >= 2 (0-based: j -> j + spread)
                for (j, &e) in exps.iter().enumerate().skip(1) {
                    base[j + spread] = e;
                }
                if i == 0 {
                    *out.entry(base).or_insert(0) += scale * coeff;
                    continue;
                }
                let first = exps[0];
                for_each_composition(first, spread, |parts, multinomial| {
                    let mut key = base.clone();
                    for (slot, &p) in parts.iter().enumerate() {
                        key[1 + slot] += p;
                    }
                    *out.entry(key).or_insert(0) += scale * coeff * multinomial;
                });
            }
        }
        polys.push(out);
    }
    let mut terms: Vec<Term> = polys
        .pop()
        .unwrap()
        .into_iter()
        .map(|(exponents, coefficient)| Term { exponents, coefficient })
        .collect();
    terms.sort_by(|a, b| b.exponents.cmp(&a.exponents));
    Ok(SymbolicPoly { n, terms })
}

/// Calls `f(parts, multinomial)` for every way to write `total` as an ordered
/// sum of `slots` non-negative parts; `multinomial` is `total! / prod parts!`.
fn for_each_composition<F: FnMut(&[u32], u64)>(total: u32, slots: usize, mut f: F) {
    fn rec<F: FnMut(&[u32], u64)>(
        remaining: u32,
        slot: usize,
        parts: &mut Vec<u32>,
        coeff: u64,
        f: &mut F,
    ) {
        if slot + 1 == parts.len() {
            parts[slot] = remaining;
            f(parts, coeff);
            return;
        }
        for p in 0..=remaining {
            parts[slot] = p;
            rec(remaining - p, slot + 1, parts, coeff * binomial_u64(remaining as u64, p as u64), f);
        }
    }
    let mut parts = vec![0u32; slots];
    rec(total, 0, &mut parts, 1, &mut f);
}

fn binomial_u64(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (1..=k).fold(1u64, |acc, j| acc * (n - k + j) / j)
}

/// Direct monomial summation, in stored term order.
pub fn eval_symbolic(p: &SymbolicPoly, x: &[Real]) -> Result<Real> {
    if x.len() != p.n {
        return domain(format!(
            "eval_symbolic: P_{} takes {} arguments, got {}",
            p.n,
            p.n,
            x.len()
        ));
    }
    let prec = x.first().map_or_else(Precision::default, Real::precision);
    let mut sum = Real::zero(prec);
    for term in &p.terms {
        let mut prod = Real::from_u64(prec, term.coefficient);
        for (xi, &e) in x.iter().zip(&term.exponents) {
            if e > 0 {
                prod *= xi.powu(e);
            }
        }
        sum += prod;
    }
    Ok(sum)
}

/// `P_0..P_n` evaluated on the prefixes of one input sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixEvaluation {
    inputs: Vec<Real>,
    values: Vec<Real>,
}

impl PrefixEvaluation {
    pub fn n(&self) -> usize {
        self.inputs.len()
    }

    pub fn inputs(&self) -> &[Real] {
        &self.inputs
    }

    /// `values()[k] = P_k(x_1..x_k)`; `values()[0] = 1`.
    pub fn values(&self) -> &[Real] {
        &self.values
    }

    pub fn get(&self, k: usize) -> &Real {
        &self.values[k]
    }

    /// `P_n` of the full input.
    pub fn last(&self) -> &Real {
        self.values.last().unwrap()
    }
}

/// Evaluates `P_k(x_1..x_k)` for every `k <= x.len()`.
///
/// Requires `x_i >= 0` and `x_1 + ... + x_n <= 1` (up to a `1e-25` slack).
pub fn eval_prefix(x: &[Real]) -> Result<PrefixEvaluation> {
    check_inputs(x, true)?;
    Ok(prefix_unchecked(x))
}

/// [`eval_prefix`] without the `x_1 + ... + x_n <= 1` precondition: the
/// recursion is a polynomial identity and holds for any non-negative input,
/// even though the probability reading does not.
pub fn eval_prefix_identity(x: &[Real]) -> Result<PrefixEvaluation> {
    check_inputs(x, false)?;
    Ok(prefix_unchecked(x))
}

fn check_inputs(x: &[Real], bounded: bool) -> Result<()> {
    if x.len() > PREFIX_MAX_N {
        return domain(format!(
            "eval_prefix: n = {} exceeds the supported {PREFIX_MAX_N}",
            x.len()
        ));
    }
    let Some(first) = x.first() else {
        return Ok(());
    };
    let prec = first.precision();
    let mut total = Real::zero(prec);
    for (i, xi) in x.iter().enumerate() {
        if xi.is_negative() || !xi.is_finite() {
            return domain(format!("eval_prefix: x_{} = {xi} is not a non-negative length", i + 1));
        }
        total += xi;
    }
    if bounded {
        let limit = Real::one(prec) + Real::from_u64(prec, 10).powi(CUMULATIVE_SLACK_EXP10);
        if total > limit {
            return domain(format!("eval_prefix: x_1 + ... + x_n = {total} exceeds 1"));
        }
    }
    Ok(())
}

fn prefix_unchecked(x: &[Real]) -> PrefixEvaluation {
    let prec = x.first().map_or_else(Precision::default, Real::precision);
    let mut cumulative = Vec::with_capacity(x.len());
    let mut acc = Real::zero(prec);
    for xi in x {
        acc += xi;
        cumulative.push(acc.clone());
    }
    let values = staircase_prefix(prec, &cumulative);
    PrefixEvaluation { inputs: x.to_vec(), values }
}

/// `P_k` on cumulative coordinates: returns `[P_0, ..., P_n]` where `P_k` is
/// evaluated at `(c_1, c_2 - c_1, ..., c_k - c_{k-1})`. The `c_i` must be
/// non-decreasing and non-negative.
///
/// By homogeneity the staircase is first rescaled so that `c_n = 1`, which
/// keeps every intermediate a probability of moderate size; the recursion
///
/// `Q_k = 1 - sum_{i=1}^{k} C(k, i-1) (1 - c_i)^{k-i+1} Q_{i-1}`
///
/// then runs on the rescaled staircase and `P_k = c_n^k Q_k`.
pub(crate) fn staircase_prefix(prec: Precision, cumulative: &[Real]) -> Vec<Real> {
    let n = cumulative.len();
    let mut out = Vec::with_capacity(n + 1);
    out.push(Real::one(prec));
    if n == 0 {
        return out;
    }
    let scale = cumulative[n - 1].clone();
    if !scale.is_positive() {
        out.extend((0..n).map(|_| Real::zero(prec)));
        return out;
    }
    // gaps[i] = 1 - c_{i+1}/c_n
    let gaps: Vec<Real> = cumulative.iter().map(|c| (c / &scale).one_minus()).collect();
    let q = staircase_normalized(prec, &gaps);
    let mut power = Real::one(prec);
    for qk in q.into_iter().skip(1) {
        power *= &scale;
        out.push(qk * &power);
    }
    out
}

/// `P_n` alone on cumulative coordinates.
pub(crate) fn staircase_top(prec: Precision, cumulative: &[Real]) -> Real {
    staircase_prefix(prec, cumulative).pop().unwrap()
}

/// The first-violation recursion for `Q_0..Q_n` given `gaps[i] = 1 - c_{i+1}`.
fn staircase_normalized(prec: Precision, gaps: &[Real]) -> Vec<Real> {
    let n = gaps.len();
    let mut q = Vec::with_capacity(n + 1);
    q.push(Real::one(prec));
    // powers[i] holds gaps[i]^(k - i) for the current k.
    let mut powers: Vec<Real> = Vec::with_capacity(n);
    // binom[j] = C(k, j) for the current k.
    let mut binom: Vec<Real> = vec![Real::one(prec)];
    for k in 1..=n {
        // Pascal step C(k-1, .) -> C(k, .)
        let mut next = Vec::with_capacity(k + 1);
        next.push(Real::one(prec));
        for j in 1..k {
            next.push(&binom[j - 1] + &binom[j]);
        }
        next.push(Real::one(prec));
        binom = next;

        for (i, p) in powers.iter_mut().enumerate() {
            *p *= &gaps[i];
        }
        powers.push(gaps[k - 1].clone());

        let mut violated = Real::zero(prec);
        for i in 1..=k {
            violated += &binom[i - 1] * &powers[i - 1] * &q[i - 1];
        }
        q.push(violated.one_minus());
    }
    q
}
