//! Symmetric thick Cantor sets built from an analytic gap sequence.
//!
//! Step `i` removes a concentric open gap of length `a_i / 2^{i-1}` from each
//! of the `2^{i-1}` intervals left after step `i - 1`, so step `i` removes
//! total length `a_i`. After `k` steps every remaining (cover) interval has
//! length `ℓ_k = (|base| - Σ_{j≤k} a_j) / 2^k`.
//!
//! Nothing but `(base, rule, depth)` is stored: all endpoints are recomputed
//! by the same cumulative sums, so a reloaded set is bit-identical.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `π² / 6`.
pub const ZETA2: f64 = std::f64::consts::PI * std::f64::consts::PI / 6.0;

fn inverse_square_partial(n: usize) -> f64 {
    // summed smallest-first for accuracy
    (1..=n).rev().map(|i| 1.0 / (i as f64 * i as f64)).sum()
}

/// `Σ_{i>n} 1/i²`.
fn inverse_square_tail(n: usize) -> f64 {
    if n == 0 {
        return ZETA2;
    }
    // direct difference is accurate to ~1e-16 absolute, ample for our scales
    ZETA2 - inverse_square_partial(n)
}

/// The analytic gap-length sequence `a_i`, `i ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapRule {
    /// `a_i = scale / i²`.
    InverseSquare { scale: f64 },
    /// `a_1 = first` and `a_i = b / i²` for `i ≥ 2`.
    ForcedFirst { first: f64, b: f64 },
}

impl GapRule {
    pub fn a(&self, i: usize) -> f64 {
        assert!(i >= 1, "gap steps are numbered from 1");
        let i2 = (i * i) as f64;
        match *self {
            GapRule::InverseSquare { scale } => scale / i2,
            GapRule::ForcedFirst { first, b } => {
                if i == 1 {
                    first
                } else {
                    b / i2
                }
            }
        }
    }

    /// `Σ_{i≤n} a_i` in closed form.
    pub fn partial_sum(&self, n: usize) -> f64 {
        match *self {
            GapRule::InverseSquare { scale } => scale * inverse_square_partial(n),
            GapRule::ForcedFirst { first, b } => {
                if n == 0 {
                    0.0
                } else {
                    first + b * (inverse_square_partial(n) - 1.0)
                }
            }
        }
    }

    /// `Σ_{i>n} a_i` in closed form.
    pub fn tail(&self, n: usize) -> f64 {
        match *self {
            GapRule::InverseSquare { scale } => scale * inverse_square_tail(n),
            GapRule::ForcedFirst { first, b } => {
                if n == 0 {
                    first + b * (ZETA2 - 1.0)
                } else {
                    b * inverse_square_tail(n)
                }
            }
        }
    }

    pub fn total(&self) -> f64 {
        self.tail(0)
    }

    fn is_degenerate(&self) -> bool {
        matches!(*self, GapRule::InverseSquare { scale } if scale == 0.0)
    }

    fn validate(&self, length: f64, depth: usize) -> Result<()> {
        let params_ok = match *self {
            GapRule::InverseSquare { scale } => scale >= 0.0 && scale.is_finite(),
            GapRule::ForcedFirst { first, b } => first > 0.0 && b > 0.0 && first.is_finite() && b.is_finite(),
        };
        if !params_ok {
            return Err(Error::InvalidParameter(format!("gap rule parameters must be non-negative and finite: {self:?}")));
        }
        let sum = self.total();
        if !(sum < length) {
            return Err(Error::GapSumTooLarge { sum, length });
        }
        if !self.is_degenerate() {
            for step in 1..=depth.max(2) {
                if !(self.a(step) > self.a(step + 1)) {
                    return Err(Error::GapRuleNotDecreasing { step });
                }
            }
        }
        Ok(())
    }
}

/// Three-valued membership answer at finite depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    /// Exactly in the set (a realized endpoint).
    In,
    /// Interior of the gap `index` (left to right, from 0) removed at `step`.
    InGap { step: usize, index: u64 },
    /// In a depth-`D` cover interval, status below depth `D` unknown.
    Unresolved,
}

/// A finite 0/1 word, most significant (outermost) letter first.
pub type Word = Vec<u8>;

/// Bits of a word packed into an integer, first letter most significant.
pub fn word_index(w: &[u8]) -> u64 {
    w.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
}

/// All 0/1 words of length `len`, in lexicographic order.
pub fn words_of_length(len: usize) -> Vec<Word> {
    (0..1u64 << len)
        .map(|k| (0..len).map(|j| ((k >> (len - 1 - j)) & 1) as u8).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "CantorData", into = "CantorData")]
pub struct CantorSet {
    pub base: (f64, f64),
    pub rule: GapRule,
    pub depth: usize,
    /// `ℓ_k`, `k = 0..=depth`.
    cover_len: Vec<f64>,
    /// Individual gap length at step `k` (index 0 unused).
    gap_len: Vec<f64>,
    /// Offset of the right child inside a level-(k-1) interval: `ℓ_k + g_k`.
    shift: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CantorData {
    base: (f64, f64),
    rule: GapRule,
    depth: usize,
}

impl From<CantorData> for CantorSet {
    fn from(s: CantorData) -> Self {
        CantorSet::realize(s.base, s.rule, s.depth)
    }
}

impl From<CantorSet> for CantorData {
    fn from(c: CantorSet) -> Self {
        CantorData {
            base: c.base,
            rule: c.rule,
            depth: c.depth,
        }
    }
}

/// Build a Cantor set on `base` realized to `depth` steps.
pub fn build_cantor(base: (f64, f64), rule: GapRule, depth: usize) -> Result<CantorSet> {
    if depth < 1 {
        return Err(Error::InvalidParameter("Cantor depth must be at least 1".into()));
    }
    if depth > 40 {
        return Err(Error::InvalidParameter(format!("Cantor depth {depth} exceeds the supported 40")));
    }
    let length = base.1 - base.0;
    if !(length > 0.0) {
        return Err(Error::InvalidParameter(format!("empty base interval {base:?}")));
    }
    rule.validate(length, depth)?;
    Ok(CantorSet::realize(base, rule, depth))
}

impl CantorSet {
    fn realize(base: (f64, f64), rule: GapRule, depth: usize) -> Self {
        let length = base.1 - base.0;
        let mut cover_len = Vec::with_capacity(depth + 1);
        let mut gap_len = vec![0.0];
        let mut shift = vec![0.0];
        cover_len.push(length);
        for k in 1..=depth {
            let scale = (1u64 << (k - 1)) as f64;
            let g = rule.a(k) / scale;
            // ℓ_k from the closed-form partial sum rather than by repeated halving
            let l = (length - rule.partial_sum(k)) / (2.0 * scale);
            cover_len.push(l);
            gap_len.push(g);
            shift.push(l + g);
        }
        Self {
            base,
            rule,
            depth,
            cover_len,
            gap_len,
            shift,
        }
    }

    pub fn length(&self) -> f64 {
        self.base.1 - self.base.0
    }

    /// Length of each level-`k` cover interval.
    pub fn cover_len(&self, k: usize) -> f64 {
        self.cover_len[k]
    }

    /// Offset of the right child inside a level-`(k-1)` interval, `ℓ_k + g_k`.
    pub fn shift(&self, k: usize) -> f64 {
        self.shift[k]
    }

    /// Length of each gap removed at step `k`.
    pub fn gap_len(&self, k: usize) -> f64 {
        self.gap_len[k]
    }

    /// Left endpoint of the level-`|w|` cover interval `I_w`.
    pub fn cover_left(&self, w: &[u8]) -> f64 {
        let mut left = self.base.0;
        for (j, &bit) in w.iter().enumerate() {
            if bit != 0 {
                left += self.shift[j + 1];
            }
        }
        left
    }

    /// Gap number `index` removed at `step` (step ≥ 1), as an open interval.
    pub fn gap(&self, step: usize, index: u64) -> (f64, f64) {
        let k = step - 1;
        let w: Word = (0..k).map(|j| ((index >> (k - 1 - j)) & 1) as u8).collect();
        let lo = self.cover_left(&w) + self.cover_len[step];
        let hi = self.cover_left(&w) + self.shift[step];
        (lo, hi)
    }

    /// All realized gaps, step by step, left to right.
    pub fn gaps(&self) -> Vec<Vec<(f64, f64)>> {
        (1..=self.depth)
            .map(|step| (0..1u64 << (step - 1)).map(|i| self.gap(step, i)).collect())
            .collect()
    }

    /// Realized endpoints: both endpoints of every realized gap plus the base.
    pub fn endpoints(&self) -> Vec<f64> {
        let mut out = vec![self.base.0, self.base.1];
        for row in self.gaps() {
            for (lo, hi) in row {
                out.push(lo);
                out.push(hi);
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    /// Lower and upper bounds on the Lebesgue measure of the limit set.
    pub fn measure_bounds(&self) -> (f64, f64) {
        let upper = self.length() - self.rule.partial_sum(self.depth);
        let lower = upper - self.rule.tail(self.depth);
        (lower, upper)
    }

    /// Convex hull of the cylinder `I_w`.
    pub fn cylinder(&self, w: &[u8]) -> Result<(f64, f64)> {
        if w.len() > self.depth {
            return Err(Error::WordTooLong {
                len: w.len(),
                depth: self.depth,
            });
        }
        let lo = self.cover_left(w);
        Ok((lo, lo + self.cover_len[w.len()]))
    }

    /// Length of the depth-`D` cover inside `[lo, hi]`, by walking the gap
    /// tree (an upper bound for the measure of the set there).
    pub fn cover_measure_in(&self, lo: f64, hi: f64) -> f64 {
        self.cover_measure_rec(self.base.0, 0, lo, hi)
    }

    fn cover_measure_rec(&self, left: f64, level: usize, lo: f64, hi: f64) -> f64 {
        let right = left + self.cover_len[level];
        if right <= lo || left >= hi {
            return 0.0;
        }
        if lo <= left && right <= hi {
            // a fully contained node: sum its leaves explicitly
            return self.cover_len[self.depth] * (1u64 << (self.depth - level)) as f64;
        }
        if level == self.depth {
            return right.min(hi) - left.max(lo);
        }
        self.cover_measure_rec(left, level + 1, lo, hi)
            + self.cover_measure_rec(left + self.shift[level + 1], level + 1, lo, hi)
    }

    /// Three-valued membership of `x` at the realized depth.
    pub fn membership(&self, x: f64) -> Result<Membership> {
        let (a, b) = self.base;
        if !(a <= x && x <= b) {
            return Err(Error::OutOfDomain { x, lo: a, hi: b });
        }
        if x == a || x == b {
            return Ok(Membership::In);
        }
        let mut left = a;
        let mut index = 0u64;
        for step in 1..=self.depth {
            let gl = left + self.cover_len[step];
            let gr = left + self.shift[step];
            if x > gl && x < gr {
                return Ok(Membership::InGap { step, index });
            }
            if x == gl || x == gr {
                return Ok(Membership::In);
            }
            index <<= 1;
            if x > gr {
                left = gr;
                index |= 1;
            }
        }
        Ok(Membership::Unresolved)
    }

    /// Address of `x`: the word `w` with `|w| = len` and `x ∈ I_w`, or `None`
    /// if `x` lies in a gap of step ≤ `len` or outside the base.
    pub fn address(&self, x: f64, len: usize) -> Option<Word> {
        let (a, b) = self.base;
        if !(a <= x && x <= b) || len > self.depth {
            return None;
        }
        let mut left = a;
        let mut w = Vec::with_capacity(len);
        for step in 1..=len {
            let gl = left + self.cover_len[step];
            let gr = left + self.shift[step];
            if x <= gl {
                w.push(0);
            } else if x >= gr {
                w.push(1);
                left = gr;
            } else {
                return None;
            }
        }
        Some(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_rule() -> GapRule {
        GapRule::InverseSquare { scale: 0.5 }
    }

    #[test]
    fn first_and_second_step_gaps() {
        let c = build_cantor((0.0, 1.0), half_rule(), 2).unwrap();
        let g = c.gap(1, 0);
        assert!((g.0 - 0.25).abs() < 1e-15 && (g.1 - 0.75).abs() < 1e-15);
        for i in 0..2 {
            let (lo, hi) = c.gap(2, i);
            assert!((hi - lo - 0.0625).abs() < 1e-15);
        }
    }

    #[test]
    fn limit_measure_and_bounds() {
        let c = build_cantor((0.0, 1.0), half_rule(), 12).unwrap();
        let (lo, up) = c.measure_bounds();
        let limit = 1.0 - 0.5 * ZETA2;
        assert!((limit - 0.177_533_0).abs() < 1e-6);
        assert!(lo <= limit + 1e-15 && limit <= up);
        let partial: f64 = (1..=12).map(|i| 1.0 / (i * i) as f64).sum();
        assert!((up - lo - 0.5 * (ZETA2 - partial)).abs() < 1e-14);
        assert!((up - lo - 0.03996).abs() < 5e-5);
        assert!(lo > 0.0);

        let empty = build_cantor((0.0, 1.0), GapRule::InverseSquare { scale: 0.0 }, 5).unwrap();
        assert_eq!(empty.measure_bounds(), (1.0, 1.0));
    }

    #[test]
    fn removed_length_per_step() {
        let c = build_cantor((0.0, 2.0), half_rule(), 10).unwrap();
        let mut total = 0.0;
        for (k, row) in c.gaps().iter().enumerate() {
            let step_sum: f64 = row.iter().map(|(lo, hi)| hi - lo).sum();
            assert!((step_sum - c.rule.a(k + 1)).abs() < 1e-12);
            total += step_sum;
        }
        assert!((total - c.rule.partial_sum(10)).abs() < 1e-12);
    }

    #[test]
    fn gaps_are_disjoint_and_inside() {
        let c = build_cantor((0.0, 1.0), half_rule(), 9).unwrap();
        let mut all: Vec<(f64, f64)> = c.gaps().into_iter().flatten().collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(all[0].0 > 0.0 && all.last().unwrap().1 < 1.0);
        for pair in all.windows(2) {
            assert!(pair[0].1 < pair[1].0);
        }
    }

    #[test]
    fn rejects_bad_rules() {
        match build_cantor((0.0, 1.0), GapRule::InverseSquare { scale: 0.7 }, 5) {
            Err(Error::GapSumTooLarge { sum, .. }) => assert!((sum - 0.7 * ZETA2).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        let not_decreasing = GapRule::ForcedFirst { first: 0.01, b: 0.1 };
        assert!(matches!(
            build_cantor((0.0, 1.0), not_decreasing, 5),
            Err(Error::GapRuleNotDecreasing { step: 1 })
        ));
        assert!(build_cantor((0.0, 1.0), half_rule(), 0).is_err());
    }

    #[test]
    fn membership_examples() {
        let c1 = build_cantor((0.0, 1.0), half_rule(), 1).unwrap();
        assert_eq!(c1.membership(0.5).unwrap(), Membership::InGap { step: 1, index: 0 });
        assert_eq!(c1.membership(0.25).unwrap(), Membership::In);
        assert_eq!(c1.membership(0.1).unwrap(), Membership::Unresolved);
        assert!(c1.membership(1.5).is_err());

        let c = build_cantor((0.0, 1.0), half_rule(), 6).unwrap();
        for (step, row) in c.gaps().iter().enumerate() {
            for (i, &(lo, hi)) in row.iter().enumerate() {
                assert_eq!(
                    c.membership(0.5 * (lo + hi)).unwrap(),
                    Membership::InGap { step: step + 1, index: i as u64 }
                );
                assert_eq!(c.membership(lo).unwrap(), Membership::In);
                assert_eq!(c.membership(hi).unwrap(), Membership::In);
            }
        }
    }

    #[test]
    fn cylinders() {
        let c = build_cantor((0.0, 1.0), half_rule(), 8).unwrap();
        assert_eq!(c.cylinder(&[]).unwrap(), (0.0, 1.0));
        let i0 = c.cylinder(&[0]).unwrap();
        let i1 = c.cylinder(&[1]).unwrap();
        let g = c.gap(1, 0);
        assert_eq!(i0.1, g.0);
        assert_eq!(i1.0, g.1);
        let total = c.cover_measure_in(0.0, 1.0);
        for w in words_of_length(3) {
            let (lo, hi) = c.cylinder(&w).unwrap();
            let rel = c.cover_measure_in(lo, hi) / total;
            assert!((rel - 0.125).abs() < 1e-12);
            assert_eq!(c.address(0.5 * (lo + hi), 3).unwrap(), w);
        }
        assert!(c.cylinder(&[0; 9]).is_err());
    }

    #[test]
    fn forced_first_rule() {
        let rule = GapRule::ForcedFirst { first: 0.8, b: 0.05 };
        let c = build_cantor((0.0, 1.0), rule, 12).unwrap();
        assert!((c.gap_len(1) - 0.8).abs() < 1e-15);
        assert!((rule.partial_sum(3) - (0.8 + 0.05 / 4.0 + 0.05 / 9.0)).abs() < 1e-15);
        assert!((rule.partial_sum(12) + rule.tail(12) - rule.total()).abs() < 1e-15);
        assert!(c.measure_bounds().0 > 0.0);
    }
}
