//! The one-dimensional Bowen expanding map of a symmetric Cantor set onto
//! itself, and its C¹ extension to a neighbourhood by an affine dilation.
//!
//! One half `I_h` of the realized Cantor cover is mapped onto the whole base:
//! the cover interval `I_{hw}` goes to `I_w`, the gap of step `n + 1` inside
//! `I_{hw}` goes to the gap of step `n` inside `I_w`, and each residual
//! depth-`D` interval goes onto its depth-`(D - 1)` image. Every such piece of
//! length `ℓ` onto length `ℓ'` uses the profile
//!
//! ```text
//! f'(s0 + uℓ) = 2 + κ · 6u(1 - u),   κ = ℓ'/ℓ - 2 ≥ 0,
//! ```
//!
//! so the derivative is exactly 2 at every realized endpoint from both sides
//! and at least 2 everywhere.

use serde::{Deserialize, Serialize};

use crate::cantor::CantorSet;
use crate::error::{Error, Result};
use crate::roots::solve_increasing;

/// Which half of the Cantor set is the source of the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    Left,
    Right,
}

impl Half {
    pub fn bit(self) -> u8 {
        match self {
            Half::Left => 0,
            Half::Right => 1,
        }
    }
}

/// One monotone piece `[s0, s1] → [t0, t1]` of the map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub s0: f64,
    pub s1: f64,
    pub t0: f64,
    pub t1: f64,
    /// Gap step of the source piece, or `None` for a residual cover interval.
    pub step: Option<usize>,
}

impl Piece {
    fn kappa(&self) -> f64 {
        (self.t1 - self.t0) / (self.s1 - self.s0) - 2.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x == self.s1 {
            return self.t1;
        }
        let len = self.s1 - self.s0;
        let u = (x - self.s0) / len;
        let excess = (self.t1 - self.t0) - 2.0 * len;
        self.t0 + 2.0 * (x - self.s0) + excess * u * u * (3.0 - 2.0 * u)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let u = (x - self.s0) / (self.s1 - self.s0);
        2.0 + self.kappa() * 6.0 * u * (1.0 - u)
    }

    pub fn max_deriv(&self) -> f64 {
        2.0 + 1.5 * self.kappa()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowenMap1D {
    pub cantor: CantorSet,
    pub half: Half,
}

/// Build the Bowen map from one half of `c` onto all of `c`.
pub fn build_bowen_map(c: &CantorSet, half: Half) -> Result<BowenMap1D> {
    if c.depth < 2 {
        return Err(Error::InvalidParameter(format!(
            "the Bowen map needs a Cantor set realized to depth ≥ 2, got {}",
            c.depth
        )));
    }
    Ok(BowenMap1D {
        cantor: c.clone(),
        half,
    })
}

impl BowenMap1D {
    pub fn source(&self) -> (f64, f64) {
        self.cantor.cylinder(&[self.half.bit()]).expect("depth ≥ 1")
    }

    pub fn target(&self) -> (f64, f64) {
        self.cantor.base
    }

    fn check_source(&self, x: f64) -> Result<()> {
        let (lo, hi) = self.source();
        if lo <= x && x <= hi {
            Ok(())
        } else {
            Err(Error::OutOfDomain { x, lo, hi })
        }
    }

    /// Residual depth-`D` piece starting at `left`; the outermost one is
    /// snapped to the exact ends of source and target.
    fn residual(&self, left: f64, tleft: f64) -> Piece {
        let c = &self.cantor;
        let (src, tgt) = (self.source(), self.target());
        let mut s1 = left + c.cover_len(c.depth);
        let mut t1 = tleft + c.cover_len(c.depth - 1);
        if (s1 - src.1).abs() <= 4.0 * f64::EPSILON * src.1.abs().max(1e-300) {
            s1 = src.1;
            t1 = tgt.1;
        }
        Piece {
            s0: left,
            s1,
            t0: tleft,
            t1,
            step: None,
        }
    }

    /// The piece containing source point `x` (which must lie in the source).
    pub fn piece_at(&self, x: f64) -> Piece {
        let c = &self.cantor;
        let depth = c.depth;
        let mut left = self.source().0;
        let mut tleft = c.base.0;
        for k in 1..depth {
            let gl = left + c.cover_len(k + 1);
            let gr = left + c.shift(k + 1);
            let tgl = tleft + c.cover_len(k);
            let tgr = tleft + c.shift(k);
            if x >= gl && x <= gr {
                return Piece {
                    s0: gl,
                    s1: gr,
                    t0: tgl,
                    t1: tgr,
                    step: Some(k + 1),
                };
            }
            if x > gr {
                left = gr;
                tleft = tgr;
            }
        }
        self.residual(left, tleft)
    }

    /// The piece whose image contains target point `y`.
    pub fn piece_onto(&self, y: f64) -> Piece {
        let c = &self.cantor;
        let depth = c.depth;
        let mut left = self.source().0;
        let mut tleft = c.base.0;
        for k in 1..depth {
            let gl = left + c.cover_len(k + 1);
            let gr = left + c.shift(k + 1);
            let tgl = tleft + c.cover_len(k);
            let tgr = tleft + c.shift(k);
            if y >= tgl && y <= tgr {
                return Piece {
                    s0: gl,
                    s1: gr,
                    t0: tgl,
                    t1: tgr,
                    step: Some(k + 1),
                };
            }
            if y > tgr {
                left = gr;
                tleft = tgr;
            }
        }
        self.residual(left, tleft)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.check_source(x)?;
        Ok(self.piece_at(x).eval(x))
    }

    pub fn deriv(&self, x: f64) -> Result<f64> {
        self.check_source(x)?;
        Ok(self.piece_at(x).deriv(x))
    }

    pub fn inverse(&self, y: f64) -> Result<f64> {
        let (lo, hi) = self.target();
        if !(lo <= y && y <= hi) {
            return Err(Error::OutOfDomain { x: y, lo, hi });
        }
        let p = self.piece_onto(y);
        if y == p.t0 {
            return Ok(p.s0);
        }
        if y == p.t1 {
            return Ok(p.s1);
        }
        solve_increasing(|x| p.eval(x), |x| p.deriv(x), p.s0, p.s1, y, 0.0)
    }

    /// Largest derivative of the map (attained at a gap midpoint).
    pub fn max_deriv(&self) -> f64 {
        let c = &self.cantor;
        let mut best = 2.0f64;
        for k in 1..c.depth {
            best = best.max(2.0 + 1.5 * (c.gap_len(k) / c.gap_len(k + 1) - 2.0));
        }
        best.max(2.0 + 1.5 * (c.cover_len(c.depth - 1) / c.cover_len(c.depth) - 2.0))
    }
}

/// Cubic Hermite junction `[y0, y1] → [v0, v1]` with end slopes `d0`, `d1`,
/// derivative `d0(1-s) + d1 s + β·6s(1-s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    pub y0: f64,
    pub y1: f64,
    pub v0: f64,
    pub v1: f64,
    pub d0: f64,
    pub d1: f64,
}

impl Junction {
    fn beta(&self) -> f64 {
        (self.v1 - self.v0) / (self.y1 - self.y0) - 0.5 * (self.d0 + self.d1)
    }

    pub fn eval(&self, y: f64) -> f64 {
        if y == self.y1 {
            return self.v1;
        }
        let tau = self.y1 - self.y0;
        let s = (y - self.y0) / tau;
        self.v0 + tau * (self.d0 * s + 0.5 * (self.d1 - self.d0) * s * s + self.beta() * s * s * (3.0 - 2.0 * s))
    }

    pub fn deriv(&self, y: f64) -> f64 {
        let s = (y - self.y0) / (self.y1 - self.y0);
        self.d0 * (1.0 - s) + self.d1 * s + self.beta() * 6.0 * s * (1.0 - s)
    }

    pub fn max_deriv(&self) -> f64 {
        // the derivative is a concave quadratic in s when β ≥ 0
        let b = self.beta();
        let a = -6.0 * b;
        let lin = self.d1 - self.d0 + 6.0 * b;
        let mut best = self.d0.max(self.d1);
        if a < 0.0 {
            let s = (-lin / (2.0 * a)).clamp(0.0, 1.0);
            best = best.max(self.d0 + lin * s + a * s * s);
        }
        best
    }

    fn inverse(&self, v: f64) -> Result<f64> {
        if v == self.v0 {
            return Ok(self.y0);
        }
        if v == self.v1 {
            return Ok(self.y1);
        }
        solve_increasing(|y| self.eval(y), |y| self.deriv(y), self.y0, self.y1, v, 0.0)
    }
}

/// The affine dilation `f_L(y) = fixed + λ (y - fixed)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dilation {
    pub fixed: f64,
    pub lambda: f64,
}

impl Dilation {
    pub fn eval(&self, y: f64) -> f64 {
        self.fixed + self.lambda * (y - self.fixed)
    }

    pub fn inverse(&self, v: f64) -> f64 {
        self.fixed + (v - self.fixed) / self.lambda
    }
}

/// The Bowen map extended C¹ to the whole line: `f_L` outside `RQ`, `f_L` on
/// a margin/4 collar inside `∂RQ`, Hermite junctions, and the Bowen map on
/// its source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedVerticalMap {
    pub core: BowenMap1D,
    pub linear: Dilation,
    pub lower: Junction,
    pub upper: Junction,
    /// `RQ = [source.0 - margin, source.1 + margin]`.
    pub rq: (f64, f64),
}

/// Fraction of the margin next to `∂RQ` on which the extension equals `f_L`.
pub const COLLAR_FRACTION: f64 = 0.25;

/// Extend `core` to `RQ = source ± margin`, matching `f_L` near `∂RQ`.
pub fn extend_to_rq(core: &BowenMap1D, linear: Dilation, margin: f64) -> Result<ExtendedVerticalMap> {
    if !(linear.lambda > 2.0) {
        return Err(Error::InvalidParameter(format!("f_L' = {} must exceed 2", linear.lambda)));
    }
    if !(margin > 0.0) {
        return Err(Error::MarginTooSmall {
            required: f64::MIN_POSITIVE,
            available: margin,
        });
    }
    let (s0, s1) = core.source();
    let (t0, t1) = core.target();
    let tau = margin * (1.0 - COLLAR_FRACTION);
    let lower_y0 = s0 - tau;
    let upper_y1 = s1 + tau;
    let lower = Junction {
        y0: lower_y0,
        y1: s0,
        v0: linear.eval(lower_y0),
        v1: t0,
        d0: linear.lambda,
        d1: 2.0,
    };
    let upper = Junction {
        y0: s1,
        y1: upper_y1,
        v0: t1,
        v1: linear.eval(upper_y1),
        d0: 2.0,
        d1: linear.lambda,
    };
    // a negative β would let the derivative dip below min(d0, d1)
    let lam = linear.lambda;
    let need_lower = 2.0 * (linear.eval(s0) - t0) / (lam - 2.0) / (1.0 - COLLAR_FRACTION);
    let need_upper = 2.0 * (t1 - linear.eval(s1)) / (lam - 2.0) / (1.0 - COLLAR_FRACTION);
    if lower.beta() < 0.0 || upper.beta() < 0.0 {
        return Err(Error::MarginTooSmall {
            required: need_lower.max(need_upper),
            available: margin,
        });
    }
    Ok(ExtendedVerticalMap {
        core: core.clone(),
        linear,
        lower,
        upper,
        rq: (s0 - margin, s1 + margin),
    })
}

impl ExtendedVerticalMap {
    pub fn eval(&self, y: f64) -> f64 {
        let (s0, s1) = self.core.source();
        if y < self.lower.y0 || y > self.upper.y1 {
            self.linear.eval(y)
        } else if y < s0 {
            self.lower.eval(y)
        } else if y <= s1 {
            self.core.piece_at(y).eval(y)
        } else {
            self.upper.eval(y)
        }
    }

    pub fn deriv(&self, y: f64) -> f64 {
        let (s0, s1) = self.core.source();
        if y < self.lower.y0 || y > self.upper.y1 {
            self.linear.lambda
        } else if y < s0 {
            self.lower.deriv(y)
        } else if y <= s1 {
            self.core.piece_at(y).deriv(y)
        } else {
            self.upper.deriv(y)
        }
    }

    pub fn inverse(&self, v: f64) -> Result<f64> {
        let (t0, t1) = self.core.target();
        if v < self.lower.v0 || v > self.upper.v1 {
            Ok(self.linear.inverse(v))
        } else if v < t0 {
            self.lower.inverse(v)
        } else if v <= t1 {
            self.core.inverse(v)
        } else {
            self.upper.inverse(v)
        }
    }

    /// Breakpoints where the formula changes (collar edges and source ends).
    pub fn breakpoints(&self) -> [f64; 4] {
        let (s0, s1) = self.core.source();
        [self.lower.y0, s0, s1, self.upper.y1]
    }

    /// Largest derivative over the whole line.
    pub fn max_deriv(&self) -> f64 {
        self.core
            .max_deriv()
            .max(self.lower.max_deriv())
            .max(self.upper.max_deriv())
            .max(self.linear.lambda)
    }
}
