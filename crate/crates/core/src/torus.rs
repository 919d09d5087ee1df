//! Points of the flat torus R²/Z² and the eigen-chart of the cat map family.
//!
//! The chart axes are the eigenvectors of `[[2,1],[1,1]]`: `x` runs along the
//! stable (horizontal) direction, `y` along the unstable (vertical) one. Every
//! power of the base matrix shares these axes, so one chart serves all
//! `N_init`.

use serde::{Deserialize, Serialize};

/// Golden ratio.
pub const PHI: f64 = 1.618_033_988_749_894_8;

/// Unit unstable eigenvector of `[[2,1],[1,1]]`, proportional to `(φ, 1)`.
pub const E_U: [f64; 2] = [0.850_650_808_352_039_9, 0.525_731_112_119_133_6];
/// Unit stable eigenvector, proportional to `(-1, φ)`.
pub const E_S: [f64; 2] = [-0.525_731_112_119_133_6, 0.850_650_808_352_039_9];

/// Reduce a real number to `[0, 1)`.
#[inline]
pub fn wrap01(t: f64) -> f64 {
    let r = t - t.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Reduce a real number to `[-1/2, 1/2)`, the minimal-image representative.
#[inline]
pub fn wrap_centered(t: f64) -> f64 {
    let r = t - (t + 0.5).floor();
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

#[inline]
pub(crate) fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// A point of T² in standard coordinates, both in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub u: f64,
    pub v: f64,
}

impl TorusPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self {
            u: wrap01(u),
            v: wrap01(v),
        }
    }

    pub const ORIGIN: TorusPoint = TorusPoint { u: 0.0, v: 0.0 };

    /// Minimal-image displacement `self - other` as a vector of R².
    pub fn displacement_from(&self, other: &TorusPoint) -> [f64; 2] {
        [wrap_centered(self.u - other.u), wrap_centered(self.v - other.v)]
    }

    /// Flat distance on the torus.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        let d = self.displacement_from(other);
        d[0].hypot(d[1])
    }

    pub fn translate(&self, d: [f64; 2]) -> TorusPoint {
        TorusPoint::new(self.u + d[0], self.v + d[1])
    }

    /// Eigen-chart coordinates `(x, y)` of the representative in `[0,1)²`.
    pub fn to_chart(&self) -> (f64, f64) {
        let p = [self.u, self.v];
        (dot(p, E_S), dot(p, E_U))
    }

    /// Inverse of [`TorusPoint::to_chart`] (modulo the lattice).
    pub fn from_chart(x: f64, y: f64) -> TorusPoint {
        TorusPoint::new(x * E_S[0] + y * E_U[0], x * E_S[1] + y * E_U[1])
    }
}

/// Chart coordinates of a plane vector.
#[inline]
pub fn vector_to_chart(d: [f64; 2]) -> (f64, f64) {
    (dot(d, E_S), dot(d, E_U))
}

#[inline]
pub fn chart_to_vector(x: f64, y: f64) -> [f64; 2] {
    [x * E_S[0] + y * E_U[0], x * E_S[1] + y * E_U[1]]
}

/// Eigen-chart centred at an anchor, with optional reflections of the axes.
///
/// A point is represented by the chart coordinates of its minimal-image lift
/// around the anchor. All regions handled through a `LocalChart` have diameter
/// well below 1/2, so the lift is unambiguous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalChart {
    pub anchor: TorusPoint,
    /// `+1` or `-1`: orientation of the local x axis relative to `E_S`.
    pub sx: f64,
    /// `+1` or `-1`: orientation of the local y axis relative to `E_U`.
    pub sy: f64,
}

impl LocalChart {
    pub fn new(anchor: TorusPoint, sx: f64, sy: f64) -> Self {
        Self { anchor, sx, sy }
    }

    #[inline]
    pub fn ex(&self) -> [f64; 2] {
        [self.sx * E_S[0], self.sx * E_S[1]]
    }

    #[inline]
    pub fn ey(&self) -> [f64; 2] {
        [self.sy * E_U[0], self.sy * E_U[1]]
    }

    #[inline]
    pub fn local(&self, p: &TorusPoint) -> (f64, f64) {
        let d = p.displacement_from(&self.anchor);
        (dot(d, self.ex()), dot(d, self.ey()))
    }

    #[inline]
    pub fn point(&self, x: f64, y: f64) -> TorusPoint {
        let ex = self.ex();
        let ey = self.ey();
        self.anchor
            .translate([x * ex[0] + y * ey[0], x * ex[1] + y * ey[1]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eigenvectors_are_orthonormal() {
        assert!((dot(E_U, E_U) - 1.0).abs() < 1e-15);
        assert!((dot(E_S, E_S) - 1.0).abs() < 1e-15);
        assert!(dot(E_U, E_S).abs() < 1e-15);
        assert!((E_U[0] / E_U[1] - PHI).abs() < 1e-14);
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap01(-0.25), 0.75);
        assert_eq!(wrap01(1.0), 0.0);
        assert_eq!(wrap_centered(0.75), -0.25);
        assert_eq!(wrap_centered(0.5), -0.5);
    }

    proptest! {
        #[test]
        fn chart_round_trip(u in 0.0f64..1.0, v in 0.0f64..1.0) {
            let p = TorusPoint::new(u, v);
            let (x, y) = p.to_chart();
            let q = TorusPoint::from_chart(x, y);
            prop_assert!(p.distance(&q) < 1e-12);
        }

        #[test]
        fn metric_axioms(a in (0.0f64..1.0, 0.0f64..1.0),
                         b in (0.0f64..1.0, 0.0f64..1.0),
                         c in (0.0f64..1.0, 0.0f64..1.0)) {
            let (a, b, c) = (TorusPoint::new(a.0, a.1), TorusPoint::new(b.0, b.1), TorusPoint::new(c.0, c.1));
            prop_assert!((a.distance(&b) - b.distance(&a)).abs() < 1e-15);
            prop_assert!(a.distance(&c) <= a.distance(&b) + b.distance(&c) + 1e-15);
            prop_assert!(a.distance(&a) == 0.0);
        }

        #[test]
        fn local_chart_round_trip(x in -0.2f64..0.2, y in -0.2f64..0.2, flip in any::<(bool, bool)>()) {
            let chart = LocalChart::new(TorusPoint::new(0.3, 0.9),
                if flip.0 { -1.0 } else { 1.0 }, if flip.1 { -1.0 } else { 1.0 });
            let (x2, y2) = chart.local(&chart.point(x, y));
            prop_assert!((x - x2).abs() < 1e-14 && (y - y2).abs() < 1e-14);
        }
    }
}
