//! The diffeomorphism `F_init`: the linear map `F_Lin` outside the bands
//! `RH_0 ∪ RH_1`, and inside them the blend
//!
//! ```text
//! F_init(x, y) = (X_i(x), φ(x)·f_L(y) + (1 - φ(x))·f_Bow(y))
//! ```
//!
//! of the linear and the Bowen vertical maps, where `X_i` is the horizontal
//! affine contraction of `F_Lin` on branch `i` and `φ` vanishes on the
//! horizontal projection of `UK` and equals 1 at the vertical edges of `R̃`.

use serde::{Deserialize, Serialize};

use crate::bowen::{build_bowen_map, extend_to_rq, Dilation, ExtendedVerticalMap, Half};
use crate::cantor::{build_cantor, CantorSet, GapRule, ZETA2};
use crate::error::{Error, Result};
use crate::horseshoe::{
    build_frame, choose_q, derive_regions, find_horseshoe_rect, widen_to_uk, Frame, HorseshoeRect, Polyline,
    Regions, SMembership, Widening,
};
use crate::linear::{apply_linear, apply_linear_inverse, make_linear_model, FixedPoint, LinearModel};
use crate::roots::solve_increasing;
use crate::torus::{LocalChart, TorusPoint};

/// Construction parameters of `F_init`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub n_init: u32,
    /// Realized depth `D` of the Cantor gap tree.
    pub depth: usize,
    /// `κ` as a fraction of its admissible bound `h / (2 λ_u)`.
    pub kappa_fraction: f64,
    /// Fraction `θ` of the post-first-gap length removed by gaps 2, 3, ….
    pub gap_theta: f64,
    /// Cone-margin budget `c` for `|δ|`.
    pub cone_c: f64,
    /// Bi-Lipschitz budget `L`.
    pub lipschitz_l: f64,
    /// `C¹` closeness budget `δ_init`.
    pub delta_init: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            n_init: 10,
            depth: 10,
            kappa_fraction: 0.1,
            gap_theta: 0.5,
            cone_c: 1.5,
            lipschitz_l: 1.0e6,
            delta_init: 0.1,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n_init == 0 {
            return bad("n_init must be at least 1".into());
        }
        if self.depth < 2 {
            return bad(format!("depth must be at least 2, got {}", self.depth));
        }
        if !(self.kappa_fraction > 0.0 && self.kappa_fraction < 1.0) {
            return bad(format!("kappa_fraction must lie in (0, 1), got {}", self.kappa_fraction));
        }
        if !(self.gap_theta > 0.0 && self.gap_theta.is_finite()) {
            return bad(format!("gap_theta must be positive, got {}", self.gap_theta));
        }
        if !(self.cone_c > 0.0 && self.lipschitz_l > 1.0 && self.delta_init > 0.0) {
            return bad("cone_c, delta_init must be positive and lipschitz_l > 1".into());
        }
        Ok(())
    }
}

/// The blending function `φ`: 0 on `inner`, cubic smoothstep to 1 across
/// each band between `inner` and `outer`, 1 outside `outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub inner: (f64, f64),
    pub outer: (f64, f64),
}

impl Bump {
    fn band_coordinate(&self, x: f64) -> (f64, f64) {
        // (t, dt/dx) with t = 0 on the inner edge and 1 on the outer edge
        if x < self.inner.0 {
            let w = self.inner.0 - self.outer.0;
            ((self.inner.0 - x) / w, -1.0 / w)
        } else if x > self.inner.1 {
            let w = self.outer.1 - self.inner.1;
            ((x - self.inner.1) / w, 1.0 / w)
        } else {
            (0.0, 0.0)
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let (t, _) = self.band_coordinate(x);
        let t = t.clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let (t, dt) = self.band_coordinate(x);
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        6.0 * t * (1.0 - t) * dt
    }

    /// Analytic maximum of `|φ'|`: `1.5 / band width`.
    pub fn max_slope(&self) -> f64 {
        1.5 / (self.inner.0 - self.outer.0).min(self.outer.1 - self.inner.1)
    }

    /// Ends of the two transition bands.
    pub fn breakpoints(&self) -> [f64; 4] {
        [self.outer.0, self.inner.0, self.inner.1, self.outer.1]
    }
}

/// Lower-triangular differential `[[a1, 0], [delta, a2]]` in the eigen-chart
/// (x = stable, y = unstable).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jacobian2 {
    pub a1: f64,
    pub a2: f64,
    pub delta: f64,
}

impl Jacobian2 {
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a1 * v[0], self.delta * v[0] + self.a2 * v[1]]
    }

    pub fn inverse(&self) -> Jacobian2 {
        Jacobian2 {
            a1: 1.0 / self.a1,
            a2: 1.0 / self.a2,
            delta: -self.delta / (self.a1 * self.a2),
        }
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.a1, 0.0], [self.delta, self.a2]]
    }

    pub fn sub(&self, other: &Jacobian2) -> [[f64; 2]; 2] {
        [[self.a1 - other.a1, 0.0], [self.delta - other.delta, self.a2 - other.a2]]
    }

    pub fn norm(&self) -> f64 {
        operator_norm(self.matrix())
    }

    /// `min` over the two boundary rays `(1, ±1)` of `C_H` of the image slope
    /// minus one; positive iff the closed vertical cone is mapped strictly
    /// inside the open vertical cone.
    pub fn cone_margin(&self) -> f64 {
        let up = (self.delta + self.a2).abs() / self.a1.abs();
        let down = (self.delta - self.a2).abs() / self.a1.abs();
        up.min(down) - 1.0
    }

    /// Largest slope of a preimage of a boundary ray of `C_H`; `≤ 1` iff
    /// the image of `C_H` contains `C_H`.
    pub fn horizontal_preimage_slope(&self) -> f64 {
        ((self.a1 - self.delta).abs().max((self.a1 + self.delta).abs())) / self.a2.abs()
    }
}

/// Spectral norm of a 2×2 matrix.
pub fn operator_norm(m: [[f64; 2]; 2]) -> f64 {
    let (a, b, c, d) = (m[0][0], m[0][1], m[1][0], m[1][1]);
    let s = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
    (0.5 * (s + disc)).sqrt()
}

/// The model of `F_init`: all construction data, immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapModel {
    pub params: ModelParams,
    pub linear: LinearModel,
    pub horseshoe: HorseshoeRect,
    pub q: FixedPoint,
    pub widening: Widening,
    pub regions: Regions,
    /// Frame of `F_Lin` (straight stable lines).
    pub frame_linear: Frame,
    /// Frame recomputed as stable curves of `p0` for `F_init`.
    pub frame: Frame,
    pub cantor: CantorSet,
    pub vertical: [ExtendedVerticalMap; 2],
    pub phi: Bump,
}

/// Number of samples per edge for the boundary continuity check at build time.
const CONTINUITY_SAMPLES: usize = 2000;

/// Build `F_init` from parameters, running every construction check.
pub fn build_model(params: &ModelParams) -> Result<MapModel> {
    params.validate()?;
    let linear = make_linear_model(params.n_init)?;
    let horseshoe = find_horseshoe_rect(&linear)?;
    let chart = horseshoe.chart;
    let q = choose_q(&linear, &chart, &horseshoe.k)?;
    let widening = widen_to_uk(&linear, &chart, &horseshoe.k, &q.to_point())?;
    let regions = derive_regions(&linear, &horseshoe.k, &widening.uk, params.kappa_fraction)?;
    let frame_linear = build_frame(&linear, &chart, &regions.rt, &q.to_point())?;

    let h = regions.h();
    let b = params.gap_theta * (h - regions.a1) / (ZETA2 - 1.0);
    let cantor = build_cantor(regions.q, GapRule::ForcedFirst { first: regions.a1, b }, params.depth)?;
    let first_gap = cantor.gap(1, 0);
    let scale = 8.0 * f64::EPSILON * h;
    if (first_gap.0 - regions.q_i[0].1).abs() > scale || (first_gap.1 - regions.q_i[1].0).abs() > scale {
        return Err(Error::Construction(format!(
            "Cantor first gap {first_gap:?} does not match the forced gap between Q_0 and Q_1 ({:e}, {:e})",
            regions.q_i[0].1, regions.q_i[1].0
        )));
    }
    let lam = linear.lambda_u;
    let vertical = [
        extend_to_rq(
            &build_bowen_map(&cantor, Half::Left)?,
            Dilation { fixed: 0.0, lambda: lam },
            regions.kappa,
        )?,
        extend_to_rq(
            &build_bowen_map(&cantor, Half::Right)?,
            Dilation { fixed: h, lambda: lam },
            regions.kappa,
        )?,
    ];
    let phi = Bump {
        inner: regions.uk.x,
        outer: regions.rt.x,
    };
    let mut model = MapModel {
        params: params.clone(),
        linear,
        horseshoe,
        q,
        widening,
        regions,
        frame: frame_linear.clone(),
        frame_linear,
        cantor,
        vertical,
        phi,
    };
    model.check_boundary_continuity(CONTINUITY_SAMPLES)?;
    model.frame = refine_frame(&model, &model.frame_linear)?;
    Ok(model)
}

impl MapModel {
    pub fn chart(&self) -> &LocalChart {
        &self.horseshoe.chart
    }

    pub fn p0(&self) -> TorusPoint {
        self.horseshoe.p0.to_point()
    }

    pub fn p1(&self) -> TorusPoint {
        self.horseshoe.p1.to_point()
    }

    pub fn q_point(&self) -> TorusPoint {
        self.q.to_point()
    }

    pub fn lambda_s(&self) -> f64 {
        self.linear.lambda_s()
    }

    /// `f_Bow - f_L` on branch `i` (zero outside the modified band).
    pub fn bowen_excess(&self, i: usize, y: f64) -> f64 {
        let v = &self.vertical[i];
        if y < v.lower.y0 || y > v.upper.y1 {
            0.0
        } else {
            v.eval(y) - v.linear.eval(y)
        }
    }

    pub fn bowen_excess_dy(&self, i: usize, y: f64) -> f64 {
        let v = &self.vertical[i];
        if y < v.lower.y0 || y > v.upper.y1 {
            0.0
        } else {
            v.deriv(y) - v.linear.lambda
        }
    }

    /// `F_Bow` on `RH_i` in the chart.
    pub fn f_bow_local(&self, i: usize, x: f64, y: f64) -> (f64, f64) {
        (self.regions.branch_x(i, x, self.lambda_s()), self.vertical[i].eval(y))
    }

    /// `F_Lin` on `RH_i` in the chart (reduced to the lift near `p0`).
    pub fn f_lin_local(&self, i: usize, x: f64, y: f64) -> (f64, f64) {
        (self.regions.branch_x(i, x, self.lambda_s()), self.vertical[i].linear.eval(y))
    }

    fn check_boundary_continuity(&self, samples: usize) -> Result<()> {
        let mut worst = 0.0f64;
        for i in 0..2 {
            let r = self.regions.rh[i];
            let mut pts = Vec::new();
            for k in 0..=samples {
                let s = k as f64 / samples as f64;
                let x = r.x.0 + s * r.width();
                let y = r.y.0 + s * r.height();
                pts.extend([(x, r.y.0), (x, r.y.1), (r.x.0, y), (r.x.1, y)]);
            }
            for (x, y) in pts {
                let p = self.chart().point(x, y);
                let lin = apply_linear(&self.linear, &p);
                let (bx, by) = (
                    self.regions.branch_x(i, x, self.lambda_s()),
                    self.vertical_map(i, x, y),
                );
                worst = worst.max(self.chart().point(bx, by).distance(&lin));
            }
        }
        if worst > 1e-9 {
            return Err(Error::Construction(format!(
                "F_init and F_Lin disagree by {worst:e} on the boundary of RH_0 ∪ RH_1"
            )));
        }
        Ok(())
    }

    /// The blended vertical map `V_x(y)` of branch `i`.
    pub fn vertical_map(&self, i: usize, x: f64, y: f64) -> f64 {
        self.vertical[i].linear.eval(y) + (1.0 - self.phi.value(x)) * self.bowen_excess(i, y)
    }

    pub fn s_membership(&self, p: &TorusPoint) -> SMembership {
        crate::horseshoe::s_membership(self.chart(), &self.regions, &self.cantor, p)
    }

    /// All breakpoints in `x` where the formula for `F_init` changes.
    pub fn x_breakpoints(&self) -> Vec<f64> {
        self.phi.breakpoints().to_vec()
    }
}

/// A map of the class built here: `F_Lin` outside `RH_0 ∪ RH_1`, and inside
/// `RH_i` the product of the horizontal affine contraction of `F_Lin` with a
/// fibrewise increasing vertical map. `F_init` and all its perturbations
/// implement it, and orbit, stripe and verification code is generic over it.
pub trait FiberMap: Sync {
    fn model(&self) -> &MapModel;

    /// Vertical map of branch `i` at `(x, y) ∈ RH_i` in the chart.
    fn vertical(&self, i: usize, x: f64, y: f64) -> f64;
    /// `∂_y` of [`FiberMap::vertical`].
    fn vertical_dy(&self, i: usize, x: f64, y: f64) -> f64;
    /// `∂_x` of [`FiberMap::vertical`].
    fn vertical_dx(&self, i: usize, x: f64, y: f64) -> f64;

    /// Chart coordinates of the image of a chart point of `RH_i`.
    fn apply_local(&self, i: usize, x: f64, y: f64) -> (f64, f64) {
        let m = self.model();
        (m.regions.branch_x(i, x, m.lambda_s()), self.vertical(i, x, y))
    }

    fn apply(&self, p: &TorusPoint) -> TorusPoint {
        let m = self.model();
        let (x, y) = m.chart().local(p);
        match m.regions.rh_branch(x, y) {
            Some(i) => {
                let (bx, by) = self.apply_local(i, x, y);
                m.chart().point(bx, by)
            }
            None => apply_linear(&m.linear, p),
        }
    }

    /// Inverse: the horizontal part is inverted through `F_Lin`, the vertical
    /// part by safeguarded Newton–bisection on the monotone fibre map.
    fn apply_inverse(&self, p: &TorusPoint) -> Result<TorusPoint> {
        let m = self.model();
        let pre = apply_linear_inverse(&m.linear, p);
        let (x, y) = m.chart().local(&pre);
        match m.regions.rh_branch(x, y) {
            Some(i) => {
                let target = m.chart().local(p).1;
                let (lo, hi) = m.regions.rh[i].y;
                let y = solve_increasing(
                    |t| self.vertical(i, x, t),
                    |t| self.vertical_dy(i, x, t),
                    lo,
                    hi,
                    target,
                    0.0,
                )?;
                Ok(m.chart().point(x, y))
            }
            None => Ok(pre),
        }
    }

    /// Exact differential in the eigen-chart.
    fn differential(&self, p: &TorusPoint) -> Jacobian2 {
        let m = self.model();
        let (x, y) = m.chart().local(p);
        match m.regions.rh_branch(x, y) {
            Some(i) => {
                let orient = m.chart().sx * m.chart().sy;
                Jacobian2 {
                    a1: m.lambda_s(),
                    a2: self.vertical_dy(i, x, y),
                    delta: orient * self.vertical_dx(i, x, y),
                }
            }
            None => Jacobian2 {
                a1: m.lambda_s(),
                a2: m.linear.lambda_u,
                delta: 0.0,
            },
        }
    }
}

impl FiberMap for MapModel {
    fn model(&self) -> &MapModel {
        self
    }

    fn vertical(&self, i: usize, x: f64, y: f64) -> f64 {
        self.vertical_map(i, x, y)
    }

    fn vertical_dy(&self, i: usize, x: f64, y: f64) -> f64 {
        self.vertical[i].linear.lambda + (1.0 - self.phi.value(x)) * self.bowen_excess_dy(i, y)
    }

    fn vertical_dx(&self, i: usize, x: f64, y: f64) -> f64 {
        -self.phi.deriv(x) * self.bowen_excess(i, y)
    }
}

/// `F_Lin` itself, viewed through the same interface.
pub struct LinearFiberMap<'a>(pub &'a MapModel);

impl FiberMap for LinearFiberMap<'_> {
    fn model(&self) -> &MapModel {
        self.0
    }

    fn vertical(&self, i: usize, _x: f64, y: f64) -> f64 {
        self.0.vertical[i].linear.eval(y)
    }

    fn vertical_dy(&self, _i: usize, _x: f64, _y: f64) -> f64 {
        self.0.linear.lambda_u
    }

    fn vertical_dx(&self, _i: usize, _x: f64, _y: f64) -> f64 {
        0.0
    }
}

/// Recompute the horizontal frame edges as curves of `W^s(p0)` for `f`.
///
/// For each grid abscissa the point of the fibre whose orbit converges to
/// `p0` is found by Newton's method on the chart height of its `k`-th
/// iterate, with `k` the first time the linear orbit of the edge point comes
/// within 0.2 of `p0`. The derivative along the fibre is the product of the
/// vertical derivatives. Slopes of the result must stay below 1.
pub fn refine_frame<F: FiberMap + ?Sized>(f: &F, linear_frame: &Frame) -> Result<Frame> {
    let m = f.model();
    let chart = *m.chart();
    let p0 = m.p0();
    let solve_curve = |curve: &Polyline| -> Result<Polyline> {
        let mut ys = Vec::with_capacity(curve.ys.len());
        for (j, &y_init) in curve.ys.iter().enumerate() {
            let x = curve.x_at(j);
            let mut y = y_init;
            let mut k = 1;
            // iterate the linear approximation until the orbit is near p0
            loop {
                let mut p = chart.point(x, y);
                for _ in 0..k {
                    p = f.apply(&p);
                }
                if p.distance(&p0) < 0.2 || k >= 8 {
                    break;
                }
                k += 1;
            }
            for _ in 0..20 {
                let mut p = chart.point(x, y);
                let mut slope = 1.0;
                for _ in 0..k {
                    slope *= f.differential(&p).a2;
                    p = f.apply(&p);
                }
                let g = chart.local(&p).1;
                let step = g / slope;
                y -= step;
                if step.abs() <= 1e-16 * (1.0 + y.abs()) {
                    break;
                }
            }
            ys.push(y);
        }
        Ok(Polyline {
            x0: curve.x0,
            dx: curve.dx,
            ys,
        })
    };
    let frame = Frame {
        top: solve_curve(&linear_frame.top)?,
        bottom: solve_curve(&linear_frame.bottom)?,
        ..linear_frame.clone()
    };
    if !(frame.max_slope() < 1.0) {
        return Err(Error::Construction(format!(
            "a frame edge has slope {} ≥ 1 (cone violation)",
            frame.max_slope()
        )));
    }
    if !frame.contains_rect(&m.regions.rt) {
        return Err(Error::Construction("the recomputed frame no longer contains R̃".into()));
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::horseshoe::SMembership;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    pub(crate) fn model() -> &'static MapModel {
        static M: OnceLock<MapModel> = OnceLock::new();
        M.get_or_init(|| build_model(&ModelParams::default()).unwrap())
    }

    #[test]
    fn phi_profile() {
        let m = model();
        assert!(m.phi.max_slope() < 200.0);
        assert!((m.phi.max_slope() - 150.0).abs() < 1e-9);
        assert_eq!(m.phi.value(0.5 * (m.regions.uk.x.0 + m.regions.uk.x.1)), 0.0);
        assert_eq!(m.phi.value(m.regions.rt.x.0), 1.0);
        assert_eq!(m.phi.value(m.regions.rt.x.1), 1.0);
        let n = 100_000;
        let (lo, hi) = m.regions.rt.x;
        for k in 0..=n {
            let x = lo + (hi - lo) * k as f64 / n as f64;
            let v = m.phi.value(x);
            assert!((0.0..=1.0).contains(&v));
            assert!(m.phi.deriv(x).abs() <= 150.0 + 1e-9);
        }
    }

    #[test]
    fn fixed_points_are_preserved() {
        let m = model();
        for p in [m.p0(), m.p1(), m.q_point()] {
            assert!(m.apply(&p).distance(&p) < 1e-10);
            assert!(m.apply_inverse(&p).unwrap().distance(&p) < 1e-10);
        }
        assert_eq!(m.s_membership(&m.p0()), SMembership::In);
        assert_eq!(m.s_membership(&m.q_point()), SMembership::Out);
    }

    #[test]
    fn fibres_go_to_fibres() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = m.regions.rh[0];
        for _ in 0..1000 {
            let x = rng.random_range(r.x.0..r.x.1);
            let y1 = rng.random_range(r.y.0..r.y.1);
            let y2 = rng.random_range(r.y.0..r.y.1);
            let a = m.chart().local(&m.apply(&m.chart().point(x, y1)));
            let b = m.chart().local(&m.apply(&m.chart().point(x, y2)));
            assert!((a.0 - b.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_round_trip() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let p = TorusPoint::new(rng.random(), rng.random());
            let back = m.apply(&m.apply_inverse(&p).unwrap());
            assert!(back.distance(&p) < 1e-10);
        }
        // dense sampling inside the modified bands
        for i in 0..2 {
            let r = m.regions.rh[i];
            for _ in 0..10_000 {
                let p = m.chart().point(rng.random_range(r.x.0..r.x.1), rng.random_range(r.y.0..r.y.1));
                let img = m.apply(&p);
                assert!(m.apply_inverse(&img).unwrap().distance(&p) < 1e-10);
            }
        }
    }

    #[test]
    fn differential_structure() {
        let m = model();
        let j = m.differential(&m.p0());
        assert!(j.a2 >= 2.0 && j.delta == 0.0 && j.a1 < 0.5 && j.a1 > 0.0);
        let far = m.differential(&m.q_point());
        assert_eq!(far.a2, m.linear.lambda_u);
        assert!(j.cone_margin() > 0.0);
    }

    #[test]
    fn refined_frame_matches_linear_frame() {
        let m = model();
        let top = m.frame.top.ys.iter().zip(&m.frame_linear.top.ys).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(top < 1e-12, "frame moved by {top}");
        assert!(m.frame.max_slope() < 1.0);
    }

    #[test]
    fn jacobian_algebra() {
        let j = Jacobian2 { a1: 0.25, a2: 3.0, delta: 0.5 };
        let inv = j.inverse();
        let v = inv.apply(j.apply([1.0, -2.0]));
        assert!((v[0] - 1.0).abs() < 1e-15 && (v[1] + 2.0).abs() < 1e-15);
        assert!((operator_norm([[3.0, 0.0], [0.0, 2.0]]) - 3.0).abs() < 1e-15);
        assert!((operator_norm([[1.0, 1.0], [0.0, 1.0]]) - 1.618_033_988_749_895).abs() < 1e-12);
        // boundary ray (1,1) with δ = 0, a1 = 0.5, a2 = 2 maps to slope 4
        let k = Jacobian2 { a1: 0.5, a2: 2.0, delta: 0.0 };
        assert!((k.cone_margin() - 3.0).abs() < 1e-15);
    }
}
