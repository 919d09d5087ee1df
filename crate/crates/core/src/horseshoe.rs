//! Geometry of the horseshoe: the rectangle `K` spanned by two fixed points,
//! its widening `UK` to the unstable line of a far fixed point `q`, the
//! horizontal/vertical strips `UH_i`, `UV_i`, the neighbourhoods `R̃`, `RH_i`
//! and the frame `R` bounded by stable lines of `p0`.
//!
//! Everything is expressed in a [`LocalChart`] anchored at `p0 = 0` whose axes
//! are oriented so that `p1` sits at `(w, h)` with `w, h > 0`.

use serde::{Deserialize, Serialize};

use crate::cantor::{CantorSet, Membership};
use crate::error::{Error, Result};
use crate::linear::{dense_line_near_point, fixed_points_exact, Direction, FixedPoint, LineHit, LinearModel};
use crate::torus::{vector_to_chart, LocalChart, TorusPoint, E_S, E_U};

/// Largest allowed edge of `K`.
pub const MAX_K_EDGE: f64 = 0.01;
/// Minimal distance from `q` to `K`.
pub const MIN_Q_DISTANCE: f64 = 0.3;
/// Widening of `UK` into `R̃` on each side.
pub const RT_MARGIN: f64 = 0.01;
/// Largest allowed `width(UK) / width(K)`.
pub const MAX_UK_RATIO: f64 = 1.01;
/// Height of the frame anchor point `w` above (below) `R̃`.
pub const FRAME_OFFSET: f64 = 0.03;
/// Tolerance for the frame point `v` on the stable line of `p0`.
pub const FRAME_TOL: f64 = 0.001;
/// Number of polyline segments sampling a frame boundary.
pub const FRAME_SEGMENTS: usize = 10_000;

/// Closed axis-parallel box in local chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Rect {
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Self { x, y }
    }

    pub fn width(&self) -> f64 {
        self.x.1 - self.x.0
    }

    pub fn height(&self) -> f64 {
        self.y.1 - self.y.0
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x.0 <= x && x <= self.x.1 && self.y.0 <= y && y <= self.y.1
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.x.0 <= other.x.0 && other.x.1 <= self.x.1 && self.y.0 <= other.y.0 && other.y.1 <= self.y.1
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let x = (self.x.0.max(other.x.0), self.x.1.min(other.x.1));
        let y = (self.y.0.max(other.y.0), self.y.1.min(other.y.1));
        (x.0 <= x.1 && y.0 <= y.1).then_some(Rect { x, y })
    }

    /// Euclidean distance from `(x, y)` to the box (0 inside).
    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        let dx = (self.x.0 - x).max(0.0).max(x - self.x.1);
        let dy = (self.y.0 - y).max(0.0).max(y - self.y.1);
        dx.hypot(dy)
    }

    pub fn widened(&self, dx: f64, dy: f64) -> Rect {
        Rect {
            x: (self.x.0 - dx, self.x.1 + dx),
            y: (self.y.0 - dy, self.y.1 + dy),
        }
    }
}

/// Torus distance from `p` to a box given in the local chart (valid for
/// boxes of diameter well below 1/2).
pub fn torus_distance_to_rect(chart: &LocalChart, rect: &Rect, p: &TorusPoint) -> f64 {
    let d0 = p.displacement_from(&chart.anchor);
    let (ex, ey) = (chart.ex(), chart.ey());
    let mut best = f64::INFINITY;
    for i in -1..=1 {
        for j in -1..=1 {
            let d = [d0[0] + i as f64, d0[1] + j as f64];
            let x = d[0] * ex[0] + d[1] * ex[1];
            let y = d[0] * ey[0] + d[1] * ey[1];
            best = best.min(rect.distance_to(x, y));
        }
    }
    best
}

/// Local chart coordinates of a lattice vector.
fn lattice_local(chart: &LocalChart, n: [i64; 2]) -> (f64, f64) {
    let (x, y) = vector_to_chart([n[0] as f64, n[1] as f64]);
    (chart.sx * x, chart.sy * y)
}

/// Connected components of `F_Lin(src) ∩ dst` for boxes in the chart of a
/// fixed anchor. `F_Lin(src)` is the box `diag(λ_s, λ_u)·src` around the
/// anchor, and its torus image meets `dst` exactly in the lattice translates
/// `n` whose chart offset lies in the Minkowski difference `dst - image`.
pub fn image_intersections(m: &LinearModel, chart: &LocalChart, src: &Rect, dst: &Rect) -> Vec<([i64; 2], Rect)> {
    let ls = m.lambda_s();
    let lu = m.lambda_u;
    let image = Rect {
        x: (ls * src.x.0, ls * src.x.1),
        y: (lu * src.y.0, lu * src.y.1),
    };
    // translates n with (image + n) ∩ dst ≠ ∅
    let xa = dst.x.0 - image.x.1;
    let xb = dst.x.1 - image.x.0;
    let ya = dst.y.0 - image.y.1;
    let yb = dst.y.1 - image.y.0;
    let radius = (xa.abs().max(xb.abs())).hypot(ya.abs().max(yb.abs())).ceil() as i64 + 2;
    let (s0, s1) = (chart.sx * E_S[0], chart.sx * E_S[1]);
    let mut out = Vec::new();
    for n1 in -radius..=radius {
        // x_n = s0 n1 + s1 n2 ∈ [xa, xb]
        let (lo, hi) = {
            let a = (xa - s0 * n1 as f64) / s1;
            let b = (xb - s0 * n1 as f64) / s1;
            (a.min(b), a.max(b))
        };
        for n2 in lo.ceil() as i64..=hi.floor() as i64 {
            let (xn, yn) = lattice_local(chart, [n1, n2]);
            if yn < ya || yn > yb || xn < xa || xn > xb {
                continue;
            }
            let moved = Rect {
                x: (image.x.0 + xn, image.x.1 + xn),
                y: (image.y.0 + yn, image.y.1 + yn),
            };
            if let Some(r) = moved.intersect(dst) {
                out.push(([n1, n2], r));
            }
        }
    }
    out.sort_by(|a, b| a.1.x.0.total_cmp(&b.1.x.0));
    out
}

/// Check that `F_Lin(rect) ∩ rect` consists of exactly two full-height
/// vertical strips, adjoining the left and the right edge respectively.
pub fn is_two_strip_horseshoe(m: &LinearModel, chart: &LocalChart, rect: &Rect) -> bool {
    let parts = image_intersections(m, chart, rect, rect);
    if parts.len() != 2 {
        return false;
    }
    let tol = 1e-12;
    let full = |r: &Rect| (r.y.0 - rect.y.0).abs() < tol && (r.y.1 - rect.y.1).abs() < tol;
    let (a, b) = (&parts[0].1, &parts[1].1);
    full(a) && full(b) && (a.x.0 - rect.x.0).abs() < tol && (b.x.1 - rect.x.1).abs() < tol && a.x.1 < b.x.0
}

/// Check that `F_Lin(src) ∩ dst` consists of exactly the given boxes (up to
/// `tol` in every coordinate), in left-to-right order.
pub fn image_matches(m: &LinearModel, chart: &LocalChart, src: &Rect, dst: &Rect, expected: &[Rect], tol: f64) -> bool {
    let parts = image_intersections(m, chart, src, dst);
    parts.len() == expected.len()
        && parts.iter().zip(expected).all(|((_, a), b)| {
            (a.x.0 - b.x.0).abs() <= tol
                && (a.x.1 - b.x.1).abs() <= tol
                && (a.y.0 - b.y.0).abs() <= tol
                && (a.y.1 - b.y.1).abs() <= tol
        })
}

/// The horseshoe rectangle spanned by two fixed points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeRect {
    pub chart: LocalChart,
    pub k: Rect,
    pub p0: FixedPoint,
    pub p1: FixedPoint,
}

/// Scan fixed-point pairs by chart bounding-box size and return the first
/// rectangle that forms a two-strip linear horseshoe with edges < 0.01.
///
/// The fixed points form a group under addition, so every pair is a
/// translate of a pair `(0, p1)`; anchoring `p0` at the origin loses nothing.
pub fn find_horseshoe_rect(m: &LinearModel) -> Result<HorseshoeRect> {
    let fps = fixed_points_exact(m);
    let origin = TorusPoint::ORIGIN;
    let p0 = fps
        .iter()
        .copied()
        .find(|p| p.num == [0, 0])
        .expect("the origin is always fixed");
    let mut candidates: Vec<(f64, f64, f64, f64, FixedPoint)> = fps
        .iter()
        .filter(|p| p.num != [0, 0])
        .filter_map(|p| {
            let (x, y) = vector_to_chart(p.to_point().displacement_from(&origin));
            (x.abs() < MAX_K_EDGE && y.abs() < MAX_K_EDGE).then(|| (x.abs().max(y.abs()), (x * y).abs(), x, y, *p))
        })
        .collect();
    candidates.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
            .then(a.3.total_cmp(&b.3))
    });
    let locals: Vec<TorusPoint> = fps.iter().map(FixedPoint::to_point).collect();
    for (_, _, x, y, p1) in candidates {
        if x == 0.0 || y == 0.0 {
            continue;
        }
        let chart = LocalChart::new(origin, x.signum(), y.signum());
        let k = Rect::new((0.0, x.abs()), (0.0, y.abs()));
        let interior_free = locals.iter().all(|p| {
            let (lx, ly) = chart.local(p);
            !(lx > 1e-12 && lx < k.x.1 - 1e-12 && ly > 1e-12 && ly < k.y.1 - 1e-12)
        });
        if interior_free && is_two_strip_horseshoe(m, &chart, &k) {
            return Ok(HorseshoeRect { chart, k, p0, p1 });
        }
    }
    Err(Error::Geometry(format!(
        "no pair of fixed points of M^{} spans a two-strip horseshoe rectangle with edges < {MAX_K_EDGE}; increase N_init",
        m.n_init
    )))
}

/// Number of fixed points strictly inside `rect`.
pub fn interior_fixed_points(m: &LinearModel, chart: &LocalChart, rect: &Rect) -> usize {
    fixed_points_exact(m)
        .iter()
        .filter(|p| {
            let (x, y) = chart.local(&p.to_point());
            x > rect.x.0 + 1e-12 && x < rect.x.1 - 1e-12 && y > rect.y.0 + 1e-12 && y < rect.y.1 - 1e-12
        })
        .count()
}

/// The fixed point farthest from `K`, required to be at distance ≥ 0.3.
pub fn choose_q(m: &LinearModel, chart: &LocalChart, k: &Rect) -> Result<FixedPoint> {
    let best = fixed_points_exact(m)
        .into_iter()
        .map(|p| (torus_distance_to_rect(chart, k, &p.to_point()), p))
        .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.num.cmp(&a.1.num)));
    match best {
        Some((d, p)) if d >= MIN_Q_DISTANCE => Ok(p),
        Some((d, _)) => Err(Error::Geometry(format!(
            "the farthest fixed point is only {d:.4} from K (need ≥ {MIN_Q_DISTANCE}); increase N_init"
        ))),
        None => unreachable!("there is always at least one fixed point"),
    }
}

/// `UK` together with the unstable-line crossings that bound it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Widening {
    pub uk: Rect,
    /// Arclength from `q` along `e_u` to the left and right edge crossings.
    pub edge_t: [f64; 2],
    pub edge_winding: [i64; 2],
}

/// Widen `K` horizontally until both vertical edges lie on `W^u(q)`, with
/// total width ratio at most 1.01.
pub fn widen_to_uk(m: &LinearModel, chart: &LocalChart, k: &Rect, q: &TorusPoint) -> Result<Widening> {
    let w = k.width();
    let half_window = 0.25 * (MAX_UK_RATIO - 1.0) * w;
    let mid_y = 0.5 * (k.y.0 + k.y.1);
    let search = |x: f64| -> Result<(f64, LineHit)> {
        let target = chart.point(x, mid_y);
        let hit = dense_line_near_point(m, q, Direction::Unstable, &target, half_window)?;
        Ok((chart.local(&hit.point).0, hit))
    };
    let (xl, hl) = search(k.x.0 - half_window)?;
    let (xr, hr) = search(k.x.1 + half_window)?;
    if !(xl < k.x.0 && xr > k.x.1 && (xr - xl) / w <= MAX_UK_RATIO) {
        return Err(Error::Geometry(format!(
            "no crossings of W^u(q) within the width budget: got [{xl}, {xr}] around K of width {w}"
        )));
    }
    // the line direction is ±ey; convert the hit arclength to the chart frame
    Ok(Widening {
        uk: Rect::new((xl, xr), k.y),
        edge_t: [hl.t, hr.t],
        edge_winding: [hl.winding, hr.winding],
    })
}

/// All rectangles derived from `UK`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regions {
    pub k: Rect,
    pub uk: Rect,
    pub uh: [Rect; 2],
    pub uv: [Rect; 2],
    /// `R̃`.
    pub rt: Rect,
    /// `R̃H_i`: `UH_i` widened vertically by `κ`.
    pub rth: [Rect; 2],
    /// `RH_i`: `R̃H_i` continued horizontally to `∂_v R̃`.
    pub rh: [Rect; 2],
    /// `Q`, the vertical projection of `UK`.
    pub q: (f64, f64),
    pub q_i: [(f64, f64); 2],
    /// `RQ_i`, the vertical projections of `RH_i`.
    pub rq: [(f64, f64); 2],
    /// Forced first gap length `|Q| - |Q_0| - |Q_1|`.
    pub a1: f64,
    pub kappa: f64,
    pub lambda_u: f64,
}

impl Regions {
    /// Width of `K`, i.e. the chart x-coordinate of `p1`.
    pub fn w(&self) -> f64 {
        self.k.x.1
    }

    pub fn h(&self) -> f64 {
        self.k.y.1
    }

    /// Largest admissible `κ`: keeps the height of `F_Lin(RH_i)` below `2·height(K)`.
    pub fn kappa_bound(h: f64, lambda_u: f64) -> f64 {
        h / (2.0 * lambda_u)
    }

    /// Horizontal part of `F_Lin` on branch `i` (shared by every map of the
    /// family), in the chart.
    pub fn branch_x(&self, i: usize, x: f64, lambda_s: f64) -> f64 {
        if i == 0 {
            lambda_s * x
        } else {
            self.w() + lambda_s * (x - self.w())
        }
    }

    /// The branch `i` with `(x, y) ∈ RH_i`, if any.
    pub fn rh_branch(&self, x: f64, y: f64) -> Option<usize> {
        (0..2).find(|&i| self.rh[i].contains(x, y))
    }
}

/// Build `UH_i`, `UV_i`, `R̃`, `RH_i`, `Q` and friends from `UK`.
pub fn derive_regions(m: &LinearModel, k: &Rect, uk: &Rect, kappa_fraction: f64) -> Result<Regions> {
    let lu = m.lambda_u;
    let ls = m.lambda_s();
    let h = uk.height();
    let w = k.width();
    let bound = Regions::kappa_bound(h, lu);
    if !(kappa_fraction > 0.0 && kappa_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "κ fraction {kappa_fraction} must lie in (0, 1); the admissible κ bound is {bound:e}"
        )));
    }
    let kappa = kappa_fraction * bound;
    let band = h / lu;
    let q_i = [(0.0, band), (h - band, h)];
    let uh = [Rect::new(uk.x, q_i[0]), Rect::new(uk.x, q_i[1])];
    let uv = [
        Rect::new((ls * uk.x.0, ls * uk.x.1), (0.0, h)),
        Rect::new((w + ls * (uk.x.0 - w), w + ls * (uk.x.1 - w)), (0.0, h)),
    ];
    let rt = uk.widened(RT_MARGIN, RT_MARGIN);
    let rq = [(q_i[0].0 - kappa, q_i[0].1 + kappa), (q_i[1].0 - kappa, q_i[1].1 + kappa)];
    let rth = [Rect::new(uk.x, rq[0]), Rect::new(uk.x, rq[1])];
    let rh = [Rect::new(rt.x, rq[0]), Rect::new(rt.x, rq[1])];
    let a1 = h - (q_i[0].1 - q_i[0].0) - (q_i[1].1 - q_i[1].0);
    for r in &rh {
        let image_height = lu * r.height();
        if !(image_height < 2.0 * h) {
            return Err(Error::Geometry(format!(
                "F_Lin(RH_i) has height {image_height:e} ≥ 2·height(K); κ must stay below {bound:e}"
            )));
        }
    }
    if !(a1 > 0.0) {
        return Err(Error::Geometry(format!("the first gap has non-positive length {a1:e}")));
    }
    Ok(Regions {
        k: *k,
        uk: *uk,
        uh,
        uv,
        rt,
        rth,
        rh,
        q: (0.0, h),
        q_i,
        rq,
        a1,
        kappa,
        lambda_u: lu,
    })
}

/// A graph `y(x)` sampled on a uniform grid, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub x0: f64,
    pub dx: f64,
    pub ys: Vec<f64>,
}

impl Polyline {
    pub fn constant(x: (f64, f64), segments: usize, y: f64) -> Self {
        Self {
            x0: x.0,
            dx: (x.1 - x.0) / segments as f64,
            ys: vec![y; segments + 1],
        }
    }

    pub fn from_fn(x: (f64, f64), segments: usize, f: impl Fn(f64) -> f64) -> Self {
        let dx = (x.1 - x.0) / segments as f64;
        Self {
            x0: x.0,
            dx,
            ys: (0..=segments).map(|i| f(x.0 + i as f64 * dx)).collect(),
        }
    }

    pub fn x_at(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.x0, self.x_at(self.ys.len() - 1))
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.ys.len() - 1;
        let s = ((x - self.x0) / self.dx).clamp(0.0, n as f64);
        let i = (s.floor() as usize).min(n.saturating_sub(1));
        let t = s - i as f64;
        if n == 0 {
            return self.ys[0];
        }
        self.ys[i] * (1.0 - t) + self.ys[i + 1] * t
    }

    /// Largest `|Δy / Δx|` over the segments.
    pub fn max_slope(&self) -> f64 {
        self.ys
            .windows(2)
            .map(|p| ((p[1] - p[0]) / self.dx).abs())
            .fold(0.0, f64::max)
    }
}

/// The frame `R`: vertical edges over `∂_v R̃`, top and bottom on `W^s(p0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub x: (f64, f64),
    pub top: Polyline,
    pub bottom: Polyline,
    /// The anchors `w` above and below `R̃` and the points `v` of `W^s(p0)`.
    pub w_top: TorusPoint,
    pub v_top: TorusPoint,
    pub w_bottom: TorusPoint,
    pub v_bottom: TorusPoint,
}

impl Frame {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x.0 <= x && x <= self.x.1 && self.bottom.eval(x) <= y && y <= self.top.eval(x)
    }

    pub fn bounding_box(&self) -> Rect {
        let lo = self.bottom.ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.top.ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Rect::new(self.x, (lo, hi))
    }

    pub fn contains_rect(&self, r: &Rect) -> bool {
        self.x.0 <= r.x.0
            && r.x.1 <= self.x.1
            && self.bottom.ys.iter().all(|&y| y <= r.y.0)
            && self.top.ys.iter().all(|&y| y >= r.y.1)
    }

    pub fn max_slope(&self) -> f64 {
        self.top.max_slope().max(self.bottom.max_slope())
    }
}

/// Build the frame of `F_Lin`: its horizontal edges are the lines of
/// `W^s(p0)` through points `v` within 0.001 of the points `w` lying 0.03
/// above and below the midpoints of the horizontal edges of `R̃`.
pub fn build_frame(m: &LinearModel, chart: &LocalChart, rt: &Rect, q: &TorusPoint) -> Result<Frame> {
    let mid = 0.5 * (rt.x.0 + rt.x.1);
    let find = |y: f64| -> Result<(TorusPoint, TorusPoint, f64)> {
        let w = chart.point(mid, y);
        let hit = dense_line_near_point(m, &chart.anchor, Direction::Stable, &w, FRAME_TOL)?;
        Ok((w, hit.point, chart.local(&hit.point).1))
    };
    let (w_top, v_top, y_top) = find(rt.y.1 + FRAME_OFFSET)?;
    let (w_bottom, v_bottom, y_bottom) = find(rt.y.0 - FRAME_OFFSET)?;
    let frame = Frame {
        x: rt.x,
        top: Polyline::constant(rt.x, FRAME_SEGMENTS, y_top),
        bottom: Polyline::constant(rt.x, FRAME_SEGMENTS, y_bottom),
        w_top,
        v_top,
        w_bottom,
        v_bottom,
    };
    if !frame.contains_rect(rt) {
        return Err(Error::Geometry("the frame does not contain R̃".into()));
    }
    if torus_distance_to_rect(chart, &frame.bounding_box(), q) <= 0.0 {
        return Err(Error::Geometry("q lies inside the frame".into()));
    }
    Ok(frame)
}

/// Horseshoe local stable set `S = π_hor(UK) × C_thick`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SMembership {
    In,
    Out,
    Unresolved,
}

/// Membership of a chart point in `S` at the realized Cantor depth.
pub fn s_membership_local(regions: &Regions, cantor: &CantorSet, x: f64, y: f64) -> SMembership {
    if !regions.uk.contains(x, y) {
        return SMembership::Out;
    }
    match cantor.membership(y) {
        Ok(Membership::In) => SMembership::In,
        Ok(Membership::Unresolved) => SMembership::Unresolved,
        Ok(Membership::InGap { .. }) | Err(_) => SMembership::Out,
    }
}

/// Membership of a torus point in `S`.
pub fn s_membership(chart: &LocalChart, regions: &Regions, cantor: &CantorSet, p: &TorusPoint) -> SMembership {
    let (x, y) = chart.local(p);
    s_membership_local(regions, cantor, x, y)
}

/// Signed offset of `p` across the unstable line through `base`, measured
/// from the lift `base + t·e_u` (valid when `p` is within 1/2 of that lift).
/// Zero exactly when `p` lies on the line.
pub fn unstable_line_offset(base: &TorusPoint, t: f64, p: &TorusPoint) -> f64 {
    let d = [p.u - base.u - t * E_U[0], p.v - base.v - t * E_U[1]];
    (d[0] - d[0].round()) * E_S[0] + (d[1] - d[1].round()) * E_S[1]
}
