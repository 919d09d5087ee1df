//! Perturbations supported on roughly horizontal stripes: vertical
//! linearization `L_Π`, its ρ-blended smoothing, distances between maps on a
//! stripe, and the finite-stage level linearization.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anosov::{operator_norm, FiberMap, MapModel};
use crate::error::{Error, Result};
use crate::horseshoe::Polyline;
use crate::report::{Check, Report};
use crate::stripes::{ChainCurve, StripeRegion, StripeSet};
use crate::torus::TorusPoint;
use crate::verify::check_delta_init;

/// Abscissae sampled when validating a stripe.
const VALIDATE_SAMPLES: usize = 256;
/// Fibres and points per fibre of the default stripe sample.
pub const STRIPE_FIBRES: usize = 64;
pub const FIBRE_POINTS: usize = 64;
/// Samples placed in each `α`-collar of a smoothed stripe.
const COLLAR_POINTS: usize = 24;
/// Halvings of `α` tried before giving up on the `γ` target.
const ALPHA_LADDER: usize = 64;
/// `max |ρ'|` of the quintic smoothstep.
pub const RHO_MAX_SLOPE: f64 = 15.0 / 8.0;
/// `C = 2·C_x`, `C_x = 1 + max |ρ'|` for stripes with boundary slopes below 1.
pub const SMOOTHING_CONSTANT: f64 = 2.0 * (1.0 + RHO_MAX_SLOPE);
/// Absolute slack of the `√5·δ` bound.
pub const DELTA_SLACK: f64 = 1e-6;

/// Quintic smoothstep, clamped to `[0, 1]`.
pub fn rho(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

pub fn rho_deriv(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        30.0 * t * t * (1.0 - t) * (1.0 - t)
    }
}

/// A boundary graph `y = φ(x)` of a stripe, in the chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Graph {
    /// `c + slope·x`.
    Affine { c: f64, slope: f64 },
    /// `c + amp·sin(freq·x + phase)`.
    Sine { c: f64, amp: f64, freq: f64, phase: f64 },
    /// Piecewise linear.
    Polyline(Polyline),
    /// A curve of some `W_m`, evaluated exactly through the unperturbed map.
    Chain(ChainCurve),
}

impl Graph {
    /// `(φ(x), φ'(x))`; `NaN` where a chain curve cannot be solved.
    pub fn eval(&self, m: &MapModel, x: f64) -> (f64, f64) {
        match self {
            Graph::Affine { c, slope } => (c + slope * x, *slope),
            Graph::Sine { c, amp, freq, phase } => {
                let a = freq * x + phase;
                (c + amp * a.sin(), amp * freq * a.cos())
            }
            Graph::Polyline(p) => {
                let (lo, hi) = p.x_range();
                let n = p.ys.len() - 1;
                let k = (((x - lo) / (hi - lo) * n as f64).floor().max(0.0) as usize).min(n - 1);
                (p.eval(x), (p.ys[k + 1] - p.ys[k]) / p.dx)
            }
            Graph::Chain(c) => c.eval(m, x).unwrap_or((f64::NAN, f64::NAN)),
        }
    }

    /// Position of `y` relative to the graph over `x`.
    pub fn side(&self, m: &MapModel, x: f64, y: f64) -> Ordering {
        match self {
            Graph::Chain(c) => c.side(m, x, y),
            g => y.total_cmp(&g.eval(m, x).0),
        }
    }
}

/// `{(x, y): x ∈ [x.0, x.1], φ_1(x) ≤ y ≤ φ_2(x)}` inside `RH_branch`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughStripe {
    pub x: (f64, f64),
    pub lower: Graph,
    pub upper: Graph,
    pub branch: usize,
    /// Vertical hull of the stripe, for quick rejection.
    pub hull: (f64, f64),
    /// Largest sampled `|φ_i'|`.
    pub max_slope: f64,
    pub min_width: f64,
}

impl RoughStripe {
    /// Validate the graphs: slopes below 1, `φ_1 < φ_2`, and the stripe
    /// inside a single `RH_i`.
    pub fn new(m: &MapModel, x: (f64, f64), lower: Graph, upper: Graph) -> Result<Self> {
        if x.0 >= x.1 {
            return Err(Error::InvalidParameter(format!("empty stripe abscissa range [{}, {}]", x.0, x.1)));
        }
        let mut hull = (f64::INFINITY, f64::NEG_INFINITY);
        let mut max_slope: f64 = 0.0;
        let mut min_width = f64::INFINITY;
        let mut step: f64 = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for k in 0..=VALIDATE_SAMPLES {
            let xk = x.0 + (x.1 - x.0) * k as f64 / VALIDATE_SAMPLES as f64;
            let (a, da) = lower.eval(m, xk);
            let (b, db) = upper.eval(m, xk);
            if !(a < b) {
                return Err(Error::InvalidParameter(format!("stripe graphs not ordered at x = {xk}: {a} ≥ {b}")));
            }
            if let Some((pa, pb)) = prev {
                step = step.max((a - pa).abs()).max((b - pb).abs());
            }
            prev = Some((a, b));
            hull = (hull.0.min(a), hull.1.max(b));
            max_slope = max_slope.max(da.abs()).max(db.abs());
            min_width = min_width.min(b - a);
        }
        if max_slope >= 1.0 {
            return Err(Error::Geometry(format!("stripe boundary slope {max_slope} is not below 1")));
        }
        let r = &m.regions;
        let branch = (0..2)
            .find(|&i| r.rh[i].x.0 <= x.0 && x.1 <= r.rh[i].x.1 && r.rh[i].y.0 <= hull.0 && hull.1 <= r.rh[i].y.1)
            .ok_or_else(|| Error::Geometry("stripe does not lie inside one band RH_i".into()))?;
        // between samples the graphs move by about the largest sampled step;
        // the padded hull is only used for quick rejection
        let pad = 2.0 * step + 4.0 * f64::EPSILON * hull.1.abs().max(hull.0.abs());
        let hull = (hull.0 - pad, hull.1 + pad);
        Ok(Self {
            x,
            lower,
            upper,
            branch,
            hull,
            max_slope,
            min_width,
        })
    }

    /// A stripe of a computed stripe set, bounded by its exact chain curves.
    pub fn from_region(m: &MapModel, s: &StripeRegion) -> Result<Self> {
        Self::new(
            m,
            s.lower_graph.x_range(),
            Graph::Chain(s.lower.clone()),
            Graph::Chain(s.upper.clone()),
        )
    }

    pub fn contains(&self, m: &MapModel, x: f64, y: f64) -> bool {
        if x < self.x.0 || x > self.x.1 || y < self.hull.0 || y > self.hull.1 {
            return false;
        }
        self.lower.side(m, x, y) != Ordering::Less && self.upper.side(m, x, y) != Ordering::Greater
    }

    /// Sample points: `nx` fibres, `ny` points per fibre including both
    /// ends, plus points in the `α`-collars when `collar` is given.
    pub fn samples(&self, m: &MapModel, nx: usize, ny: usize, collar: Option<f64>) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for k in 0..nx {
            let x = self.x.0 + (self.x.1 - self.x.0) * (k as f64 + 0.5) / nx as f64;
            let (a, b) = (self.lower.eval(m, x).0, self.upper.eval(m, x).0);
            for j in 0..ny.max(2) {
                out.push((x, a + (b - a) * j as f64 / (ny.max(2) - 1) as f64));
            }
            if let Some(alpha) = collar {
                let depth = alpha.min(0.5 * (b - a));
                for j in 1..=COLLAR_POINTS {
                    let s = depth * j as f64 / (COLLAR_POINTS + 1) as f64;
                    out.push((x, a + s));
                    out.push((x, b - s));
                }
            }
        }
        out
    }

    fn overlaps(&self, m: &MapModel, other: &RoughStripe) -> bool {
        if self.branch != other.branch
            || self.x.1 < other.x.0
            || other.x.1 < self.x.0
            || self.hull.1 < other.hull.0
            || other.hull.1 < self.hull.0
        {
            return false;
        }
        let (lo, hi) = (self.x.0.max(other.x.0), self.x.1.min(other.x.1));
        (0..=64).any(|k| {
            let x = lo + (hi - lo) * k as f64 / 64.0;
            let (a, b) = (self.lower.eval(m, x).0, self.upper.eval(m, x).0);
            let (c, d) = (other.lower.eval(m, x).0, other.upper.eval(m, x).0);
            a < d && c < b
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PatchKind {
    /// Affine on every vertical segment, with the same endpoint images.
    Linearized,
    /// `ρ_1ρ_2·L_Π(F_0) + (1 − ρ_1ρ_2)·F_0` with collar width `alpha`.
    Smoothed { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub stripe: RoughStripe,
    pub kind: PatchKind,
}

/// A map that agrees with `base` outside a list of pairwise disjoint
/// stripes and is replaced inside each of them.
pub struct PerturbedMap<'a, G: FiberMap + ?Sized> {
    pub base: &'a G,
    pub patches: Vec<Patch>,
}

impl<G: FiberMap + ?Sized> Clone for PerturbedMap<'_, G> {
    fn clone(&self) -> Self {
        Self {
            base: self.base,
            patches: self.patches.clone(),
        }
    }
}

/// Base-map data on the vertical segment of a stripe over `x`.
struct Segment {
    lo: f64,
    hi: f64,
    v1: f64,
    v2: f64,
    /// Total derivatives of `x ↦ V(x, φ_i(x))`.
    d1: f64,
    d2: f64,
    dlo: f64,
    dhi: f64,
}

/// `(V, ∂_y V, ∂_x V)` of the patched fibre map.
type Jet = (f64, f64, f64);

impl<'a, G: FiberMap + ?Sized> PerturbedMap<'a, G> {
    pub fn new(base: &'a G) -> Self {
        Self {
            base,
            patches: Vec::new(),
        }
    }

    /// Add a patch; its stripe must be disjoint from the existing ones.
    pub fn with_patch(mut self, patch: Patch) -> Result<Self> {
        let m = self.base.model();
        if let Some(k) = self.patches.iter().position(|p| p.stripe.overlaps(m, &patch.stripe)) {
            return Err(Error::Construction(format!("stripe overlaps the stripe of patch {k}")));
        }
        self.patches.push(patch);
        Ok(self)
    }

    fn patch_at(&self, i: usize, x: f64, y: f64) -> Option<&Patch> {
        let m = self.base.model();
        self.patches.iter().find(|p| p.stripe.branch == i && p.stripe.contains(m, x, y))
    }

    fn segment(&self, stripe: &RoughStripe, x: f64) -> Segment {
        let m = self.base.model();
        let b = self.base;
        let i = stripe.branch;
        let (lo, dlo) = stripe.lower.eval(m, x);
        let (hi, dhi) = stripe.upper.eval(m, x);
        Segment {
            lo,
            hi,
            v1: b.vertical(i, x, lo),
            v2: b.vertical(i, x, hi),
            d1: b.vertical_dx(i, x, lo) + b.vertical_dy(i, x, lo) * dlo,
            d2: b.vertical_dx(i, x, hi) + b.vertical_dy(i, x, hi) * dhi,
            dlo,
            dhi,
        }
    }

    fn linear_jet(s: &Segment, y: f64) -> Jet {
        let len = s.hi - s.lo;
        let t = (y - s.lo) / len;
        let rise = s.v2 - s.v1;
        let v = s.v1 + rise * t;
        let vy = rise / len;
        let dt = (-s.dlo - t * (s.dhi - s.dlo)) / len;
        let vx = s.d1 + (s.d2 - s.d1) * t + rise * dt;
        (v, vy, vx)
    }

    fn jet(&self, i: usize, x: f64, y: f64) -> Option<Jet> {
        let patch = self.patch_at(i, x, y)?;
        let s = self.segment(&patch.stripe, x);
        let lin = Self::linear_jet(&s, y);
        match patch.kind {
            PatchKind::Linearized => Some(lin),
            PatchKind::Smoothed { alpha } => {
                let b = self.base;
                let (v0, v0y, v0x) = (b.vertical(i, x, y), b.vertical_dy(i, x, y), b.vertical_dx(i, x, y));
                let (t1, t2) = ((y - s.lo) / alpha, (s.hi - y) / alpha);
                let (r1, r2) = (rho(t1), rho(t2));
                let (r1d, r2d) = (rho_deriv(t1), rho_deriv(t2));
                let p = r1 * r2;
                let py = (r1d * r2 - r1 * r2d) / alpha;
                let px = (-r1d * s.dlo * r2 + r1 * r2d * s.dhi) / alpha;
                let diff = lin.0 - v0;
                Some((
                    v0 + p * diff,
                    v0y + p * (lin.1 - v0y) + py * diff,
                    v0x + p * (lin.2 - v0x) + px * diff,
                ))
            }
        }
    }
}

impl<G: FiberMap + ?Sized> FiberMap for PerturbedMap<'_, G> {
    fn model(&self) -> &MapModel {
        self.base.model()
    }

    fn vertical(&self, i: usize, x: f64, y: f64) -> f64 {
        self.jet(i, x, y).map_or_else(|| self.base.vertical(i, x, y), |j| j.0)
    }

    fn vertical_dy(&self, i: usize, x: f64, y: f64) -> f64 {
        self.jet(i, x, y).map_or_else(|| self.base.vertical_dy(i, x, y), |j| j.1)
    }

    fn vertical_dx(&self, i: usize, x: f64, y: f64) -> f64 {
        self.jet(i, x, y).map_or_else(|| self.base.vertical_dx(i, x, y), |j| j.2)
    }
}

/// `L_Π(F)`: on every vertical segment of `Π` the fibre map is replaced by the
/// affine map with the same endpoint images.
pub fn linearize_on_stripe<'a, G: FiberMap + ?Sized>(g: &'a G, stripe: &RoughStripe) -> Result<PerturbedMap<'a, G>> {
    let m = g.model();
    let probe = PerturbedMap::new(g);
    for k in 0..=VALIDATE_SAMPLES {
        let x = stripe.x.0 + (stripe.x.1 - stripe.x.0) * k as f64 / VALIDATE_SAMPLES as f64;
        let s = probe.segment(stripe, x);
        if !(s.v2 > s.v1) {
            return Err(Error::Construction(format!(
                "endpoint images out of order at x = {x}: {} ≥ {}",
                s.v1, s.v2
            )));
        }
    }
    let _ = m;
    PerturbedMap::new(g).with_patch(Patch {
        stripe: stripe.clone(),
        kind: PatchKind::Linearized,
    })
}

fn to_points(m: &MapModel, pts: &[(f64, f64)]) -> Vec<TorusPoint> {
    let chart = *m.chart();
    pts.iter().map(|&(x, y)| chart.point(x, y)).collect()
}

/// `sup ‖dG(p) − dH(p)‖` over the given chart points.
pub fn stripe_distance_on<G: FiberMap + ?Sized, H: FiberMap + ?Sized>(g: &G, h: &H, pts: &[(f64, f64)]) -> f64 {
    to_points(g.model(), pts)
        .par_iter()
        .map(|p| operator_norm(g.differential(p).sub(&h.differential(p))))
        .reduce(|| 0.0, f64::max)
}

/// `dist_Π(G, H)` on the default stripe sample.
pub fn stripe_distance<G: FiberMap + ?Sized, H: FiberMap + ?Sized>(g: &G, h: &H, stripe: &RoughStripe) -> f64 {
    stripe_distance_on(g, h, &stripe.samples(g.model(), STRIPE_FIBRES, FIBRE_POINTS, None))
}

/// `sup |G(p) − H(p)|` of the fibre maps over the given chart points.
pub fn stripe_c0_distance<G: FiberMap + ?Sized, H: FiberMap + ?Sized>(g: &G, h: &H, branch: usize, pts: &[(f64, f64)]) -> f64 {
    pts.par_iter()
        .map(|&(x, y)| (g.vertical(branch, x, y) - h.vertical(branch, x, y)).abs())
        .reduce(|| 0.0, f64::max)
}

/// `δ`: the largest diameter, over sampled fibres of the stripe, of the set
/// of differentials along the vertical segment.
pub fn vertical_oscillation<G: FiberMap + ?Sized>(g: &G, stripe: &RoughStripe) -> f64 {
    vertical_oscillation_with(g, stripe, FIBRE_POINTS)
}

/// [`vertical_oscillation`] with `ny` equally spaced points per fibre.
pub fn vertical_oscillation_with<G: FiberMap + ?Sized>(g: &G, stripe: &RoughStripe, ny: usize) -> f64 {
    let ny = ny.max(2);
    let m = g.model();
    let chart = *m.chart();
    (0..STRIPE_FIBRES)
        .into_par_iter()
        .map(|k| {
            let x = stripe.x.0 + (stripe.x.1 - stripe.x.0) * (k as f64 + 0.5) / STRIPE_FIBRES as f64;
            let (a, b) = (stripe.lower.eval(m, x).0, stripe.upper.eval(m, x).0);
            let jac: Vec<_> = (0..ny)
                .map(|j| g.differential(&chart.point(x, a + (b - a) * j as f64 / (ny - 1) as f64)))
                .collect();
            let mut diam: f64 = 0.0;
            for (u, ju) in jac.iter().enumerate() {
                for jv in &jac[u + 1..] {
                    diam = diam.max(operator_norm(ju.sub(jv)));
                }
            }
            diam
        })
        .reduce(|| 0.0, f64::max)
}

/// `dist_Π(F, L_Π(F)) ≤ √5·δ`.
pub fn check_delta_lemma<G: FiberMap + ?Sized>(g: &G, stripe: &RoughStripe) -> Result<Report> {
    let lin = linearize_on_stripe(g, stripe)?;
    let dist = stripe_distance(g, &lin, stripe);
    let delta = vertical_oscillation(g, stripe);
    let bound = 5f64.sqrt() * delta + DELTA_SLACK;
    let ratio = if delta > 0.0 { dist / delta } else { 0.0 };
    let mut r = Report::new("linearization on a stripe");
    r.push(
        Check::at_most("dist_Π(F, L_Π F) ≤ √5·δ", dist, bound)
            .with_detail(format!("δ = {delta:e}, ratio = {ratio:.6}")),
    );
    Ok(r)
}

/// The ρ-blend of `F_0` and `L_Π(F_0)` together with the collar width used.
pub struct Smoothing<'a, G: FiberMap + ?Sized> {
    pub map: PerturbedMap<'a, G>,
    pub alpha: f64,
    /// `sup |F − L_Π(F_0)|` on the stripe sample.
    pub c0_to_linear: f64,
}

/// Blend `L_Π(F_0)` into `F_0` across `α`-collars of `∂Π`, halving `α` from a
/// quarter of the minimal stripe width until the sup distance to `L_Π(F_0)`
/// is below `gamma`.
pub fn smooth_blend<'a, G: FiberMap + ?Sized>(g: &'a G, stripe: &RoughStripe, gamma: f64) -> Result<Smoothing<'a, G>> {
    let m = g.model();
    let lin = linearize_on_stripe(g, stripe)?;
    let mut alpha = stripe.min_width / 4.0;
    let mut best = f64::INFINITY;
    for _ in 0..ALPHA_LADDER {
        let map = PerturbedMap::new(g).with_patch(Patch {
            stripe: stripe.clone(),
            kind: PatchKind::Smoothed { alpha },
        })?;
        let pts = stripe.samples(m, STRIPE_FIBRES, FIBRE_POINTS, Some(alpha));
        let c0 = stripe_c0_distance(&map, &lin, stripe.branch, &pts);
        if c0 < gamma {
            return Ok(Smoothing {
                map,
                alpha,
                c0_to_linear: c0,
            });
        }
        best = best.min(c0);
        alpha /= 2.0;
    }
    Err(Error::Construction(format!(
        "no collar width reaches sup distance {gamma:e} to L_Π(F_0); best {best:e}"
    )))
}

/// Amplification, boundary and `γ` checks of a smoothing.
pub fn check_smoothing<G: FiberMap + ?Sized>(g: &G, stripe: &RoughStripe, gamma: f64) -> Result<Report> {
    let m = g.model();
    let s = smooth_blend(g, stripe, gamma)?;
    let lin = linearize_on_stripe(g, stripe)?;
    let pts = stripe.samples(m, STRIPE_FIBRES, FIBRE_POINTS, Some(s.alpha));
    let base = stripe_distance_on(g, &lin, &pts);
    let c1 = stripe_distance_on(g, &s.map, &pts).max(stripe_c0_distance(g, &s.map, stripe.branch, &pts));
    let ratio = if base > 0.0 { c1 / base } else { 0.0 };
    // the blend meets F_0 to first order on ∂Π
    let edge: Vec<(f64, f64)> = (0..STRIPE_FIBRES)
        .flat_map(|k| {
            let x = stripe.x.0 + (stripe.x.1 - stripe.x.0) * (k as f64 + 0.5) / STRIPE_FIBRES as f64;
            [(x, stripe.lower.eval(m, x).0), (x, stripe.upper.eval(m, x).0)]
        })
        .collect();
    let seam = stripe_distance_on(g, &s.map, &edge);
    let mut r = Report::new("smoothing on a stripe");
    r.push(
        Check::at_most("dist_C¹(F_0, F) ≤ C·dist_Π(F_0, L_Π F_0)", ratio, SMOOTHING_CONSTANT)
            .with_detail(format!("α = {:e}, dist_Π = {base:e}, dist_C¹ = {c1:e}", s.alpha)),
    );
    r.push(Check::new("sup |F − L_Π F_0| < γ", s.c0_to_linear < gamma, s.c0_to_linear, gamma));
    r.push(Check::at_most("F meets F_0 in C¹ on ∂Π", seam, 1e-8));
    Ok(r)
}

/// Random stripes of width at most `max_width` with affine or sinusoidal
/// boundaries of slope below `0.5`, inside the bands `RH_i`.
pub fn random_stripes(m: &MapModel, count: usize, max_width: f64, seed: u64) -> Result<Vec<RoughStripe>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &m.regions;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count * 100 {
        if out.len() == count {
            break;
        }
        let i = rng.random_range(0..2);
        let band = r.rh[i];
        let span = band.width() * rng.random_range(0.05..1.0);
        let x0 = rng.random_range(band.x.0..band.x.1 - span);
        let x = (x0, x0 + span);
        let width = max_width * rng.random_range(0.01..1.0);
        // keep the boundary excursion inside the band
        let tilt = band.height().min(0.25) / span * rng.random_range(-0.2..0.2);
        let tilt = tilt.clamp(-0.5, 0.5);
        let c = rng.random_range(band.y.0..band.y.1);
        let lower = if rng.random::<bool>() {
            Graph::Affine { c: c - tilt * x0, slope: tilt }
        } else {
            let freq = rng.random_range(1.0..8.0) * std::f64::consts::TAU / span;
            let amp = (0.4 / freq).min(0.1 * band.height());
            Graph::Sine { c, amp, freq, phase: rng.random_range(0.0..std::f64::consts::TAU) }
        };
        let upper = match &lower {
            Graph::Affine { c, slope } => Graph::Affine { c: c + width, slope: *slope },
            Graph::Sine { c, amp, freq, phase } => Graph::Sine { c: c + width, amp: *amp, freq: *freq, phase: *phase },
            _ => unreachable!(),
        };
        // candidates leaving the band are redrawn
        if let Ok(s) = RoughStripe::new(m, x, lower, upper) {
            out.push(s);
        }
    }
    if out.len() < count {
        return Err(Error::InvalidParameter(format!(
            "only {} of {count} random stripes of width ≤ {max_width:e} fit in the bands",
            out.len()
        )));
    }
    Ok(out)
}

/// The independent stripes of levels `n + 1 ..= n1` as patch stripes.
pub fn level_stripes(m: &MapModel, set: &StripeSet, n: usize, n1: usize) -> Result<Vec<RoughStripe>> {
    if n1 > set.m_max {
        return Err(Error::InvalidParameter(format!(
            "stripes are computed to level {}, not {n1}",
            set.m_max
        )));
    }
    set.stripes
        .iter()
        .filter(|s| s.independent && s.level > n && s.level <= n1)
        .map(|s| RoughStripe::from_region(m, s))
        .collect()
}

/// `F_{N1}`: linearize `F_0` successively on all independent stripes of
/// levels `N+1, …, N1`. Independent stripes are pairwise disjoint, so an
/// overlap is reported as a classification error.
pub fn linearize_levels<'a, G: FiberMap + ?Sized>(g: &'a G, set: &StripeSet, n: usize, n1: usize) -> Result<PerturbedMap<'a, G>> {
    if n1 < n {
        return Err(Error::InvalidParameter(format!("need N ≤ N1, got N = {n}, N1 = {n1}")));
    }
    let m = g.model();
    let mut map = PerturbedMap::new(g);
    for level in n + 1..=n1 {
        for stripe in level_stripes(m, set, level - 1, level)? {
            let single = linearize_on_stripe(g, &stripe)?;
            map = map
                .with_patch(single.patches.into_iter().next().expect("one patch"))
                .map_err(|e| Error::Construction(format!("independent stripes of level {level} overlap: {e}")))?;
        }
    }
    Ok(map)
}

/// Invariance checks of a level linearization: the curves of `W_k` are
/// unchanged, re-linearizing is the identity, and the class predicates hold.
pub fn check_levels<G: FiberMap + ?Sized>(g: &G, set: &StripeSet, map: &PerturbedMap<'_, G>, n: usize, n1: usize, grid: usize) -> Result<Report> {
    let m = g.model();
    let mut r = Report::new(format!("level linearization {n} → {n1}"));
    // W_k(L(F)) = W_k(F), sampled on every curve
    let mut curve_dev: f64 = 0.0;
    for (c, _) in &set.curves {
        for k in 0..=16 {
            let x = set.window.x.0 + set.window.width() * k as f64 / 16.0;
            let (a, _) = c.eval(g, x)?;
            let (b, _) = c.eval(map, x)?;
            curve_dev = curve_dev.max((a - b).abs());
        }
    }
    r.push(
        Check::at_most("W_k unchanged by the linearization", curve_dev, 1e-12)
            .with_detail(format!("{} curves", set.curves.len())),
    );
    // re-linearizing on every patched stripe changes nothing
    let stripes = level_stripes(m, set, n, n1)?;
    let mut relin: f64 = 0.0;
    let mut extra = Vec::new();
    for s in &stripes {
        let again = linearize_on_stripe(map, s)?;
        let pts = s.samples(m, 8, 9, None);
        relin = relin.max(stripe_c0_distance(map, &again, s.branch, &pts));
        extra.extend(to_points(m, &pts));
    }
    r.push(
        Check::at_most("linearized stripes are fixed by re-linearization", relin, 1e-12)
            .with_detail(format!("{} stripes", stripes.len())),
    );
    r.extend(check_delta_init(map, m.params.delta_init, grid, &extra));
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anosov::{build_model, LinearFiberMap, ModelParams};
    use std::sync::OnceLock;

    fn model() -> &'static MapModel {
        static M: OnceLock<MapModel> = OnceLock::new();
        M.get_or_init(|| build_model(&ModelParams::default()).unwrap())
    }

    /// Horizontal stripe over the whole band `i` at relative height `at` of
    /// `Q_i`, of relative width `width`.
    fn flat_stripe(m: &MapModel, i: usize, at: f64, width: f64) -> RoughStripe {
        let (lo, hi) = m.regions.q_i[i];
        let y0 = lo + at * (hi - lo);
        RoughStripe::new(
            m,
            m.regions.rh[i].x,
            Graph::Affine { c: y0, slope: 0.0 },
            Graph::Affine { c: y0 + width * (hi - lo), slope: 0.0 },
        )
        .unwrap()
    }

    fn band_height(m: &MapModel) -> f64 {
        m.regions.q_i[0].1 - m.regions.q_i[0].0
    }

    #[test]
    fn rho_profile() {
        assert_eq!((rho(0.0), rho(1.0), rho(0.5)), (0.0, 1.0, 0.5));
        assert_eq!(rho_deriv(0.5), RHO_MAX_SLOPE);
        assert_eq!(SMOOTHING_CONSTANT, 5.75);
    }

    #[test]
    fn stripe_validation() {
        let m = model();
        let r = &m.regions;
        let steep = RoughStripe::new(m, r.rh[0].x, Graph::Affine { c: 0.0, slope: 2.0 }, Graph::Affine { c: 0.1, slope: 2.0 });
        assert!(steep.is_err());
        let crossed = RoughStripe::new(m, r.rh[0].x, Graph::Affine { c: 2e-7, slope: 0.0 }, Graph::Affine { c: 1e-7, slope: 0.0 });
        assert!(crossed.is_err());
        let outside = RoughStripe::new(m, r.rh[0].x, Graph::Affine { c: 1e-3, slope: 0.0 }, Graph::Affine { c: 2e-3, slope: 0.0 });
        assert!(outside.is_err());
        assert_eq!(flat_stripe(m, 1, 0.5, 0.1).branch, 1);
        assert_eq!(flat_stripe(m, 0, 0.5, 0.1).branch, 0);
    }

    #[test]
    fn linearization_keeps_endpoint_images_and_averages_the_derivative() {
        let m = model();
        let s = flat_stripe(m, 0, 0.3, 0.2);
        let lin = linearize_on_stripe(m, &s).unwrap();
        for k in 0..1000 {
            let x = s.x.0 + (s.x.1 - s.x.0) * (k as f64 + 0.5) / 1000.0;
            let (a, b) = (s.lower.eval(m, x).0, s.upper.eval(m, x).0);
            assert!((lin.vertical(0, x, a) - m.vertical(0, x, a)).abs() <= 1e-12);
            assert!((lin.vertical(0, x, b) - m.vertical(0, x, b)).abs() <= 1e-12);
        }
        let x = 0.5 * (s.x.0 + s.x.1);
        let (lo, hi) = (s.lower.eval(m, x).0, s.upper.eval(m, x).0);
        // midpoint derivative equals the mean of the original one (Simpson quadrature)
        let n = 2000;
        let hstep = (hi - lo) / n as f64;
        let mut quad = m.vertical_dy(0, x, lo) + m.vertical_dy(0, x, hi);
        for j in 1..n {
            quad += m.vertical_dy(0, x, lo + j as f64 * hstep) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        let mean = quad * hstep / 3.0 / (hi - lo);
        let mid = lin.vertical_dy(0, x, 0.5 * (lo + hi));
        assert!((mid / mean - 1.0).abs() < 1e-6, "{mid} vs {mean}");
    }

    #[test]
    fn linear_maps_are_fixed_points() {
        let m = model();
        let flat = LinearFiberMap(m);
        let s = flat_stripe(m, 0, 0.2, 0.5);
        let lin = linearize_on_stripe(&flat, &s).unwrap();
        let pts = s.samples(m, 16, 16, None);
        assert!(stripe_distance_on(&flat, &lin, &pts) < 1e-9);
        assert!(vertical_oscillation(&flat, &s) == 0.0);
        assert!(check_delta_lemma(&flat, &s).unwrap().passed());
        let sm = smooth_blend(&flat, &s, 1e-6).unwrap();
        assert!(stripe_c0_distance(&flat, &sm.map, 0, &pts) < 1e-15);
    }

    #[test]
    fn locality_and_idempotence() {
        let m = model();
        let r = &m.regions;
        let s = flat_stripe(m, 0, 0.4, 0.2);
        let lin = linearize_on_stripe(m, &s).unwrap();
        let bh = band_height(m);
        for k in 0..200 {
            let x = r.rh[0].x.0 + r.rh[0].width() * (k as f64 + 0.5) / 200.0;
            for y in [r.q_i[0].0 + 0.39 * bh, r.q_i[0].0 + 0.61 * bh, r.q_i[1].0 + 0.5 * bh] {
                let i = if y < r.q_i[1].0 { 0 } else { 1 };
                assert_eq!(lin.vertical(i, x, y), m.vertical(i, x, y));
            }
        }
        let twice = linearize_on_stripe(&lin, &s).unwrap();
        let pts = s.samples(m, 16, 16, None);
        assert!(stripe_c0_distance(&lin, &twice, 0, &pts) < 1e-15);
        assert!(linearize_on_stripe(&lin, &s).unwrap().with_patch(twice.patches[0].clone()).is_err());
    }

    #[test]
    fn distances_are_metrics() {
        let m = model();
        let s = flat_stripe(m, 0, 0.4, 0.2);
        let lin = linearize_on_stripe(m, &s).unwrap();
        let sm = smooth_blend(m, &s, 1e-7).unwrap();
        assert_eq!(stripe_distance(m, m, &s), 0.0);
        let (ab, ba) = (stripe_distance(m, &lin, &s), stripe_distance(&lin, m, &s));
        assert_eq!(ab, ba);
        let ac = stripe_distance(m, &sm.map, &s);
        let bc = stripe_distance(&lin, &sm.map, &s);
        assert!(ab <= ac + bc + 1e-12);
    }

    #[test]
    fn delta_lemma_on_random_stripes() {
        let m = model();
        for s in random_stripes(m, 8, band_height(m) / 4.0, 11).unwrap() {
            let rep = check_delta_lemma(m, &s).unwrap();
            assert!(rep.passed(), "{rep}");
        }
    }

    #[test]
    fn thinner_stripes_oscillate_less() {
        let m = model();
        let wide = flat_stripe(m, 0, 0.3, 0.4);
        let thin = flat_stripe(m, 0, 0.3, 0.2);
        // the wide stripe's 127 sample heights contain the thin one's 64
        let (t, w) = (vertical_oscillation_with(m, &thin, 64), vertical_oscillation_with(m, &wide, 127));
        assert!(t <= w, "{t} > {w}");
    }

    #[test]
    fn smoothing_on_random_stripes() {
        let m = model();
        for s in random_stripes(m, 4, band_height(m) / 4.0, 12).unwrap() {
            let rep = check_smoothing(m, &s, 1e-6).unwrap();
            assert!(rep.passed(), "{rep}");
        }
    }
}
