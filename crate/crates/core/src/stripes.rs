//! The curves `W_m = H^{-m}(∂_h UK)` and the stripes of level `n` they cut
//! out, computed inside the window `Z = π_hor(R̃) × Q`.
//!
//! Inside `Z` the backward images of the horizontal edges are obtained by
//! transporting them through the two branches `RH_0`, `RH_1` only: a curve is
//! a word `w` of branches and a base edge `b`, and its height over `x` is
//! found by solving the monotone fibre maps backwards along the word. This
//! gives the `2^{m+1}` pieces of `W_m` met by orbits that stay in `UK` until
//! they reach `∂_h UK`, which are exactly the pieces bounding the stripes
//! whose points stay in `UK` until they leave it at time `n`.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anosov::FiberMap;
use crate::dynamics::exit_time;
use crate::error::{Error, Result};
use crate::horseshoe::{image_intersections, Polyline, Rect};
use crate::report::{Check, Report};
use crate::roots::solve_increasing;
use crate::torus::TorusPoint;

/// Number of segments of the horizontal sampling grid of every curve.
pub const W_GRID: usize = 4096;
/// Tolerance for equality of curves and for closure disjointness.
pub const GRID_TOL: f64 = 1e-13;
/// Lower bound for the vertical dilation of any map of the class.
pub const CLASS_DILATION: f64 = 1.1;

/// A piece of `W_m`: the preimage of edge `base` (0 = bottom, 1 = top of
/// `UK`) along the branch word `word` (`word[0]` is applied first).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainCurve {
    pub word: Vec<u8>,
    pub base: u8,
}

impl ChainCurve {
    /// Trailing letters equal to `base` do not change the curve (the edges
    /// are invariant under their own branch); drop them.
    pub fn canonical(&self) -> ChainCurve {
        let mut word = self.word.clone();
        while word.last() == Some(&self.base) {
            word.pop();
        }
        ChainCurve { word, base: self.base }
    }

    /// First level at which the curve appears.
    pub fn level(&self) -> usize {
        self.canonical().word.len()
    }

    /// Position of `y` relative to the curve over `x`, decided forward: the
    /// fibre maps of the word are increasing, so `y` lies below the curve iff
    /// its image along the word lies below the edge (or leaves a band `RQ_i`
    /// downwards on the way).
    pub fn side<G: FiberMap + ?Sized>(&self, g: &G, x: f64, y: f64) -> Ordering {
        let m = g.model();
        let ls = m.lambda_s();
        let (mut x, mut y) = (x, y);
        for &i in &self.word {
            let i = i as usize;
            let (lo, hi) = m.regions.rq[i];
            if y < lo {
                return Ordering::Less;
            }
            if y > hi {
                return Ordering::Greater;
            }
            y = g.vertical(i, x, y);
            x = m.regions.branch_x(i, x, ls);
        }
        let edge = if self.base == 0 { m.regions.q.0 } else { m.regions.q.1 };
        y.total_cmp(&edge)
    }

    /// Height and slope of the curve over `x ∈ π_hor(R̃)`.
    pub fn eval<G: FiberMap + ?Sized>(&self, g: &G, x: f64) -> Result<(f64, f64)> {
        let m = g.model();
        let ls = m.lambda_s();
        let mut xs = Vec::with_capacity(self.word.len() + 1);
        xs.push(x);
        for &i in &self.word {
            let prev = *xs.last().unwrap();
            xs.push(m.regions.branch_x(i as usize, prev, ls));
        }
        let mut y = if self.base == 0 { m.regions.q.0 } else { m.regions.q.1 };
        let mut slope = 0.0;
        for (k, &i) in self.word.iter().enumerate().rev() {
            let i = i as usize;
            let xk = xs[k];
            let (lo, hi) = m.regions.rq[i];
            let target = y;
            y = solve_increasing(|t| g.vertical(i, xk, t), |t| g.vertical_dy(i, xk, t), lo, hi, target, 0.0)?;
            slope = (slope * ls - g.vertical_dx(i, xk, y)) / g.vertical_dy(i, xk, y);
        }
        Ok((y, slope))
    }
}

/// What a region between consecutive curves of `W_m` is at level `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionKind {
    /// A stripe of level `level`: its orbit stays in `UK` before time `level`
    /// and is outside `UK` at time `level`.
    Stripe { level: usize },
    /// Still inside `UK` after `m` steps (a depth-`m` cylinder of the horseshoe).
    Cylinder,
}

/// A stripe: region of the window between two chain curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripeRegion {
    pub level: usize,
    pub lower: ChainCurve,
    pub upper: ChainCurve,
    pub lower_graph: Polyline,
    pub upper_graph: Polyline,
    /// Not contained in another stripe of a level in `(n_base, level)`.
    pub independent: bool,
}

impl StripeRegion {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (lo, hi) = self.lower_graph.x_range();
        x >= lo && x <= hi && y > self.lower_graph.eval(x) && y < self.upper_graph.eval(x)
    }

    pub fn min_width(&self) -> f64 {
        self.lower_graph
            .ys
            .iter()
            .zip(&self.upper_graph.ys)
            .map(|(a, b)| b - a)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_width(&self) -> f64 {
        self.lower_graph
            .ys
            .iter()
            .zip(&self.upper_graph.ys)
            .map(|(a, b)| b - a)
            .fold(0.0, f64::max)
    }
}

/// The curves `W_0 ⊂ … ⊂ W_{m_max}` inside the window and all stripes of
/// levels `1..=m_max` bounded by them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripeSet {
    pub m_max: usize,
    pub window: Rect,
    /// Canonical curves with their sampled graphs, ordered bottom to top.
    pub curves: Vec<(ChainCurve, Polyline)>,
    /// Largest `|slope|` of every curve, from the implicit derivative.
    pub max_slopes: Vec<f64>,
    pub stripes: Vec<StripeRegion>,
    /// Regions still inside `UK` after `level` steps: `(level, lower, upper)`
    /// with indices into `curves`.
    pub cylinders: Vec<(usize, usize, usize)>,
}

impl StripeSet {
    /// Indices into `curves` of the pieces of `W_m` from edge `base`.
    pub fn pieces(&self, m: usize, base: u8) -> Vec<usize> {
        (0..self.curves.len())
            .filter(|&k| self.curves[k].0.base == base && self.curves[k].0.level() <= m)
            .collect()
    }

    pub fn stripes_of_level(&self, n: usize) -> impl Iterator<Item = &StripeRegion> {
        self.stripes.iter().filter(move |s| s.level == n)
    }

    pub fn max_slope(&self) -> f64 {
        self.max_slopes.iter().copied().fold(0.0, f64::max)
    }
}

/// The window `π_hor(R̃) × Q`.
pub fn window<G: FiberMap + ?Sized>(g: &G) -> Rect {
    let r = &g.model().regions;
    Rect::new(r.rt.x, r.q)
}

/// Compute `W_m` for `m ≤ m_max` and classify the regions between
/// consecutive curves. Stripes of levels `> n_base` are tagged
/// independent unless nested in a stripe of a level in `(n_base, level)`.
pub fn compute_w<G: FiberMap + ?Sized>(g: &G, m_max: usize, n_base: usize) -> Result<StripeSet> {
    if m_max < 1 {
        return Err(Error::InvalidParameter("m_max must be at least 1".into()));
    }
    if m_max > 16 {
        return Err(Error::InvalidParameter(format!("m_max = {m_max} would need 2^{} curves", m_max + 1)));
    }
    let m = g.model();
    let z = window(g);
    // F(UK) ∩ UK has exactly the two branch components, so every piece of
    // W_m met by an orbit that stays in UK before reaching ∂_h UK is found
    // by transport through RH_0 and RH_1
    let comps = image_intersections(&m.linear, m.chart(), &m.regions.uk, &m.regions.uk);
    if comps.len() != 2 {
        return Err(Error::Geometry(format!(
            "F(UK) ∩ UK has {} components instead of the two branches",
            comps.len()
        )));
    }
    let mut curves: Vec<ChainCurve> = Vec::new();
    for len in 0..=m_max {
        for b in 0..2u8 {
            for idx in 0..(1u64 << len) {
                let word: Vec<u8> = (0..len).map(|k| ((idx >> (len - 1 - k)) & 1) as u8).collect();
                let c = ChainCurve { word, base: b }.canonical();
                if c.word.len() == len {
                    curves.push(c);
                }
            }
        }
    }
    let xc = 0.5 * (m.regions.uk.x.0 + m.regions.uk.x.1);
    let sampled: Vec<(ChainCurve, Polyline, f64, f64)> = curves
        .into_par_iter()
        .map(|c| {
            let mut ys = Vec::with_capacity(W_GRID + 1);
            let mut slope: f64 = 0.0;
            let dx = z.width() / W_GRID as f64;
            for k in 0..=W_GRID {
                let (y, s) = c.eval(g, z.x.0 + dx * k as f64)?;
                ys.push(y);
                slope = slope.max(s.abs());
            }
            let mid = c.eval(g, xc)?.0;
            Ok((c, Polyline { x0: z.x.0, dx, ys }, slope, mid))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sampled = sampled;
    sampled.sort_by(|a, b| a.3.total_cmp(&b.3));
    for (_, _, s, _) in &sampled {
        if !(*s < 1.0) {
            return Err(Error::Geometry(format!("a W-curve has slope {s} ≥ 1 (cone violation)")));
        }
    }

    // regions between consecutive curves of each level
    let chart = *m.chart();
    let mut stripes = Vec::new();
    let mut cylinders = Vec::new();
    for level in 1..=m_max {
        let idx: Vec<usize> = (0..sampled.len()).filter(|&k| sampled[k].0.level() <= level).collect();
        for pair in idx.windows(2) {
            let (a, b) = (&sampled[pair[0]], &sampled[pair[1]]);
            let mid = chart.point(xc, 0.5 * (a.3 + b.3));
            let kind = match exit_time(g, &mid, level as u64) {
                Some(e) if e as usize == level => RegionKind::Stripe { level },
                Some(_) => continue,
                None => RegionKind::Cylinder,
            };
            match kind {
                RegionKind::Stripe { level } => stripes.push(StripeRegion {
                    level,
                    lower: a.0.clone(),
                    upper: b.0.clone(),
                    lower_graph: a.1.clone(),
                    upper_graph: b.1.clone(),
                    independent: true,
                }),
                RegionKind::Cylinder => cylinders.push((level, pair[0], pair[1])),
            }
        }
    }
    // dependent: contained in a stripe of a level in (n_base, level)
    let snapshot = stripes.clone();
    for s in stripes.iter_mut() {
        s.independent = s.level <= n_base
            || !snapshot.iter().any(|t| {
                t.level > n_base && t.level < s.level && nested(s, t)
            });
    }
    Ok(StripeSet {
        m_max,
        window: z,
        max_slopes: sampled.iter().map(|s| s.2).collect(),
        curves: sampled.into_iter().map(|(c, p, _, _)| (c, p)).collect(),
        stripes,
        cylinders,
    })
}

/// `inner ⊂ outer` on the sample grid (up to `GRID_TOL`).
fn nested(inner: &StripeRegion, outer: &StripeRegion) -> bool {
    (0..inner.lower_graph.ys.len()).all(|k| {
        inner.lower_graph.ys[k] >= outer.lower_graph.ys[k] - GRID_TOL
            && inner.upper_graph.ys[k] <= outer.upper_graph.ys[k] + GRID_TOL
    })
}

/// Closures disjoint on the sample grid, with a gap of at least `GRID_TOL`.
fn closure_disjoint(a: &StripeRegion, b: &StripeRegion) -> bool {
    let below = (0..a.lower_graph.ys.len()).all(|k| a.upper_graph.ys[k] < b.lower_graph.ys[k] - GRID_TOL);
    let above = (0..a.lower_graph.ys.len()).all(|k| b.upper_graph.ys[k] < a.lower_graph.ys[k] - GRID_TOL);
    below || above
}

/// Total arclength of `{base + s·e_u : s ∈ [s0, s1]}` inside lifts of `RH_0 ∪ RH_1`.
pub fn band_arclength<G: FiberMap + ?Sized>(g: &G, base: &TorusPoint, s0: f64, s1: f64) -> f64 {
    let m = g.model();
    let chart = m.chart();
    let (lo, hi) = (s0.min(s1), s0.max(s1));
    let d = base.displacement_from(&chart.anchor);
    let (ex, ey) = (chart.ex(), chart.ey());
    let xs = |k: [f64; 2]| (d[0] + k[0]) * ex[0] + (d[1] + k[1]) * ex[1];
    let ys = |k: [f64; 2]| (d[0] + k[0]) * ey[0] + (d[1] + k[1]) * ey[1];
    // along e_u, the lattice vector (n1, n2) advances by n1·e_u[0] + n2·e_u[1]
    // and across by n1·e_s[0] + n2·e_s[1]; scan n1, solve n2 for the window
    let eu = crate::torus::E_U;
    let es = crate::torus::E_S;
    let reach = hi - lo + 4.0;
    let n1_span = (reach / (eu[0] - eu[1] * es[0] / es[1]).abs()).ceil() as i64 + 4;
    let centre = -(lo + hi) * 0.5;
    let n1_centre = (centre / (eu[0] - eu[1] * es[0] / es[1])).round() as i64;
    let mut total = 0.0;
    for n1 in (n1_centre - n1_span)..=(n1_centre + n1_span) {
        let n2c = (-(d[0] + n1 as f64) * es[0] / es[1] - d[1]).round() as i64;
        for n2 in (n2c - 1)..=(n2c + 1) {
            let k = [n1 as f64, n2 as f64];
            let x = xs(k);
            if !(m.regions.rt.x.0..=m.regions.rt.x.1).contains(&x) {
                continue;
            }
            // local y = y0 + sy·s along the line
            let y0 = ys(k);
            for rh in &m.regions.rh {
                let (a, b) = (
                    chart.sy * (rh.y.0 - y0),
                    chart.sy * (rh.y.1 - y0),
                );
                let (a, b) = (a.min(b), a.max(b));
                let len = b.min(hi) - a.max(lo);
                if len > 0.0 {
                    total += len;
                }
            }
        }
    }
    total
}

/// The level threshold: least `N` such that for every class map `H`,
/// `H^{-n}(∂_v UK)` stays in a ball around `q` disjoint from `R̃` and the
/// frame for all `n ≥ N`. The vertical edges of `UK` lie on `W^u(q)`; the
/// segment of `W^u(q)` from `q` to an edge contracts under `H^{-1}` by
/// `1/λ_u` off the bands and by at most `1/1.1` inside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelThreshold {
    pub l_lev: usize,
    /// Bound on the arclength of the preimage segment after each step.
    pub radii: Vec<f64>,
    /// Distance from `q` to the frame ∪ `R̃`.
    pub clearance: f64,
}

pub fn level_threshold<G: FiberMap + ?Sized>(g: &G) -> Result<LevelThreshold> {
    let m = g.model();
    let q = m.q_point();
    let chart = m.chart();
    let bbox = m.frame.bounding_box().widened(0.0, 0.0);
    let hull = Rect::new(
        (bbox.x.0.min(m.regions.rt.x.0), bbox.x.1.max(m.regions.rt.x.1)),
        (bbox.y.0.min(m.regions.rt.y.0), bbox.y.1.max(m.regions.rt.y.1)),
    );
    let clearance = crate::horseshoe::torus_distance_to_rect(chart, &hull, &q);
    let lam = m.linear.lambda_u;
    let mut radii = Vec::new();
    for (k, &t) in m.widening.edge_t.iter().enumerate() {
        let _ = k;
        let mut len = t.abs() + m.regions.h();
        let dir = t.signum();
        let mut n = 0;
        loop {
            if len < clearance {
                break;
            }
            if n > 64 {
                return Err(Error::Geometry("preimages of ∂_v UK do not shrink below the clearance of q".into()));
            }
            let b = band_arclength(g, &q, 0.0, dir * len);
            len = (len - b) / lam + b / CLASS_DILATION;
            n += 1;
            if radii.len() < n {
                radii.push(len);
            } else {
                radii[n - 1] = radii[n - 1].max(len);
            }
        }
    }
    Ok(LevelThreshold {
        l_lev: radii.len(),
        radii,
        clearance,
    })
}

/// Stripe laws: containment `W_{m+1} ⊇ W_m`, slopes below one, nesting
/// (Markov property) for levels above `l`, coverage of chain-resolved points.
pub fn check_stripe_laws<G: FiberMap + ?Sized>(g: &G, set: &StripeSet, l: usize, coverage_samples: usize) -> Report {
    let mut report = Report::new("stripe laws");
    let m = g.model();

    // W_{m+1} ⊇ W_m: every curve re-evaluated with a base letter appended equals itself
    let mut mono: f64 = 0.0;
    for (c, poly) in &set.curves {
        let mut longer = c.word.clone();
        longer.push(c.base);
        let extended = ChainCurve { word: longer, base: c.base };
        for k in (0..poly.ys.len()).step_by(64) {
            if let Ok((y, _)) = extended.eval(g, poly.x_at(k)) {
                mono = mono.max((y - poly.ys[k]).abs());
            } else {
                mono = f64::INFINITY;
            }
        }
    }
    report.push(Check::at_most("W_{m+1} ⊇ W_m", mono, GRID_TOL).with_detail(format!("{} curves", set.curves.len())));
    report.push(Check::new("all W-curve slopes < 1", set.max_slope() < 1.0, set.max_slope(), 1.0));

    let deep: Vec<&StripeRegion> = set.stripes.iter().filter(|s| s.level > l).collect();
    let mut violations = 0usize;
    for (i, a) in deep.iter().enumerate() {
        for b in deep.iter().skip(i + 1) {
            if a.level == b.level {
                if !closure_disjoint(a, b) && !(a.lower == b.lower && a.upper == b.upper) {
                    violations += 1;
                }
                continue;
            }
            let (lo, hi) = if a.level < b.level { (*a, *b) } else { (*b, *a) };
            if !(nested(hi, lo) || closure_disjoint(hi, lo)) {
                violations += 1;
            }
        }
    }
    report.push(
        Check::at_most("nested or closure-disjoint", violations as f64, 0.0)
            .with_detail(format!("{} stripes of levels {}..={}", deep.len(), l + 1, set.m_max)),
    );

    // coverage: points of the level-(n-1) cylinders whose orbit leaves UK
    // at time n lie in a stripe of level n
    let chart = *m.chart();
    let uk = m.regions.uk;
    let per_region = (coverage_samples / set.cylinders.len().max(1)).max(4);
    let side = (per_region as f64).sqrt().ceil() as usize;
    let counts: Vec<(usize, usize)> = set
        .cylinders
        .par_iter()
        .filter(|c| c.0 + 1 > l && c.0 < set.m_max)
        .map(|&(_, lo, hi)| {
            let (mut resolved, mut uncovered) = (0, 0);
            for i in 0..side {
                let x = uk.x.0 + uk.width() * (i as f64 + 0.5) / side as f64;
                let (ylo, yhi) = (set.curves[lo].1.eval(x), set.curves[hi].1.eval(x));
                for j in 0..side {
                    let y = ylo + (yhi - ylo) * (j as f64 + 0.5) / side as f64;
                    if let Some(e) = exit_time(g, &chart.point(x, y), set.m_max as u64) {
                        let e = e as usize;
                        if e > l {
                            resolved += 1;
                            if !set.stripes_of_level(e).any(|s| s.contains(x, y)) {
                                uncovered += 1;
                            }
                        }
                    }
                }
            }
            (resolved, uncovered)
        })
        .collect();
    let resolved: usize = counts.iter().map(|c| c.0).sum();
    let uncovered: usize = counts.iter().map(|c| c.1).sum();
    report.push(
        Check::at_most("stripes cover chain-resolved segments", uncovered as f64, 0.0)
            .with_detail(format!("{resolved} resolved sample points")),
    );
    report.push(Check::above("coverage sample is non-trivial", resolved as f64, 0.0));
    report
}

/// Property 8 of the class: for `n ≥ L`, `H^{-n}(∂_v UK)` misses `R`.
/// Checked from the threshold certificate and by direct preimages of the
/// edge endpoints at levels `L..L+extra`.
pub fn check_vertical_edges<G: FiberMap + ?Sized>(g: &G, lt: &LevelThreshold, extra: usize) -> Check {
    let m = g.model();
    let chart = m.chart();
    let rt = m.regions.rt;
    let mut min_dist = f64::INFINITY;
    for x in [m.regions.uk.x.0, m.regions.uk.x.1] {
        for y in [m.regions.q.0, 0.5 * (m.regions.q.0 + m.regions.q.1), m.regions.q.1] {
            let mut p = chart.point(x, y);
            for n in 1..=(lt.l_lev + extra) {
                p = match g.apply_inverse(&p) {
                    Ok(p) => p,
                    Err(_) => return Check::new("H^{-n}(∂_v UK) ∩ R = ∅ for n ≥ L", false, f64::NAN, 0.0),
                };
                if n >= lt.l_lev {
                    min_dist = min_dist.min(crate::horseshoe::torus_distance_to_rect(chart, &rt, &p));
                }
            }
        }
    }
    let radius = *lt.radii.last().unwrap_or(&f64::INFINITY);
    Check::new(
        "H^{-n}(∂_v UK) ∩ R = ∅ for n ≥ L",
        radius < lt.clearance && min_dist > 0.0,
        min_dist,
        0.0,
    )
    .with_detail(format!(
        "L = {}, preimage radius {radius:e} < clearance {:.4}",
        lt.l_lev, lt.clearance
    ))
}
