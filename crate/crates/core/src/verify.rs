//! Sampled verification of `F_init` and of maps of the class built around it.
//!
//! All checks run on deterministic grids split into three equal parts: the
//! whole torus, the rectangle `R̃`, and the two modified bands `RH_0`, `RH_1`
//! where the map differs from `F_Lin`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::anosov::{operator_norm, FiberMap, Jacobian2, MapModel};
use crate::horseshoe::{image_intersections, image_matches, torus_distance_to_rect, Rect};
use crate::cantor::words_of_length;
use crate::linear::{apply_linear, fixed_points_exact};
use crate::report::{Check, Report};
use crate::torus::{TorusPoint, E_S, E_U};

/// Tolerance for pointwise agreement of two formulas that should coincide.
pub const AGREE_TOL: f64 = 1e-12;
/// Tolerance for boundary Hausdorff distances of images of rectangles.
pub const HAUSDORFF_TOL: f64 = 1e-10;
/// Minimum vertical dilation required of `F_init`.
pub const MIN_DILATION: f64 = 1.2;
/// Minimum vertical dilation required of class members.
pub const CLASS_MIN_DILATION: f64 = 1.1;
/// Samples per rectangle edge in boundary checks.
const EDGE_SAMPLES: usize = 4000;

fn grid_in(rect: &Rect, nx: usize, ny: usize, chart: &crate::torus::LocalChart) -> Vec<TorusPoint> {
    let mut pts = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        let x = rect.x.0 + rect.width() * (i as f64 + 0.5) / nx as f64;
        for j in 0..ny {
            let y = rect.y.0 + rect.height() * (j as f64 + 0.5) / ny as f64;
            pts.push(chart.point(x, y));
        }
    }
    pts
}

/// Deterministic verification grid of about `n` points: a third on the
/// torus, a third on `R̃` and a third on the bands `RH_0 ∪ RH_1`.
pub fn verification_grid(m: &MapModel, n: usize) -> Vec<TorusPoint> {
    let third = (n / 3).max(1);
    let side = (third as f64).sqrt().ceil() as usize;
    let band_side = ((third / 2) as f64).sqrt().ceil().max(1.0) as usize;
    let mut pts = Vec::with_capacity(3 * side * side);
    for i in 0..side {
        for j in 0..side {
            pts.push(TorusPoint::new(
                (i as f64 + 0.5) / side as f64,
                (j as f64 + 0.5) / side as f64,
            ));
        }
    }
    pts.extend(grid_in(&m.regions.rt, side, side, m.chart()));
    for rh in &m.regions.rh {
        pts.extend(grid_in(rh, band_side, band_side, m.chart()));
    }
    pts
}

/// Uniform random points split like [`verification_grid`].
pub fn random_points(m: &MapModel, n: usize, seed: u64) -> Vec<TorusPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chart = m.chart();
    (0..n)
        .map(|k| match k % 3 {
            0 => TorusPoint::new(rng.random(), rng.random()),
            1 => {
                let r = m.regions.rt;
                chart.point(rng.random_range(r.x.0..r.x.1), rng.random_range(r.y.0..r.y.1))
            }
            _ => {
                let r = m.regions.rh[rng.random_range(0..2usize)];
                chart.point(rng.random_range(r.x.0..r.x.1), rng.random_range(r.y.0..r.y.1))
            }
        })
        .collect()
}

/// Points on the boundary of a chart rectangle.
fn edge_points(rect: &Rect, n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(4 * (n + 1));
    for k in 0..=n {
        let s = k as f64 / n as f64;
        let x = rect.x.0 + s * rect.width();
        let y = rect.y.0 + s * rect.height();
        out.extend([(x, rect.y.0), (x, rect.y.1), (rect.x.0, y), (rect.x.1, y)]);
    }
    out
}

fn boundary_distance(rect: &Rect, x: f64, y: f64) -> f64 {
    if rect.contains(x, y) {
        (x - rect.x.0)
            .min(rect.x.1 - x)
            .min(y - rect.y.0)
            .min(rect.y.1 - y)
    } else {
        rect.distance_to(x, y)
    }
}

/// Largest value of `f` over `pts` and the first point attaining it.
fn worst<F>(pts: &[TorusPoint], f: F) -> (f64, Option<TorusPoint>)
where
    F: Fn(&TorusPoint) -> f64 + Sync,
{
    pts.par_iter()
        .map(|p| (f(p), Some(*p)))
        .reduce(
            || (f64::NEG_INFINITY, None),
            |a, b| if b.0 > a.0 || b.0.is_nan() && !a.0.is_nan() { b } else { a },
        )
}

/// Smallest value of `f` over `pts` and the first point attaining it.
fn least<F>(pts: &[TorusPoint], f: F) -> (f64, Option<TorusPoint>)
where
    F: Fn(&TorusPoint) -> f64 + Sync,
{
    let (v, p) = worst(pts, |p| -f(p));
    (-v, p)
}

fn in_bands(m: &MapModel, p: &TorusPoint) -> bool {
    let (x, y) = m.chart().local(p);
    m.regions.rh_branch(x, y).is_some()
}

fn outside_rt(m: &MapModel, p: &TorusPoint) -> bool {
    torus_distance_to_rect(m.chart(), &m.regions.rt, p) > 0.0
}

/// Agreement with `F_Lin` outside `R̃` (exact: zero difference expected).
fn check_linear_outside<G: FiberMap + ?Sized>(g: &G, pts: &[TorusPoint], name: &str) -> Check {
    let m = g.model();
    let outside: Vec<TorusPoint> = pts.iter().copied().filter(|p| outside_rt(m, p)).collect();
    let (v, p) = worst(&outside, |p| g.apply(p).distance(&apply_linear(&m.linear, p)));
    Check::at_most(name, v, 0.0)
        .with_detail(format!("{} points outside R̃", outside.len()))
        .with_counterexample(p)
}

/// Vertical fibres of `R̃` go to vertical fibres: on each branch `RH_i`
/// the chart abscissa of the image does not depend on the height.
fn check_fibres<G: FiberMap + ?Sized>(g: &G, fibres: usize, per_fibre: usize, name: &str) -> Check {
    let m = g.model();
    let chart = *m.chart();
    let r = &m.regions;
    let spread: Vec<(f64, TorusPoint)> = (0..fibres)
        .into_par_iter()
        .map(|k| {
            let x = r.rt.x.0 + r.rt.width() * (k as f64 + 0.5) / fibres as f64;
            let mut worst = 0.0f64;
            for rq in &r.rq {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for j in 0..per_fibre {
                    let y = rq.0 + (rq.1 - rq.0) * j as f64 / (per_fibre - 1) as f64;
                    let xi = chart.local(&g.apply(&chart.point(x, y))).0;
                    lo = lo.min(xi);
                    hi = hi.max(xi);
                }
                worst = worst.max(hi - lo);
            }
            (worst, chart.point(x, 0.0))
        })
        .collect();
    let (v, p) = spread
        .iter()
        .fold((0.0, None), |acc, &(s, p)| if s > acc.0 { (s, Some(p)) } else { acc });
    Check::at_most(name, v, AGREE_TOL)
        .with_detail(format!("{fibres} fibres × {per_fibre} points per branch"))
        .with_counterexample(p)
}

/// `G(UK) ∩ UK = UV_0 ∪ UV_1`, checked by rectangle arithmetic of the
/// linear fibre permutation and by sampling images of `UK` and preimages of
/// `UV_i`.
fn check_uk_intersection<G: FiberMap + ?Sized>(g: &G, n: usize, name: &str) -> (Check, Check) {
    let m = g.model();
    let chart = *m.chart();
    let r = &m.regions;
    let components = image_intersections(&m.linear, &chart, &r.uk, &r.uk);
    let rect_ok = components.len() == 2 && image_matches(&m.linear, &chart, &r.uk, &r.uk, &r.uv, AGREE_TOL);
    let count = Check::new(format!("{name}: component count"), rect_ok, components.len() as f64, 2.0);

    let side = (n as f64).sqrt().ceil() as usize;
    let mut pts = grid_in(&r.uk, side, side, &chart);
    pts.extend(edge_points(&r.uk, EDGE_SAMPLES).into_iter().map(|(x, y)| chart.point(x, y)));
    // forward: image points inside UK lie in UV_0 ∪ UV_1
    let (fwd, pf) = worst(&pts, |p| {
        let (x, y) = chart.local(&g.apply(p));
        if r.uk.contains(x, y) {
            r.uv[0].distance_to(x, y).min(r.uv[1].distance_to(x, y))
        } else {
            0.0
        }
    });
    // backward: points of UV_i have preimages in UK
    let mut vpts = Vec::new();
    for uv in &r.uv {
        vpts.extend(grid_in(uv, side / 4 + 1, side / 4 + 1, &chart));
        vpts.extend(edge_points(uv, EDGE_SAMPLES).into_iter().map(|(x, y)| chart.point(x, y)));
    }
    let (bwd, pb) = worst(&vpts, |p| match g.apply_inverse(p) {
        Ok(q) => {
            let (x, y) = chart.local(&q);
            r.uk.distance_to(x, y)
        }
        Err(_) => f64::INFINITY,
    });
    let sampled = Check::at_most(format!("{name}: sampled"), fwd.max(bwd), HAUSDORFF_TOL)
        .with_detail(format!("forward {fwd:e}, backward {bwd:e}"))
        .with_counterexample(if fwd >= bwd { pf } else { pb });
    (count, sampled)
}

/// Run the seven-item suite for `F_init` on a grid of about `n` points.
pub fn verify_finit(m: &MapModel, n: usize) -> Report {
    let mut report = Report::new("F_init verification");
    let chart = *m.chart();
    let r = &m.regions;
    let grid = verification_grid(m, n);

    // (1) F_init = F_Bow on UH_0 ∪ UH_1
    let mut uh_pts = Vec::new();
    let side = ((n / 6).max(1) as f64).sqrt().ceil() as usize;
    for uh in &r.uh {
        uh_pts.extend(grid_in(uh, side, side, &chart));
        uh_pts.extend(edge_points(uh, EDGE_SAMPLES).into_iter().map(|(x, y)| chart.point(x, y)));
    }
    let (v1, p1) = worst(&uh_pts, |p| {
        let (x, y) = chart.local(p);
        let i = if y < 0.5 * r.h() { 0 } else { 1 };
        let img = chart.local(&m.apply(p));
        let bow = m.f_bow_local(i, x, y);
        ((img.0 - bow.0).abs()).max((img.1 - bow.1).abs())
    });
    report.push(
        Check::at_most("F_init = F_Bow on UH_0 ∪ UH_1", v1, AGREE_TOL)
            .with_detail(format!("{} points", uh_pts.len()))
            .with_counterexample(p1),
    );

    // (2) F_init = F_Lin outside R̃
    report.push(check_linear_outside(m, &grid, "F_init = F_Lin outside R̃"));

    // (3) F_init(UH_i) = UV_i
    let mut v3: f64 = 0.0;
    let mut p3 = None;
    for i in 0..2 {
        for (x, y) in edge_points(&r.uh[i], EDGE_SAMPLES) {
            let (ix, iy) = chart.local(&m.apply(&chart.point(x, y)));
            let d = boundary_distance(&r.uv[i], ix, iy);
            if d > v3 {
                v3 = d;
                p3 = Some(chart.point(x, y));
            }
        }
        for (x, y) in edge_points(&r.uv[i], EDGE_SAMPLES) {
            let d = match m.apply_inverse(&chart.point(x, y)) {
                Ok(q) => {
                    let (qx, qy) = chart.local(&q);
                    boundary_distance(&r.uh[i], qx, qy)
                }
                Err(_) => f64::INFINITY,
            };
            if d > v3 {
                v3 = d;
                p3 = Some(chart.point(x, y));
            }
        }
    }
    report.push(
        Check::at_most("F_init(UH_i) = UV_i", v3, HAUSDORFF_TOL)
            .with_detail("boundary Hausdorff distance, both directions")
            .with_counterexample(p3),
    );

    // (4) F_init(UK) ∩ UK = UV_0 ∪ UV_1
    let (count, sampled) = check_uk_intersection(m, n / 10, "F_init(UK) ∩ UK = UV_0 ∪ UV_1");
    report.push(count);
    report.push(sampled);

    // (5) vertical fibres are preserved
    report.push(check_fibres(m, 1000, 64, "vertical fibres map to vertical fibres"));

    // (6) vertical dilation
    let band: Vec<TorusPoint> = grid.iter().copied().filter(|p| in_bands(m, p)).collect();
    let rest: Vec<TorusPoint> = grid.iter().copied().filter(|p| !in_bands(m, p)).collect();
    let (d_in, pin) = least(&band, |p| m.differential(p).a2);
    let (d_out, pout) = least(&rest, |p| m.differential(p).a2);
    report.push(
        Check::at_least("vertical dilation ≥ 1.2", d_in.min(d_out), MIN_DILATION)
            .with_detail(format!(
                "min a2 {d_in:.6} in the bands ({} points), {d_out:.6} elsewhere ({} points)",
                band.len(),
                rest.len()
            ))
            .with_counterexample(if d_in <= d_out { pin } else { pout }),
    );

    // (7) strict cone margin
    let (gamma, p7) = least(&grid, |p| m.differential(p).cone_margin());
    report.push(
        Check::above("strict cone margin", gamma, 0.0)
            .with_detail(format!("{} points", grid.len()))
            .with_counterexample(p7),
    );

    // budget for |δ| used by the cone argument
    let (dmax, pd) = worst(&grid, |p| m.differential(p).delta.abs());
    report.push(
        Check::new("cone budget |delta| < c", dmax < m.params.cone_c, dmax, m.params.cone_c)
            .with_counterexample(pd),
    );
    report
}

/// The numeric class predicates for a map `g` built over `F_init`, checked
/// on a grid of about `n` points plus `extra` (typically points of patches).
pub fn check_delta_init<G: FiberMap + ?Sized>(g: &G, delta_init: f64, n: usize, extra: &[TorusPoint]) -> Report {
    let m = g.model();
    let l = m.params.lipschitz_l;
    let mut report = Report::new("class predicates");
    let mut grid = verification_grid(m, n);
    grid.extend_from_slice(extra);

    let (norm, pn) = worst(&grid, |p| g.differential(p).norm());
    report.push(Check::new("‖dG‖ < L", norm < l, norm, l).with_counterexample(pn));
    let (inorm, pi) = worst(&grid, |p| g.differential(p).inverse().norm());
    report.push(Check::new("‖dG⁻¹‖ < L", inorm < l, inorm, l).with_counterexample(pi));
    let (slope, ps) = worst(&grid, |p| g.differential(p).horizontal_preimage_slope());
    report.push(Check::at_most("dG(C_H) ⊃ C_H", slope, 1.0).with_counterexample(ps));
    let (dist, pd) = worst(&grid, |p| operator_norm(g.differential(p).sub(&m.differential(p))));
    report.push(Check::at_most("‖dG − dF_init‖ ≤ δ_init", dist, delta_init).with_counterexample(pd));

    // G = F_init on S: sample realized Cantor endpoints over the width of UK
    let chart = *m.chart();
    let ends = m.cantor.endpoints();
    let stride = (ends.len() / 512).max(1);
    let mut s_pts = Vec::new();
    for k in 0..64 {
        let x = m.regions.uk.x.0 + m.regions.uk.width() * (k as f64 + 0.5) / 64.0;
        s_pts.extend(ends.iter().step_by(stride).map(|&y| chart.point(x, y)));
    }
    let (vs, pss) = worst(&s_pts, |p| g.apply(p).distance(&m.apply(p)));
    report.push(
        Check::at_most("G = F_init on S", vs, AGREE_TOL)
            .with_detail(format!("{} points of S", s_pts.len()))
            .with_counterexample(pss),
    );
    report.push(check_fibres(g, 500, 64, "G preserves vertical fibres"));
    report.push(check_linear_outside(g, &grid, "G = F_Lin outside R̃"));
    let (amin, pa) = least(&grid, |p| g.differential(p).a2);
    let (amax, pb) = worst(&grid, |p| g.differential(p).a2);
    report.push(
        Check::new(
            "vertical dilation in [1.1, L]",
            amin >= CLASS_MIN_DILATION && amax <= l,
            amin,
            CLASS_MIN_DILATION,
        )
        .with_detail(format!("a2 ∈ [{amin:.6}, {amax:.6}]"))
        .with_counterexample(if amin < CLASS_MIN_DILATION { pa } else { pb }),
    );
    let (count, sampled) = check_uk_intersection(g, n / 20, "G(UK) ∩ UK = UV_0 ∪ UV_1");
    report.push(count);
    report.push(sampled);
    report
}

/// A smooth cell of the piecewise formula around a chart point: the map is
/// a single analytic expression on `x ∈ cx`, `y ∈ cy`.
fn smooth_cell(m: &MapModel, x: f64, y: f64) -> ((f64, f64), (f64, f64)) {
    let inf = (f64::NEG_INFINITY, f64::INFINITY);
    let r = &m.regions;
    let bx = m.phi.breakpoints();
    let cx = if x < bx[0] {
        (f64::NEG_INFINITY, bx[0])
    } else if x > bx[3] {
        (bx[3], f64::INFINITY)
    } else {
        let k = (0..3).find(|&k| x <= bx[k + 1]).unwrap_or(2);
        (bx[k], bx[k + 1])
    };
    if !(r.rt.x.0..=r.rt.x.1).contains(&x) {
        return (cx, inf);
    }
    let mut cuts = vec![f64::NEG_INFINITY];
    for i in 0..2 {
        let v = &m.vertical[i];
        let (s0, s1) = v.core.source();
        cuts.push(r.rq[i].0);
        cuts.push(v.lower.y0);
        if (s0..=s1).contains(&y) {
            let piece = v.core.piece_at(y);
            cuts.push(piece.s0);
            cuts.push(piece.s1);
        } else {
            cuts.push(s0);
            cuts.push(s1);
        }
        cuts.push(v.upper.y1);
        cuts.push(r.rq[i].1);
    }
    cuts.push(f64::INFINITY);
    cuts.sort_by(f64::total_cmp);
    let lo = cuts.iter().copied().filter(|&c| c <= y).fold(f64::NEG_INFINITY, f64::max);
    let hi = cuts.iter().copied().filter(|&c| c > y).fold(f64::INFINITY, f64::min);
    (cx, (lo, hi))
}

/// Largest power of two not above `s`, but at least one ulp of `t`, so that
/// every stencil node `t + k·s` is exactly representable.
fn exact_step(t: f64, s: f64) -> f64 {
    let ulp = f64::from_bits(t.abs().to_bits() + 1) - t.abs();
    (2f64.powi(s.log2().floor() as i32)).max(ulp)
}

/// Nodes and weights of a 5-point first-derivative stencil with step `s`
/// inside `cell` around `t`: central when there is room, one-sided otherwise.
/// Steps are powers of two so the nodes carry no rounding.
fn stencil(t: f64, cell: (f64, f64), s_max: f64) -> ([f64; 5], [f64; 5], f64) {
    let left = t - cell.0;
    let right = cell.1 - t;
    let central = s_max.min(left / 2.0).min(right / 2.0);
    let one_sided = s_max.min(left.max(right) / 4.0);
    if central >= 0.25 * one_sided {
        let w = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
        ([-2.0, -1.0, 0.0, 1.0, 2.0], w, exact_step(t, central))
    } else {
        let w = [-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -1.0 / 4.0];
        let dir = if right >= left { 1.0 } else { -1.0 };
        let nodes = [0.0, dir, 2.0 * dir, 3.0 * dir, 4.0 * dir];
        (nodes, w.map(|c| c * dir), exact_step(t, one_sided))
    }
}

/// Jacobian by 5-point finite differences with a step adapted to the
/// smooth cell of the point. Inside the bands the chart formula of the map is
/// differentiated directly; elsewhere the torus map, with images compared
/// through their minimal displacement. Returned in the eigen-chart.
pub fn finite_difference_jacobian<G: FiberMap + ?Sized>(g: &G, p: &TorusPoint) -> Jacobian2 {
    finite_difference_with_floor(g, p).0
}

/// The finite-difference Jacobian together with its double-precision
/// roundoff floor: the error that rounding of the stencil nodes and of the
/// sampled images alone can produce in the difference quotients.
pub fn finite_difference_with_floor<G: FiberMap + ?Sized>(g: &G, p: &TorusPoint) -> (Jacobian2, f64) {
    let m = g.model();
    let chart = *m.chart();
    let (x, y) = chart.local(p);
    let (cx, cy) = smooth_cell(m, x, y);
    let (nx, wx, sx) = stencil(x, cx, 1e-6);
    let (ny, wy, sy) = stencil(y, cy, 1e-7);
    let orient = chart.sx * chart.sy;
    // largest image coordinate, which sets the rounding of the samples, and
    // the magnitude of the stencil nodes, which sets the rounding of inputs
    let mut scale: f64 = 0.0;
    let mut input = [x.abs(), y.abs()];
    let banded = m.regions.rh_branch(x, y).is_some();
    let (a1, delta, a2) = match m.regions.rh_branch(x, y) {
        Some(i) => {
            let f = |x: f64, y: f64| g.apply_local(i, x, y);
            let mut dx = [0.0; 2];
            let mut dy = 0.0;
            for k in 0..5 {
                let ix = f(x + nx[k] * sx, y);
                let iy = f(x, y + ny[k] * sy).1;
                scale = scale.max(ix.0.abs()).max(ix.1.abs()).max(iy.abs());
                dx[0] += wx[k] * ix.0;
                dx[1] += wx[k] * ix.1;
                dy += wy[k] * iy;
            }
            (dx[0] / sx, dx[1] / sx, dy / sy)
        }
        None => {
            // torus coordinates lie in [0, 1)
            scale = 1.0;
            input = [1.0, 1.0];
            let base = g.apply(p);
            let proj = |q: TorusPoint| {
                let d = q.displacement_from(&base);
                (
                    chart.sx * (d[0] * E_S[0] + d[1] * E_S[1]),
                    chart.sy * (d[0] * E_U[0] + d[1] * E_U[1]),
                )
            };
            let mut dx = [0.0; 2];
            let mut dy = 0.0;
            for k in 0..5 {
                let ix = proj(g.apply(&chart.point(x + nx[k] * sx, y)));
                dx[0] += wx[k] * ix.0;
                dx[1] += wx[k] * ix.1;
                dy += wy[k] * proj(g.apply(&chart.point(x, y + ny[k] * sy))).1;
            }
            (dx[0] / sx, dx[1] / sx, dy / sy)
        }
    };
    let j = Jacobian2 {
        a1,
        a2,
        delta: orient * delta,
    };
    let norm = j.norm();
    let column = |w: &[f64; 5], input: f64, deriv: f64, s: f64| {
        w.iter().map(|c| c.abs()).sum::<f64>() * f64::EPSILON * (scale + input * deriv) / s
    };
    let (dx, dy) = if banded { (j.a1.abs() + j.delta.abs(), j.a2.abs()) } else { (norm, norm) };
    (j, column(&wx, input[0], dx, sx).max(column(&wy, input[1], dy, sy)))
}

/// Relative error `‖J_fd − J‖ / ‖J‖` of the analytic differential.
pub fn differential_error<G: FiberMap + ?Sized>(g: &G, p: &TorusPoint) -> f64 {
    let exact = g.differential(p);
    let fd = finite_difference_jacobian(g, p);
    operator_norm(fd.sub(&exact)) / exact.norm()
}

/// Largest relative error of the analytic differential over `pts`.
pub fn differential_cross_check<G: FiberMap + ?Sized>(g: &G, pts: &[TorusPoint]) -> (f64, Option<TorusPoint>) {
    worst(pts, |p| differential_error(g, p))
}

/// Relative tolerance of the Jacobian cross-check.
pub const FD_TOL: f64 = 1e-6;

/// A point is resolvable when its relative roundoff floor is this far below
/// the tolerance.
const FD_RESOLUTION: f64 = 0.1;

/// Jacobian cross-check that separates points where double precision can
/// resolve the tolerance from points inside very short smooth pieces (deep
/// gaps of the Bowen maps), where the roundoff floor alone exceeds it.
/// Resolvable points must meet the tolerance; the others must agree within
/// their floor plus the tolerance.
pub fn check_differential<G: FiberMap + ?Sized>(g: &G, pts: &[TorusPoint]) -> Report {
    let rows: Vec<(f64, f64)> = pts
        .par_iter()
        .map(|p| {
            let exact = g.differential(p);
            let (fd, floor) = finite_difference_with_floor(g, p);
            let norm = exact.norm();
            (operator_norm(fd.sub(&exact)) / norm, floor / norm)
        })
        .collect();
    let resolvable = |r: &(f64, f64)| r.1 <= FD_RESOLUTION * FD_TOL;
    let max_of = |it: &mut dyn Iterator<Item = (usize, f64)>| {
        it.fold((0.0f64, None), |a, (k, v)| if v > a.0 || a.1.is_none() { (v, Some(pts[k])) } else { a })
    };
    let (literal, _) = max_of(&mut rows.iter().map(|r| r.0).enumerate());
    let (resolved, at) = max_of(&mut rows.iter().enumerate().filter(|(_, r)| resolvable(r)).map(|(k, r)| (k, r.0)));
    let n_resolved = rows.iter().filter(|r| resolvable(r)).count();
    let (excess, at_excess) =
        max_of(&mut rows.iter().enumerate().filter(|(_, r)| !resolvable(r)).map(|(k, r)| (k, r.0 - r.1)));
    let mut report = Report::new("analytic vs finite-difference Jacobian");
    report.push(
        Check::at_most("relative Jacobian error at resolvable points", resolved, FD_TOL)
            .with_detail(format!(
                "{n_resolved} of {} points; literal maximum over all points {literal:e}",
                pts.len()
            ))
            .with_counterexample(at),
    );
    report.push(
        Check::at_most("relative Jacobian error beyond the roundoff floor elsewhere", excess.max(0.0), FD_TOL)
            .with_detail(format!("{} points below double-precision resolution", pts.len() - n_resolved))
            .with_counterexample(at_excess),
    );
    report
}

/// Longest word length checked by the cylinder measure law.
pub const CYLINDER_WORDS: usize = 8;
/// Tolerance of the Bowen-map derivative at realized endpoints.
pub const ENDPOINT_DERIV_TOL: f64 = 1e-9;
/// Samples per gap for the minimum derivative of the Bowen map.
const GAP_SAMPLES: usize = 16;

/// Invariants of the construction data: fixed points of `F_Lin`, the
/// cylinder measure law of the Cantor set, and the Bowen maps.
pub fn check_construction(m: &MapModel) -> Report {
    let mut report = Report::new("construction invariants");
    let expected = m.linear.fixed_point_count();
    let found = fixed_points_exact(&m.linear).len() as i64;
    report.push(
        Check::new("fixed points of F_Lin: count = trace − 2", found == expected, found as f64, expected as f64)
            .with_detail(format!("N_init = {}", m.params.n_init)),
    );

    let c = &m.cantor;
    let (lo, hi) = c.base;
    let total = c.cover_measure_in(lo, hi);
    let max_len = CYLINDER_WORDS.min(c.depth);
    let mut worst: f64 = 0.0;
    let mut words = 0;
    for len in 1..=max_len {
        for w in words_of_length(len) {
            let (a, b) = c.cylinder(&w).expect("word within depth");
            let rel = c.cover_measure_in(a, b) / total;
            worst = worst.max((rel - 0.5f64.powi(len as i32)).abs());
            words += 1;
        }
    }
    report.push(
        Check::at_most("cylinder measure law", worst, AGREE_TOL)
            .with_detail(format!("{words} words of length ≤ {max_len}")),
    );

    let mut end_dev: f64 = 0.0;
    let mut ends = 0;
    let mut min_deriv = f64::INFINITY;
    let mut conj: f64 = 0.0;
    for (half, vm) in m.vertical.iter().enumerate() {
        let f = &vm.core;
        let (s0, s1) = f.source();
        for e in c.endpoints().into_iter().filter(|&e| e >= s0 && e <= s1) {
            end_dev = end_dev.max((f.deriv(e).unwrap_or(f64::NAN) - 2.0).abs());
            ends += 1;
        }
        // interiors of every realized gap inside this half
        for (ga, gb) in c.gaps().into_iter().flatten().filter(|&(a, b)| a >= s0 && b <= s1) {
            for k in 0..GAP_SAMPLES {
                let x = ga + (gb - ga) * (k as f64 + 0.5) / GAP_SAMPLES as f64;
                min_deriv = min_deriv.min(f.deriv(x).unwrap_or(f64::NAN));
            }
        }
        for len in 0..c.depth {
            for w in words_of_length(len) {
                let mut hw = vec![half as u8];
                hw.extend_from_slice(&w);
                let (a, b) = c.cylinder(&hw).expect("word within depth");
                let (ta, tb) = c.cylinder(&w).expect("word within depth");
                conj = conj
                    .max((f.eval(a).unwrap_or(f64::NAN) - ta).abs())
                    .max((f.eval(b).unwrap_or(f64::NAN) - tb).abs());
            }
        }
    }
    report.push(
        Check::at_most("Bowen map: derivative 2 at realized endpoints", end_dev, ENDPOINT_DERIV_TOL)
            .with_detail(format!("{ends} endpoints")),
    );
    report.push(Check::at_least("Bowen map: derivative ≥ 2 in the gaps", min_deriv, 2.0 - AGREE_TOL));
    report.push(Check::at_most("Bowen map: cylinder endpoints map to cylinder endpoints", conj, AGREE_TOL));
    report
}
