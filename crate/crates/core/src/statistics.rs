//! Statistics along orbits: itinerary frequencies on the horseshoe, distortion
//! of iterated vertical segments, the Lipschitz area inequality and the exit
//! sweep for points of `UK` off the horseshoe.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anosov::{FiberMap, MapModel};
use crate::dynamics::exit_time;
use crate::error::{Error, Result};
use crate::horseshoe::{Rect, SMembership};
use crate::report::{Check, Report};
use crate::roots::solve_increasing;
use crate::torus::TorusPoint;
use crate::verify::verification_grid;

/// Extra symbols appended before the backward solve of a symbolic seed. The
/// fibre maps expand by at least 1.2, so the influence of the arbitrary
/// terminal height decays below `1.2^{-256} ≈ 5e-21`.
const SYMBOLIC_PAD: usize = 256;
/// Largest accepted distance between `F(z_t)` and `z_{t+1}` for a realized
/// symbolic orbit.
pub const PSEUDO_ORBIT_TOL: f64 = 1e-9;
/// Sigma multiplier of the frequency bound.
pub const FREQ_SIGMAS: f64 = 4.0;
/// Sigma multiplier of the Monte-Carlo area inequality.
pub const AREA_SIGMAS: f64 = 3.0;

/// Where an itinerary comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ItinerarySeed {
    /// The true forward orbit of a point, which must stay in `UK`.
    Point(TorusPoint),
    /// The horseshoe orbit with the given periodic symbol sequence.
    Periodic(Vec<u8>),
    /// The horseshoe orbit of a fair coin-toss symbol sequence drawn from the
    /// given RNG seed.
    Bernoulli(u64),
}

/// Empirical frequency of one word along the itinerary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub word: String,
    pub count: u64,
    pub freq: f64,
    pub expected: f64,
    pub deviation: f64,
    /// `4·√(2^{-|w|}/T)`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub t: usize,
    pub k_max: usize,
    /// The first symbols of the itinerary (up to 64).
    pub prefix: String,
    pub rows: Vec<FrequencyRow>,
    /// Largest `|F(z_t) − z_{t+1}|` over the realized orbit (0 for point seeds).
    pub max_defect: f64,
}

impl FrequencyTable {
    pub fn row(&self, word: &str) -> Option<&FrequencyRow> {
        self.rows.iter().find(|r| r.word == word)
    }

    pub fn within_bound(&self) -> bool {
        self.rows.iter().all(|r| r.deviation <= r.bound)
    }

    /// Largest `deviation / bound` over all words.
    pub fn worst_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.deviation / r.bound).fold(0.0, f64::max)
    }
}

/// Symbol of a chart point of `UK`: the side `UH_i` whose height it lies in.
fn symbol_of(m: &MapModel, x: f64, y: f64) -> Option<u8> {
    let r = &m.regions;
    if !r.uk.contains(x, y) {
        return None;
    }
    (0..2).find(|&i| y >= r.q_i[i].0 && y <= r.q_i[i].1).map(|i| i as u8)
}

/// The horseshoe orbit `(x_t, y_t)` with itinerary `symbols`: the stable
/// coordinate runs forward through the branches, the unstable coordinate is
/// solved backward from the end of the sequence, where it is exact up to the
/// contraction of the inverse fibre maps.
pub fn realize_symbols<G: FiberMap + ?Sized>(g: &G, symbols: &[u8], x0: f64) -> Result<Vec<(f64, f64)>> {
    let m = g.model();
    let r = &m.regions;
    let ls = m.lambda_s();
    let mut xs = Vec::with_capacity(symbols.len());
    let mut x = x0;
    for &s in symbols {
        if s > 1 {
            return Err(Error::InvalidParameter(format!("symbol {s} is not 0 or 1")));
        }
        xs.push(x);
        x = r.branch_x(s as usize, x, ls);
    }
    let mut ys = vec![0.0; symbols.len()];
    let mut y = 0.5 * (r.q.0 + r.q.1);
    for t in (0..symbols.len()).rev() {
        let i = symbols[t] as usize;
        let (lo, hi) = r.rq[i];
        let xt = xs[t];
        y = solve_increasing(|v| g.vertical(i, xt, v), |v| g.vertical_dy(i, xt, v), lo, hi, y, 0.0)?;
        ys[t] = y;
    }
    Ok(xs.into_iter().zip(ys).collect())
}

fn bernoulli_symbols(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random::<bool>() as u8).collect()
}

/// The itinerary of `t` steps and the largest pseudo-orbit defect.
fn itinerary<G: FiberMap + ?Sized>(g: &G, seed: &ItinerarySeed, t: usize) -> Result<(Vec<u8>, f64)> {
    let m = g.model();
    let chart = *m.chart();
    let symbols = match seed {
        ItinerarySeed::Point(p) => {
            let mut out = Vec::with_capacity(t);
            let mut z = *p;
            for step in 0..t {
                let (x, y) = chart.local(&z);
                let s = symbol_of(m, x, y).ok_or_else(|| {
                    Error::Construction(format!("orbit left the horseshoe sides at step {step} of {t}"))
                })?;
                out.push(s);
                z = g.apply(&z);
            }
            return Ok((out, 0.0));
        }
        ItinerarySeed::Periodic(w) => {
            if w.is_empty() {
                return Err(Error::InvalidParameter("periodic word must not be empty".into()));
            }
            w.iter().copied().cycle().take(t + SYMBOLIC_PAD).collect::<Vec<_>>()
        }
        ItinerarySeed::Bernoulli(s) => bernoulli_symbols(*s, t + SYMBOLIC_PAD),
    };
    let x0 = 0.5 * (m.regions.uk.x.0 + m.regions.uk.x.1);
    let orbit = realize_symbols(g, &symbols, x0)?;
    // observed symbols and one-step defects, checked in parallel
    let checked: Vec<(Option<u8>, f64)> = (0..t)
        .into_par_iter()
        .map(|k| {
            let (x, y) = orbit[k];
            let next = chart.point(orbit[k + 1].0, orbit[k + 1].1);
            (symbol_of(m, x, y), g.apply(&chart.point(x, y)).distance(&next))
        })
        .collect();
    let mut observed = Vec::with_capacity(t);
    let mut defect: f64 = 0.0;
    for (k, (s, d)) in checked.into_iter().enumerate() {
        match s {
            Some(s) if s == symbols[k] => observed.push(s),
            _ => {
                return Err(Error::Construction(format!(
                    "symbolic orbit left the horseshoe side {} at step {k}",
                    symbols[k]
                )))
            }
        }
        defect = defect.max(d);
    }
    if defect > PSEUDO_ORBIT_TOL {
        return Err(Error::Construction(format!(
            "symbolic orbit defect {defect:e} exceeds {PSEUDO_ORBIT_TOL:e}"
        )));
    }
    Ok((observed, defect))
}

/// Empirical frequencies of all words of length `1..=k_max` in the first `t`
/// symbols of an itinerary (sliding windows).
pub fn cylinder_frequencies<G: FiberMap + ?Sized>(g: &G, seed: &ItinerarySeed, t: usize, k_max: usize) -> Result<FrequencyTable> {
    if k_max == 0 || k_max > 16 || t < k_max {
        return Err(Error::InvalidParameter(format!(
            "need 1 ≤ k_max ≤ 16 and T ≥ k_max (T = {t}, k_max = {k_max})"
        )));
    }
    let (symbols, max_defect) = itinerary(g, seed, t)?;
    let mut rows = Vec::new();
    for k in 1..=k_max {
        let mut counts = vec![0u64; 1 << k];
        let mask = (1usize << k) - 1;
        let mut code = 0usize;
        for (j, &s) in symbols.iter().enumerate() {
            code = ((code << 1) | s as usize) & mask;
            if j + 1 >= k {
                counts[code] += 1;
            }
        }
        let windows = (t - k + 1) as f64;
        let expected = 0.5f64.powi(k as i32);
        let bound = FREQ_SIGMAS * (expected / t as f64).sqrt();
        for (code, &count) in counts.iter().enumerate() {
            let word: String = (0..k).rev().map(|b| if code >> b & 1 == 1 { '1' } else { '0' }).collect();
            let freq = count as f64 / windows;
            rows.push(FrequencyRow {
                word,
                count,
                freq,
                expected,
                deviation: (freq - expected).abs(),
                bound,
            });
        }
    }
    let prefix = symbols.iter().take(64).map(|&s| char::from(b'0' + s)).collect();
    Ok(FrequencyTable {
        t,
        k_max,
        prefix,
        rows,
        max_defect,
    })
}

/// A vertical segment in the chart: abscissa `x`, heights `y.0 ..= y.1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalSegment {
    pub x: f64,
    pub y: (f64, f64),
}

/// `log |dF^n(p)·e_y|`, by the chain rule along the orbit.
fn log_vertical_derivative<G: FiberMap + ?Sized>(g: &G, p: &TorusPoint, n: usize) -> f64 {
    let mut z = *p;
    let mut v = [0.0, 1.0];
    let mut log = 0.0;
    for _ in 0..n {
        v = g.differential(&z).apply(v);
        let len = v[0].hypot(v[1]);
        log += len.ln();
        v = [v[0] / len, v[1] / len];
        z = g.apply(&z);
    }
    log
}

/// Ratio of the largest to the smallest derivative of `F^n` along a vertical
/// segment, over `samples` equally spaced subpoints.
pub fn distortion<G: FiberMap + ?Sized>(g: &G, seg: &VerticalSegment, n_iter: usize, samples: usize) -> f64 {
    let m = g.model();
    let chart = *m.chart();
    let count = samples.max(2);
    let logs: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|j| {
            let y = seg.y.0 + (seg.y.1 - seg.y.0) * j as f64 / (count - 1) as f64;
            log_vertical_derivative(g, &chart.point(seg.x, y), n_iter)
        })
        .collect();
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    (hi - lo).exp()
}

/// Largest operator norm of `dF` and `dF⁻¹` on the verification grid.
pub fn grid_lipschitz<G: FiberMap + ?Sized>(g: &G, n: usize) -> f64 {
    verification_grid(g.model(), n)
        .par_iter()
        .map(|p| {
            let j = g.differential(p);
            j.norm().max(j.inverse().norm())
        })
        .reduce(|| 0.0, f64::max)
}

/// Random chart rectangles, half of them straddling the bands `RH_i` and
/// half anywhere in a neighbourhood of `R̃`.
pub fn random_rects(m: &MapModel, count: usize, seed: u64) -> Vec<Rect> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &m.regions;
    let around = r.rt.widened(0.05, 0.05);
    (0..count)
        .map(|k| {
            let (cx, cy, span) = if k % 2 == 0 {
                let band = &r.rh[rng.random_range(0..2)];
                (
                    rng.random_range(band.x.0..band.x.1),
                    rng.random_range(band.y.0..band.y.1),
                    band.height(),
                )
            } else {
                (
                    rng.random_range(around.x.0..around.x.1),
                    rng.random_range(around.y.0..around.y.1),
                    0.05,
                )
            };
            let w = span * rng.random_range(0.01..1.0);
            let h = span * rng.random_range(0.01..1.0);
            Rect::new((cx - w / 2.0, cx + w / 2.0), (cy - h / 2.0, cy + h / 2.0))
        })
        .collect()
}

/// Monte-Carlo area of `F(A)` as `∫_A |det dF|` (F is injective), with the
/// standard error of the estimate.
pub fn image_area<G: FiberMap + ?Sized>(g: &G, rect: &Rect, n_mc: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let area = rect.width() * rect.height();
    if area == 0.0 || n_mc == 0 {
        return (0.0, 0.0);
    }
    let chart = *g.model().chart();
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n_mc {
        let x = rect.x.0 + rect.width() * rng.random::<f64>();
        let y = rect.y.0 + rect.height() * rng.random::<f64>();
        let [[a, b], [c, d]] = g.differential(&chart.point(x, y)).matrix();
        let det = (a * d - b * c).abs();
        sum += det;
        sq += det * det;
    }
    let n = n_mc as f64;
    let mean = sum / n;
    let var = (sq / n - mean * mean).max(0.0);
    (mean * area, (var / n).sqrt() * area)
}

/// `area(F(A)) ≤ Lip²·area(A)` for every rectangle, within `3σ` of the
/// Monte-Carlo estimate. Rectangle `k` uses RNG stream `k` of `seed`.
pub fn lipschitz_measure_check<G: FiberMap + ?Sized>(g: &G, rects: &[Rect], n_mc: usize, lip: f64, seed: u64) -> Report {
    let results: Vec<(f64, f64, f64)> = rects
        .par_iter()
        .enumerate()
        .map(|(k, rect)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let (est, se) = image_area(g, rect, n_mc, &mut rng);
            (est, se, lip * lip * rect.width() * rect.height())
        })
        .collect();
    let violations = results.iter().filter(|(e, s, b)| e - AREA_SIGMAS * s > *b).count();
    let tightest = results
        .iter()
        .filter(|r| r.2 > 0.0)
        .map(|(e, _, b)| e / b)
        .fold(0.0, f64::max);
    let mut report = Report::new("Lipschitz measure inequality");
    report.push(
        Check::at_most("area(F(A)) ≤ Lip²·area(A) within 3σ", violations as f64, 0.0).with_detail(format!(
            "{} rectangles, {n_mc} points each, Lip = {lip:e}, largest area(F(A))/(Lip²·area(A)) = {tightest:e}",
            rects.len()
        )),
    );
    report
}

/// Seeds uniform in `UK` off the depth-`D` cover of `S` all leave `UK` within
/// `cap` steps.
pub fn exit_sweep<G: FiberMap + ?Sized>(g: &G, n: usize, seed: u64, cap: u64) -> Report {
    let m = g.model();
    let chart = *m.chart();
    let uk = m.regions.uk;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seeds = Vec::with_capacity(n);
    while seeds.len() < n {
        let p = chart.point(rng.random_range(uk.x.0..uk.x.1), rng.random_range(uk.y.0..uk.y.1));
        if m.s_membership(&p) == SMembership::Out {
            seeds.push(p);
        }
    }
    let times: Vec<Option<u64>> = seeds.par_iter().map(|p| exit_time(g, p, cap)).collect();
    let stuck = times.iter().position(Option::is_none);
    let longest = times.iter().flatten().copied().max().unwrap_or(0);
    let mut report = Report::new("exit from UK off the horseshoe");
    report.push(
        Check::at_most("seeds off S leave UK", stuck.map_or(0.0, |_| 1.0), 0.0)
            .with_detail(format!("{n} seeds, longest stay {longest} steps, cap {cap}"))
            .with_counterexample(stuck.map(|k| seeds[k])),
    );
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anosov::{build_model, ModelParams};
    use std::sync::OnceLock;

    fn model() -> &'static MapModel {
        static M: OnceLock<MapModel> = OnceLock::new();
        M.get_or_init(|| build_model(&ModelParams::default()).unwrap())
    }

    #[test]
    fn fixed_point_itinerary_is_constant() {
        let m = model();
        let t = cylinder_frequencies(m, &ItinerarySeed::Point(m.p0()), 200, 3).unwrap();
        assert_eq!(t.row("0").unwrap().freq, 1.0);
        assert_eq!(t.row("000").unwrap().freq, 1.0);
        assert_eq!(t.row("1").unwrap().count, 0);
    }

    #[test]
    fn period_two_word_has_exact_halves() {
        let m = model();
        let t = cylinder_frequencies(m, &ItinerarySeed::Periodic(vec![0, 1]), 10_000, 2).unwrap();
        assert_eq!(t.row("0").unwrap().freq, 0.5);
        assert_eq!(t.row("1").unwrap().freq, 0.5);
        assert_eq!(t.row("00").unwrap().count, 0);
        assert!(t.prefix.starts_with("010101"));
        assert!(t.max_defect <= PSEUDO_ORBIT_TOL);
    }

    #[test]
    fn escaping_point_is_reported() {
        let m = model();
        let r = &m.regions;
        let y = 0.5 * (r.q_i[0].1 + r.q_i[1].0);
        let p = m.chart().point(0.5 * r.uk.x.1, y);
        assert!(matches!(
            cylinder_frequencies(m, &ItinerarySeed::Point(p), 10, 1),
            Err(Error::Construction(_))
        ));
        assert!(cylinder_frequencies(m, &ItinerarySeed::Periodic(vec![]), 10, 1).is_err());
    }

    #[test]
    fn bernoulli_itinerary_is_balanced() {
        let m = model();
        let t = cylinder_frequencies(m, &ItinerarySeed::Bernoulli(3), 20_000, 3).unwrap();
        assert!(t.within_bound(), "worst ratio {}", t.worst_ratio());
    }

    #[test]
    fn linear_segments_have_no_distortion() {
        let m = model();
        let r = &m.regions;
        // far from R̃ in the chart, iterated twice by F_Lin only
        let seg = VerticalSegment { x: r.rt.x.1 + 0.3, y: (0.2, 0.2 + 1e-9) };
        assert_eq!(distortion(m, &seg, 2, 50), 1.0);
        let seg = VerticalSegment { x: 0.5 * r.uk.x.1, y: r.q };
        assert_eq!(distortion(m, &seg, 0, 50), 1.0);
    }

    #[test]
    fn horseshoe_distortion_is_finite_and_stable() {
        let m = model();
        let r = &m.regions;
        let seg = VerticalSegment { x: 0.5 * r.uk.x.1, y: r.q_i[0] };
        let d = distortion(m, &seg, 1, 2001);
        let fine = distortion(m, &seg, 1, 8001);
        assert!(d.is_finite() && d >= 1.0);
        assert!((fine / d - 1.0).abs() < 0.01, "{d} vs {fine}");
    }

    #[test]
    fn linear_rectangles_keep_their_area() {
        let m = model();
        let r = &m.regions;
        let rect = Rect::new((r.rt.x.1 + 0.1, r.rt.x.1 + 0.2), (0.3, 0.4));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, se) = image_area(m, &rect, 1000, &mut rng);
        assert!((a - 0.01).abs() < 1e-15 && se < 1e-15);
        let flat = Rect::new((0.1, 0.1), (0.3, 0.4));
        assert_eq!(image_area(m, &flat, 1000, &mut rng), (0.0, 0.0));
        let lip = grid_lipschitz(m, 40);
        assert!(lipschitz_measure_check(m, &[rect, flat], 1000, lip, 2).passed());
    }

    #[test]
    fn random_rectangles_satisfy_the_inequality() {
        let m = model();
        let lip = grid_lipschitz(m, 60);
        let rects = random_rects(m, 10, 5);
        assert!(lipschitz_measure_check(m, &rects, 2000, lip, 9).passed());
    }

    #[test]
    fn seeds_off_the_horseshoe_exit() {
        let m = model();
        let rep = exit_sweep(m, 200, 4, crate::dynamics::T_CAP);
        assert!(rep.passed(), "{rep}");
    }
}
