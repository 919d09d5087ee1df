//! Orbits, entry times into the local stable set `S` of the horseshoe, and
//! Monte-Carlo estimates of its basin `B = ∪ F^{-n}(S)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anosov::FiberMap;
use crate::error::{Error, Result};
use crate::horseshoe::SMembership;
use crate::torus::TorusPoint;

/// Seeds drawn per RNG stream; stream `k` serves seeds `k·BATCH ..`.
pub const BATCH: usize = 4096;
/// Default cap on iterations when waiting for an exit from `UK`.
pub const T_CAP: u64 = 10_000;
/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// The forward orbit of one seed, with its first entry into `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub seed: TorusPoint,
    /// Number of iterations performed.
    pub length: u64,
    /// First time an iterate is certified in `S`.
    pub entry_time_to_s: Option<u64>,
    /// First time an iterate lies in the depth-`D` cover of `S` (certified or not).
    pub cover_time: Option<u64>,
    /// An iterate entered the cover of `S` but none was certified in `S`.
    pub unresolved: bool,
    pub samples: Option<Vec<TorusPoint>>,
}

/// Iterate `p` up to `t` times, stopping at the first certified entry into `S`.
pub fn iterate<G: FiberMap + ?Sized>(g: &G, p: &TorusPoint, t: u64, keep: bool) -> OrbitRecord {
    let m = g.model();
    let mut x = *p;
    let mut samples = keep.then(Vec::new);
    let mut cover_time = None;
    let mut entry = None;
    let mut n = 0;
    loop {
        if let Some(s) = samples.as_mut() {
            s.push(x);
        }
        match m.s_membership(&x) {
            SMembership::In => {
                entry = Some(n);
                cover_time.get_or_insert(n);
                break;
            }
            SMembership::Unresolved => {
                cover_time.get_or_insert(n);
            }
            SMembership::Out => {}
        }
        if n == t {
            break;
        }
        x = g.apply(&x);
        n += 1;
    }
    OrbitRecord {
        seed: *p,
        length: n,
        entry_time_to_s: entry,
        cover_time,
        unresolved: entry.is_none() && cover_time.is_some(),
        samples,
    }
}

/// First `n ≤ cap` with `F^n(p) ∉ UK`.
pub fn exit_time<G: FiberMap + ?Sized>(g: &G, p: &TorusPoint, cap: u64) -> Option<u64> {
    let m = g.model();
    let mut x = *p;
    for n in 0..=cap {
        let (u, v) = m.chart().local(&x);
        if !m.regions.uk.contains(u, v) {
            return Some(n);
        }
        x = g.apply(&x);
    }
    None
}

/// Wilson score interval at 95%: `(centre, half-width)`.
pub fn wilson(successes: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    (centre, half)
}

/// One rung of the basin ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinRung {
    pub t: u64,
    /// Fraction of seeds with a certified entry into `S` within `t` steps.
    pub p_in: f64,
    /// Fraction of seeds that entered the cover of `S` within `t` steps
    /// without a certified entry.
    pub p_unresolved: f64,
    /// 95% Wilson half-width for `p_in`.
    pub ci: f64,
    /// 95% Wilson half-width for `p_unresolved`.
    pub ci_unresolved: f64,
}

/// Monte-Carlo basin estimate on a ladder of iteration caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinEstimate {
    pub n_samples: u64,
    pub seed: u64,
    pub rungs: Vec<BasinRung>,
    /// Analytic lower and upper bounds for `Leb(S)`.
    pub leb_s: (f64, f64),
    /// Every rung's `p_in` is at least the previous one minus its half-width.
    pub monotone: bool,
}

/// Uniform random seed number `k` of the stream family rooted at `seed`.
pub fn seeds_for_batch(seed: u64, batch: usize, count: usize) -> Vec<TorusPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch as u64);
    (0..count).map(|_| TorusPoint::new(rng.random(), rng.random())).collect()
}

/// Analytic bounds for `Leb(S)`: width of `UK` times the measure bounds of
/// the thick Cantor set (the chart is orthonormal, so areas agree).
pub fn leb_s_bounds<G: FiberMap + ?Sized>(g: &G) -> (f64, f64) {
    let m = g.model();
    let (lo, hi) = m.cantor.measure_bounds();
    let w = m.regions.uk.width();
    (w * lo, w * hi)
}

/// Estimate `P(seed enters S within T)` for every `T` in `ladder` from one
/// pass of `max(ladder)` iterations per seed. Results do not depend on the
/// number of worker threads.
pub fn basin_estimate<G: FiberMap + ?Sized>(g: &G, n_samples: u64, ladder: &[u64], seed: u64) -> Result<BasinEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be at least 1".into()));
    }
    if ladder.is_empty() {
        return Err(Error::InvalidParameter("the T ladder must not be empty".into()));
    }
    let t_max = *ladder.iter().max().unwrap();
    let n = n_samples as usize;
    let batches = n.div_ceil(BATCH);
    // per seed: (entry time, cover time) with u64::MAX for "never"
    let times: Vec<(u64, u64)> = (0..batches)
        .into_par_iter()
        .flat_map_iter(|b| {
            let count = BATCH.min(n - b * BATCH);
            seeds_for_batch(seed, b, count).into_iter().map(|p| {
                let rec = iterate(g, &p, t_max, false);
                (
                    rec.entry_time_to_s.unwrap_or(u64::MAX),
                    rec.cover_time.unwrap_or(u64::MAX),
                )
            })
        })
        .collect();
    let mut rungs: Vec<BasinRung> = Vec::with_capacity(ladder.len());
    for &t in ladder {
        let inside = times.iter().filter(|&&(e, _)| e <= t).count() as u64;
        let unresolved = times.iter().filter(|&&(e, c)| e > t && c <= t).count() as u64;
        let (_, ci) = wilson(inside, n_samples);
        let (_, ci_u) = wilson(unresolved, n_samples);
        rungs.push(BasinRung {
            t,
            p_in: inside as f64 / n_samples as f64,
            p_unresolved: unresolved as f64 / n_samples as f64,
            ci,
            ci_unresolved: ci_u,
        });
    }
    let mut sorted = rungs.clone();
    sorted.sort_by_key(|r| r.t);
    let monotone = sorted.windows(2).all(|w| w[1].p_in >= w[0].p_in - w[0].ci);
    Ok(BasinEstimate {
        n_samples,
        seed,
        rungs,
        leb_s: leb_s_bounds(g),
        monotone,
    })
}

/// Per-seed first entry times (into `S`, into its cover) for an arbitrary
/// list of seeds, e.g. a raster.
pub fn entry_times<G: FiberMap + ?Sized>(g: &G, seeds: &[TorusPoint], t: u64) -> Vec<(Option<u64>, Option<u64>)> {
    seeds
        .par_iter()
        .map(|p| {
            let r = iterate(g, p, t, false);
            (r.entry_time_to_s, r.cover_time)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anosov::{build_model, MapModel, ModelParams};
    use std::sync::OnceLock;

    fn model() -> &'static MapModel {
        static M: OnceLock<MapModel> = OnceLock::new();
        M.get_or_init(|| build_model(&ModelParams::default()).unwrap())
    }

    #[test]
    fn fixed_point_orbits() {
        let m = model();
        let r = iterate(m, &m.p0(), 10, true);
        assert_eq!(r.entry_time_to_s, Some(0));
        assert!(!r.unresolved);
        let r = iterate(m, &m.q_point(), 100, false);
        assert_eq!(r.entry_time_to_s, None);
        assert_eq!(r.cover_time, None);
        assert_eq!(r.length, 100);
    }

    #[test]
    fn middle_gap_exits_uk() {
        let m = model();
        let r = &m.regions;
        let chart = m.chart();
        for k in 0..1000 {
            let x = r.uk.x.0 + r.uk.width() * (k as f64 + 0.5) / 1000.0;
            let y = r.q_i[0].1 + (r.q_i[1].0 - r.q_i[0].1) * (((k * 7919) % 1000) as f64 + 0.5) / 1000.0;
            let n = exit_time(m, &chart.point(x, y), T_CAP).unwrap();
            assert!(n <= 1, "point of the middle gap stayed {n} steps");
        }
    }

    #[test]
    fn wilson_interval() {
        let (c, h) = wilson(0, 1_000_000);
        assert!(c > 0.0 && h > 1e-6 && h < 4e-6);
        let (c, h) = wilson(500, 1000);
        assert!((c - 0.5).abs() < 1e-12 && (h - 0.031).abs() < 1e-3);
    }

    #[test]
    fn basin_is_deterministic_and_monotone() {
        let m = model();
        assert!(basin_estimate(m, 0, &[0], 1).is_err());
        let a = basin_estimate(m, 5000, &[0, 4, 16], 7).unwrap();
        let b = basin_estimate(m, 5000, &[0, 4, 16], 7).unwrap();
        assert_eq!(a, b);
        assert!(a.monotone);
        assert!(a.leb_s.0 > 0.0 && a.leb_s.0 < a.leb_s.1);
    }
}
