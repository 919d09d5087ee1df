//! The linear Anosov map `F_Lin = M^N` with `M = [[2,1],[1,1]]`, its exact
//! fixed points, and dense invariant lines.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{dot, wrap01, TorusPoint, E_S, E_U};

/// Largest number of windings examined by [`dense_line_near_point`].
pub const WINDING_CAP: u64 = 1_000_000;

type Mat2 = [[i64; 2]; 2];

fn mat_mul_checked(a: &Mat2, b: &Mat2) -> Option<Mat2> {
    let mut out = [[0i64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let x = a[i][0].checked_mul(b[0][j])?;
            let y = a[i][1].checked_mul(b[1][j])?;
            out[i][j] = x.checked_add(y)?;
        }
    }
    Some(out)
}

fn power(n: u32) -> Option<Mat2> {
    let base = [[2, 1], [1, 1]];
    let mut acc = [[1, 0], [0, 1]];
    for _ in 0..n {
        acc = mat_mul_checked(&acc, &base)?;
    }
    // the determinant must also be representable for the fixed-point algebra
    acc[0][0].checked_mul(acc[1][1])?;
    Some(acc)
}

/// Largest `N` whose matrix power (and its determinant products) fits in `i64`.
pub fn max_supported_power() -> u32 {
    let mut n = 1;
    while power(n + 1).is_some() {
        n += 1;
    }
    n
}

/// `F_Lin` together with its eigen-data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub n_init: u32,
    pub m_pow: [[i64; 2]; 2],
    pub lambda_u: f64,
    pub e_u: [f64; 2],
    pub e_s: [f64; 2],
}

/// Build `M^N` by exact integer powering.
pub fn make_linear_model(n_init: u32) -> Result<LinearModel> {
    if n_init == 0 {
        return Err(Error::InvalidParameter("N_init must be at least 1".into()));
    }
    let m_pow = power(n_init).ok_or(Error::PowerOverflow {
        requested: n_init,
        max: max_supported_power(),
    })?;
    let lambda_u = ((3.0 + 5f64.sqrt()) / 2.0).powi(n_init as i32);
    Ok(LinearModel {
        n_init,
        m_pow,
        lambda_u,
        e_u: E_U,
        e_s: E_S,
    })
}

/// `a·u mod 1` with the rounding error of the product recovered by an FMA, so
/// the result is accurate to a few ulps of 1 even for large integer `a`.
#[inline]
fn frac_mul(a: i64, u: f64) -> f64 {
    let af = a as f64;
    let hi = af * u;
    let lo = af.mul_add(u, -hi);
    (hi - hi.floor()) + lo
}

#[inline]
fn apply_matrix(m: &Mat2, p: &TorusPoint) -> TorusPoint {
    TorusPoint {
        u: wrap01(frac_mul(m[0][0], p.u) + frac_mul(m[0][1], p.v)),
        v: wrap01(frac_mul(m[1][0], p.u) + frac_mul(m[1][1], p.v)),
    }
}

impl LinearModel {
    pub fn lambda_s(&self) -> f64 {
        1.0 / self.lambda_u
    }

    pub fn trace(&self) -> i64 {
        self.m_pow[0][0] + self.m_pow[1][1]
    }

    pub fn det(&self) -> i64 {
        self.m_pow[0][0] * self.m_pow[1][1] - self.m_pow[0][1] * self.m_pow[1][0]
    }

    pub fn inverse_matrix(&self) -> Mat2 {
        let m = &self.m_pow;
        [[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]]
    }

    /// Number of fixed points, `|det(M^N - I)| = trace - 2`.
    pub fn fixed_point_count(&self) -> i64 {
        self.trace() - 2
    }

    /// Apply `M^N` to a plane vector (no reduction).
    pub fn apply_vector(&self, d: [f64; 2]) -> [f64; 2] {
        let m = &self.m_pow;
        [
            m[0][0] as f64 * d[0] + m[0][1] as f64 * d[1],
            m[1][0] as f64 * d[0] + m[1][1] as f64 * d[1],
        ]
    }
}

/// `(u, v) ↦ M^N (u, v) mod 1`.
pub fn apply_linear(m: &LinearModel, p: &TorusPoint) -> TorusPoint {
    apply_matrix(&m.m_pow, p)
}

/// `(u, v) ↦ M^{-N} (u, v) mod 1`.
pub fn apply_linear_inverse(m: &LinearModel, p: &TorusPoint) -> TorusPoint {
    apply_matrix(&m.inverse_matrix(), p)
}

/// An exact rational fixed point `num / den` (componentwise, `0 ≤ num < den`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPoint {
    pub num: [i64; 2],
    pub den: i64,
}

impl FixedPoint {
    pub fn to_point(&self) -> TorusPoint {
        TorusPoint::new(
            self.num[0] as f64 / self.den as f64,
            self.num[1] as f64 / self.den as f64,
        )
    }
}

/// Extended Euclid: returns `(g, x, y)` with `a x + b y = g ≥ 0`.
fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    let (mut r0, mut r1) = (a, b);
    let (mut s0, mut s1) = (1i64, 0i64);
    let (mut t0, mut t1) = (0i64, 1i64);
    while r1 != 0 {
        let q = r0.div_euclid(r1);
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 < 0 {
        (-r0, -s0, -t0)
    } else {
        (r0, s0, t0)
    }
}

/// All fixed points of `F_Lin`, as exact rationals.
///
/// The fixed points are `B^{-1} Z² / Z²` with `B = M^N - I`. A unimodular
/// column operation brings `B` to lower-triangular form `[[g, 0], [c', e']]`,
/// whose columns span `B Z²`; the box `0 ≤ i < g`, `0 ≤ j < |e'|` is then a
/// complete set of coset representatives of `Z² / B Z²`.
pub fn fixed_points_exact(m: &LinearModel) -> Vec<FixedPoint> {
    let b = [
        [m.m_pow[0][0] - 1, m.m_pow[0][1]],
        [m.m_pow[1][0], m.m_pow[1][1] - 1],
    ];
    let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
    let den = det.abs();
    let sign = det.signum();
    let (g, _, _) = ext_gcd(b[0][0], b[0][1]);
    let e = (det / g).abs();
    let adj = [[b[1][1], -b[0][1]], [-b[1][0], b[0][0]]];
    let mut out = Vec::with_capacity(den as usize);
    for i in 0..g {
        for j in 0..e {
            let n0 = sign * (adj[0][0] * i + adj[0][1] * j);
            let n1 = sign * (adj[1][0] * i + adj[1][1] * j);
            out.push(FixedPoint {
                num: [n0.rem_euclid(den), n1.rem_euclid(den)],
                den,
            });
        }
    }
    out.sort_by_key(|p| (p.num[0], p.num[1]));
    out
}

/// All fixed points of `F_Lin` as torus points.
pub fn fixed_points(m: &LinearModel) -> Vec<TorusPoint> {
    fixed_points_exact(m).iter().map(FixedPoint::to_point).collect()
}

/// Bucket grid for nearest-point queries on the torus.
struct PointGrid<'a> {
    cells: usize,
    buckets: Vec<Vec<&'a TorusPoint>>,
}

impl<'a> PointGrid<'a> {
    fn new(points: &'a [TorusPoint]) -> Self {
        let cells = ((points.len() as f64).sqrt().floor() as usize).max(1);
        let mut buckets = vec![Vec::new(); cells * cells];
        for p in points {
            let (i, j) = Self::cell_of(cells, p);
            buckets[i * cells + j].push(p);
        }
        Self { cells, buckets }
    }

    fn cell_of(cells: usize, p: &TorusPoint) -> (usize, usize) {
        let i = ((p.u * cells as f64) as usize).min(cells - 1);
        let j = ((p.v * cells as f64) as usize).min(cells - 1);
        (i, j)
    }

    fn nearest_distance(&self, p: &TorusPoint) -> f64 {
        let c = self.cells as i64;
        let (ci, cj) = Self::cell_of(self.cells, p);
        let mut best = f64::INFINITY;
        let max_ring = c / 2 + 1;
        for r in 0..=max_ring {
            for di in -r..=r {
                for dj in -r..=r {
                    if di.abs() != r && dj.abs() != r {
                        continue;
                    }
                    let i = (ci as i64 + di).rem_euclid(c) as usize;
                    let j = (cj as i64 + dj).rem_euclid(c) as usize;
                    for q in &self.buckets[i * self.cells + j] {
                        best = best.min(p.distance(q));
                    }
                }
            }
            // every cell beyond ring r is at least r cell widths away
            if best <= r as f64 / c as f64 {
                break;
            }
        }
        best
    }
}

/// Covering radius of the fixed-point set, estimated as the largest distance
/// from a `grid × grid` lattice of sample points to the nearest fixed point.
pub fn epsilon_net_radius(m: &LinearModel, grid: usize) -> f64 {
    let pts = fixed_points(m);
    covering_radius(&pts, grid)
}

/// Largest distance from a `grid × grid` sample lattice to `points`.
pub fn covering_radius(points: &[TorusPoint], grid: usize) -> f64 {
    let index = PointGrid::new(points);
    (0..grid)
        .into_par_iter()
        .map(|i| {
            let mut worst = 0.0f64;
            for j in 0..grid {
                let p = TorusPoint::new(i as f64 / grid as f64, j as f64 / grid as f64);
                worst = worst.max(index.nearest_distance(&p));
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

/// Eigen-direction of an invariant line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Stable,
    Unstable,
}

/// A point found on a dense invariant line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineHit {
    pub point: TorusPoint,
    /// Lattice winding index of the lift on which the hit was found.
    pub winding: i64,
    /// Signed arclength from `base` along the line direction.
    pub t: f64,
    /// Torus distance from the hit to the target.
    pub distance: f64,
}

/// Find a point of the line `base + t·e` (e the chosen eigen-direction) within
/// `tol` of `target`, scanning lattice translates in order of increasing
/// winding.
///
/// For a lattice vector `n = (n1, n2)` the line through `base + n` passes the
/// target at transverse offset `⟨c + n, e⊥⟩` with `c = base - target`; for
/// each winding `n1` the best `n2` is obtained by rounding. The returned point
/// is `target + offset·e⊥`, which lies on the line exactly up to rounding of
/// the offset alone.
pub fn dense_line_near_point(
    _m: &LinearModel,
    base: &TorusPoint,
    direction: Direction,
    target: &TorusPoint,
    tol: f64,
) -> Result<LineHit> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let (along, across) = match direction {
        Direction::Unstable => (E_U, E_S),
        Direction::Stable => (E_S, E_U),
    };
    let c = [base.u - target.u, base.v - target.v];
    let c_across = dot(c, across);
    let c_along = dot(c, along);
    let mut best = f64::INFINITY;
    let mut tried = 0u64;
    let mut k = 0i64;
    while tried < WINDING_CAP {
        for n1 in if k == 0 { vec![0] } else { vec![k, -k] } {
            tried += 1;
            let n2 = (-(c_across + n1 as f64 * across[0]) / across[1]).round();
            let offset = c_across + n1 as f64 * across[0] + n2 * across[1];
            best = best.min(offset.abs());
            if offset.abs() < tol {
                let t = -(c_along + n1 as f64 * along[0] + n2 * along[1]);
                let point = target.translate([offset * across[0], offset * across[1]]);
                return Ok(LineHit {
                    point,
                    winding: n1,
                    t,
                    distance: point.distance(target),
                });
            }
        }
        k += 1;
    }
    Err(Error::WindingCapReached {
        tol,
        windings: tried,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_powers() {
        assert_eq!(make_linear_model(1).unwrap().m_pow, [[2, 1], [1, 1]]);
        assert_eq!(make_linear_model(2).unwrap().m_pow, [[5, 3], [3, 2]]);
        assert_eq!(make_linear_model(5).unwrap().trace(), 123);
    }

    #[test]
    fn overflow_names_the_maximum() {
        let max = max_supported_power();
        assert!(make_linear_model(max).is_ok());
        match make_linear_model(max + 1) {
            Err(Error::PowerOverflow { max: reported, .. }) => assert_eq!(reported, max),
            other => panic!("expected overflow, got {other:?}"),
        }
        assert!(make_linear_model(0).is_err());
    }

    #[test]
    fn eigen_data() {
        for n in 1..=12 {
            let m = make_linear_model(n).unwrap();
            assert_eq!(m.det(), 1);
            let golden = ((3.0 + 5f64.sqrt()) / 2.0).powi(n as i32);
            assert!((m.lambda_u - golden).abs() / golden < 1e-9);
            let mu = m.apply_vector(m.e_u);
            assert!((mu[0] - m.lambda_u * m.e_u[0]).abs() < 1e-9 * m.lambda_u);
            assert!((m.lambda_u * m.lambda_s() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn apply_examples() {
        let m = make_linear_model(1).unwrap();
        assert_eq!(apply_linear(&m, &TorusPoint::ORIGIN), TorusPoint::ORIGIN);
        let p = apply_linear(&m, &TorusPoint::new(0.5, 0.5));
        assert!((p.u - 0.5).abs() < 1e-15 && p.v.abs() < 1e-15);
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 4, 10] {
            let m = make_linear_model(n).unwrap();
            let tol = 1e-12f64.max(1e-15 * m.lambda_u);
            for _ in 0..1000 {
                let p = TorusPoint::new(rng.random(), rng.random());
                let q = apply_linear_inverse(&m, &apply_linear(&m, &p));
                assert!(p.distance(&q) < tol);
            }
        }
    }

    #[test]
    fn chart_scaling_on_tangent_vectors() {
        let m = make_linear_model(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let d = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let img = m.apply_vector(d);
            let (x0, y0) = (dot(d, E_S), dot(d, E_U));
            let (x1, y1) = (dot(img, E_S), dot(img, E_U));
            assert!((y1 - m.lambda_u * y0).abs() < 1e-10);
            assert!((x1 - m.lambda_s() * x0).abs() < 1e-10);
        }
    }

    #[test]
    fn fixed_point_counts() {
        let expected = [1, 5, 16, 45, 121, 320, 841, 2205];
        for (i, &count) in expected.iter().enumerate() {
            let m = make_linear_model(i as u32 + 1).unwrap();
            let pts = fixed_points_exact(&m);
            assert_eq!(pts.len() as i64, count);
            assert_eq!(m.fixed_point_count(), count);
            let unique: std::collections::HashSet<_> = pts.iter().collect();
            assert_eq!(unique.len(), pts.len());
        }
    }

    #[test]
    fn fixed_points_are_fixed() {
        // rounding the rational point to f64 is amplified by at most λ_u
        for n in 1..=10 {
            let m = make_linear_model(n).unwrap();
            let tol = 1e-12f64.max(1e-15 * m.lambda_u);
            for p in fixed_points(&m) {
                assert!(apply_linear(&m, &p).distance(&p) < tol);
            }
        }
        assert_eq!(fixed_points(&make_linear_model(1).unwrap()), vec![TorusPoint::ORIGIN]);
    }

    #[test]
    fn net_radius() {
        let r1 = epsilon_net_radius(&make_linear_model(1).unwrap(), 200);
        assert!((r1 - 0.5f64.sqrt()).abs() < 1e-2);
        let r3 = epsilon_net_radius(&make_linear_model(3).unwrap(), 300);
        let r5 = epsilon_net_radius(&make_linear_model(5).unwrap(), 300);
        assert!(r5 < r3 && r5 >= 0.0);
    }

    #[test]
    fn nearest_lookup_matches_brute_force() {
        let m = make_linear_model(4).unwrap();
        let pts = fixed_points(&m);
        let index = PointGrid::new(&pts);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let p = TorusPoint::new(rng.random(), rng.random());
            let brute = pts.iter().map(|q| p.distance(q)).fold(f64::INFINITY, f64::min);
            assert_eq!(index.nearest_distance(&p), brute);
        }
    }

    #[test]
    fn dense_line_hits() {
        let m = make_linear_model(10).unwrap();
        let base = TorusPoint::new(0.2, 0.7);
        // a point on the line itself
        let on_line = base.translate([0.3 * E_U[0], 0.3 * E_U[1]]);
        let hit = dense_line_near_point(&m, &base, Direction::Unstable, &on_line, 1e-9).unwrap();
        assert_eq!(hit.winding, 0);
        assert!((hit.t - 0.3).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dir in [Direction::Stable, Direction::Unstable] {
            for _ in 0..50 {
                let target = TorusPoint::new(rng.random(), rng.random());
                let hit = dense_line_near_point(&m, &base, dir, &target, 1e-3).unwrap();
                assert!(hit.distance < 1e-3);
                // the hit lies on the line: base + t·e agrees with it modulo Z²
                let e = if dir == Direction::Unstable { E_U } else { E_S };
                let back = hit.point.translate([-hit.t * e[0], -hit.t * e[1]]);
                assert!(back.distance(&base) < 1e-10);
            }
        }
        assert!(dense_line_near_point(&m, &base, Direction::Stable, &base, 0.0).is_err());
    }
}
