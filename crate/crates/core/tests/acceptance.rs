//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion, each
//! with its measured value, pinned tolerance and time budget, then fails if
//! any criterion failed.

use std::io::Write;
use std::time::{Duration, Instant};

use semithick::anosov::{build_model, MapModel, ModelParams};
use semithick::artifact::{model_to_string, perturbation_to_string};
use semithick::dynamics::{basin_estimate, leb_s_bounds};
use semithick::linear::{fixed_points_exact, make_linear_model};
use semithick::perturb::{check_delta_lemma, check_smoothing, linearize_levels, random_stripes, SMOOTHING_CONSTANT};
use semithick::report::Report;
use semithick::statistics::{cylinder_frequencies, grid_lipschitz, lipschitz_measure_check, random_rects, ItinerarySeed};
use semithick::stripes::{check_stripe_laws, compute_w, level_threshold};
use semithick::verify::{check_construction, check_differential, differential_cross_check, random_points, verify_finit};

const SEED: u64 = 20_240_601;

const FIXED_POINT_COUNTS: [usize; 5] = [1, 5, 16, 45, 121];
const GRID_POINTS: usize = 1_000_000;
const MIN_DILATION: f64 = 1.2;
const FD_POINTS: usize = 100_000;
const DELTA_STRIPES: usize = 50;
const SMOOTHING_STRIPES: usize = 20;
const SMOOTHING_GAMMA: f64 = 1e-7;
const EXTRA_LEVELS: usize = 5;
/// Enough per cylinder to land in the exit gaps at the deepest level.
const COVERAGE_SAMPLES: usize = 1 << 16;
const FREQUENCY_STEPS: usize = 1_000_000;
const WORD_LENGTH: usize = 5;
const BASIN_SAMPLES: u64 = 1_000_000;
const BASIN_LADDER: [u64; 5] = [0, 4, 16, 64, 256];
const RECTANGLES: usize = 100;
const MC_POINTS: usize = 100_000;
const LIPSCHITZ_GRID: usize = 1_000_000;

/// Written to the stderr handle directly so the lines appear even when the
/// test harness captures output.
fn say(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn failures(r: &Report) -> String {
    r.failures().map(|c| format!("{} = {:e} (limit {:e})", c.name, c.value, c.threshold)).collect::<Vec<_>>().join("; ")
}

struct Run {
    results: Vec<(usize, &'static str, bool)>,
}

impl Run {
    fn criterion(&mut self, id: usize, name: &'static str, budget_s: u64, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let o = f();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget_s);
        let passed = o.passed && in_time;
        say(&format!(
            "{} {id:>2} {name}: {} [{:.2} s of {budget_s} s]",
            if passed { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        ));
        self.results.push((id, name, passed));
    }
}

/// Serialized outputs of every experiment, for the determinism criterion.
fn experiment_outputs(m: &MapModel) -> Vec<String> {
    let lt = level_threshold(m).unwrap();
    let set = compute_w(m, 4, lt.l_lev).unwrap();
    let stage = linearize_levels(m, &set, 2, 4).unwrap();
    let rects = random_rects(m, 10, SEED);
    vec![
        model_to_string(m).unwrap(),
        json(&verify_finit(m, 50_000)),
        json(&basin_estimate(m, 50_000, &BASIN_LADDER, SEED).unwrap()),
        json(&cylinder_frequencies(m, &ItinerarySeed::Bernoulli(SEED), 50_000, 4).unwrap()),
        json(&set),
        perturbation_to_string(&m.params, &stage.patches).unwrap(),
        json(&lipschitz_measure_check(m, &rects, 10_000, 1e5, SEED)),
        format!("{:?}", differential_cross_check(m, &random_points(m, 10_000, SEED))),
    ]
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap()
}

#[test]
fn acceptance() {
    let m = build_model(&ModelParams::default()).unwrap();
    let mut run = Run { results: Vec::new() };

    run.criterion(1, "fixed-point counts of F_Lin", 1, || {
        let mut counts = Vec::new();
        let mut ok = true;
        for (n, &want) in (1..=5).zip(&FIXED_POINT_COUNTS) {
            let lm = make_linear_model(n).unwrap();
            let got = fixed_points_exact(&lm).len();
            ok &= got == want && lm.trace() - 2 == want as i64;
            counts.push(got);
        }
        outcome(ok, format!("counts {counts:?}, expected {FIXED_POINT_COUNTS:?}"))
    });

    let construction = check_construction(&m);
    run.criterion(2, "cylinder measure law", 1, || {
        let c = construction.get("cylinder measure law").unwrap();
        outcome(c.passed, format!("max |relative measure − 2^−|w|| = {:e} ≤ {:e} ({})", c.value, c.threshold, c.detail))
    });

    run.criterion(3, "Bowen map derivatives", 5, || {
        let names = [
            "Bowen map: derivative 2 at realized endpoints",
            "Bowen map: derivative ≥ 2 in the gaps",
            "Bowen map: cylinder endpoints map to cylinder endpoints",
        ];
        let cs: Vec<_> = names.iter().map(|n| construction.get(n).unwrap()).collect();
        outcome(
            cs.iter().all(|c| c.passed),
            format!(
                "|f' − 2| at endpoints = {:e} ≤ {:e} ({}); min gap derivative = {:.12} ≥ {:.12}",
                cs[0].value, cs[0].threshold, cs[0].detail, cs[1].value, cs[1].threshold
            ),
        )
    });

    run.criterion(4, "F_init verification suite", 120, || {
        let r = verify_finit(&m, GRID_POINTS);
        let dil = r.get("vertical dilation ≥ 1.2").unwrap();
        let cone = r.get("strict cone margin").unwrap();
        let ok = r.passed() && dil.value >= MIN_DILATION && cone.value > 0.0;
        let mut d = format!("{} checks, min dilation {:.4}, cone margin {:.4e}", r.checks.len(), dil.value, cone.value);
        if !ok {
            d += &format!("; failed: {}", failures(&r));
        }
        outcome(ok, d)
    });

    run.criterion(5, "analytic vs finite-difference Jacobian", 30, || {
        let r = check_differential(&m, &random_points(&m, FD_POINTS, SEED));
        let (c0, c1) = (&r.checks[0], &r.checks[1]);
        outcome(
            r.passed(),
            format!(
                "max relative error {:e} ≤ {:e} ({}); {}, excess over floor {:e}",
                c0.value, c0.threshold, c0.detail, c1.detail, c1.value
            ),
        )
    });

    let band = m.regions.q_i[0].1 - m.regions.q_i[0].0;
    run.criterion(6, "vertical linearization bound", 60, || {
        let mut worst: f64 = 0.0;
        let mut ok = true;
        let stripes = random_stripes(&m, DELTA_STRIPES, band / 4.0, SEED).unwrap();
        for s in &stripes {
            let r = check_delta_lemma(&m, s).unwrap();
            ok &= r.passed();
            worst = r.checks.iter().map(|c| c.value / c.threshold.max(f64::MIN_POSITIVE)).fold(worst, f64::max);
        }
        ok &= stripes.len() == DELTA_STRIPES;
        outcome(ok, format!("{} stripes, worst dist_Π / (√5·δ) = {worst:.4} ≤ 1", stripes.len()))
    });

    run.criterion(7, "smoothing amplification", 60, || {
        let mut amp: f64 = 0.0;
        let mut sup: f64 = 0.0;
        let mut ok = true;
        let stripes = random_stripes(&m, SMOOTHING_STRIPES, band / 4.0, SEED + 1).unwrap();
        for s in &stripes {
            let r = check_smoothing(&m, s, SMOOTHING_GAMMA).unwrap();
            ok &= r.passed();
            amp = amp.max(r.checks[0].value);
            sup = sup.max(r.checks[1].value);
        }
        ok &= stripes.len() == SMOOTHING_STRIPES;
        outcome(
            ok,
            format!(
                "{} stripes, amplification {amp:.4} ≤ {SMOOTHING_CONSTANT}, C⁰ distance {sup:e} < γ = {SMOOTHING_GAMMA:e}",
                stripes.len()
            ),
        )
    });

    run.criterion(8, "stripe laws", 120, || {
        let lt = level_threshold(&m).unwrap();
        let levels = lt.l_lev + EXTRA_LEVELS;
        let set = compute_w(&m, levels, lt.l_lev).unwrap();
        let r = check_stripe_laws(&m, &set, lt.l_lev, COVERAGE_SAMPLES);
        let mut d = format!("levels 0..={levels} (L = {}), {} curves, {} checks", lt.l_lev, set.curves.len(), r.checks.len());
        if !r.passed() {
            d += &format!("; failed: {}", failures(&r));
        }
        outcome(r.passed(), d)
    });

    run.criterion(9, "word frequencies of a coin-toss orbit", 60, || {
        // a statistical criterion: one rerun with a fresh seed is allowed
        let mut tries = Vec::new();
        for seed in [SEED, SEED + 1] {
            let t = cylinder_frequencies(&m, &ItinerarySeed::Bernoulli(seed), FREQUENCY_STEPS, WORD_LENGTH).unwrap();
            tries.push(format!("seed {seed}: worst deviation / 4σ = {:.4}, defect {:e}", t.worst_ratio(), t.max_defect));
            if t.within_bound() && t.rows.len() == (1 << (WORD_LENGTH + 1)) - 2 {
                return outcome(true, tries.join("; "));
            }
        }
        outcome(false, tries.join("; "))
    });

    run.criterion(10, "basin estimate", 300, || {
        let est = basin_estimate(&m, BASIN_SAMPLES, &BASIN_LADDER, SEED).unwrap();
        let (lo, hi) = leb_s_bounds(&m);
        let r0 = est.rungs.iter().find(|r| r.t == 0).unwrap();
        let matches = (r0.p_in - lo).abs() <= r0.ci;
        let last = est.rungs.iter().find(|r| r.t == 256).unwrap();
        outcome(
            matches && est.monotone,
            format!(
                "p_in(0) = {:e} ± {:e} vs Leb(S) ∈ [{lo:e}, {hi:e}]; monotone {}; p_in(256) = {:e} ± {:e}, unresolved {:e}",
                r0.p_in, r0.ci, est.monotone, last.p_in, last.ci, last.p_unresolved
            ),
        )
    });

    run.criterion(11, "Lipschitz measure inequality", 120, || {
        let lip = grid_lipschitz(&m, LIPSCHITZ_GRID);
        let r = lipschitz_measure_check(&m, &random_rects(&m, RECTANGLES, SEED), MC_POINTS, lip, SEED);
        let mut d = format!("{RECTANGLES} rectangles × {MC_POINTS} points, Lip = {lip:.6e}");
        if !r.passed() {
            d += &format!("; failed: {}", failures(&r));
        }
        outcome(r.passed(), d)
    });

    run.criterion(12, "determinism across runs and thread counts", 300, || {
        let with_threads = |n: usize| {
            rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| experiment_outputs(&m))
        };
        let a = with_threads(1);
        let b = with_threads(4);
        let c = with_threads(1);
        let same = a == b && a == c;
        let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        outcome(same, format!("{} outputs compared, {differing} differ", a.len()))
    });

    let failed: Vec<_> = run.results.iter().filter(|r| !r.2).map(|r| format!("{} {}", r.0, r.1)).collect();
    say(&format!("{} of {} criteria passed", run.results.len() - failed.len(), run.results.len()));
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
