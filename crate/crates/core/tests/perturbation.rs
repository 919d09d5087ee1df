//! Level linearization on the computed stripes of the default model.

use std::sync::OnceLock;

use semithick::anosov::{build_model, FiberMap, MapModel, ModelParams};
use semithick::perturb::{check_levels, level_stripes, linearize_levels, stripe_distance, linearize_on_stripe, RoughStripe};
use semithick::statistics::{distortion, VerticalSegment};
use semithick::stripes::{compute_w, StripeSet};

fn fixture() -> &'static (MapModel, StripeSet) {
    static F: OnceLock<(MapModel, StripeSet)> = OnceLock::new();
    F.get_or_init(|| {
        let m = build_model(&ModelParams::default()).unwrap();
        let set = compute_w(&m, 5, 2).unwrap();
        (m, set)
    })
}

#[test]
fn no_levels_is_the_identity() {
    let (m, set) = fixture();
    let map = linearize_levels(m, set, 3, 3).unwrap();
    assert!(map.patches.is_empty());
    assert!(linearize_levels(m, set, 4, 3).is_err());
    assert!(linearize_levels(m, set, 2, 6).is_err());
}

#[test]
fn stages_keep_the_curves_and_class_predicates() {
    let (m, set) = fixture();
    let mut previous = f64::INFINITY;
    for n in [2, 3, 4] {
        let map = linearize_levels(m, set, n, 5).unwrap();
        let rep = check_levels(m, set, &map, n, 5, 20).unwrap();
        for c in &rep.checks {
            if c.name.contains("δ_init") {
                // the change of the differential shrinks as the first level grows
                assert!(c.value < previous, "{rep}");
                previous = c.value;
            } else {
                assert!(c.passed, "{rep}");
            }
        }
    }
}

#[test]
fn later_stages_leave_earlier_stripes_alone() {
    let (m, set) = fixture();
    let early = linearize_levels(m, set, 2, 3).unwrap();
    let late = linearize_levels(m, set, 2, 5).unwrap();
    for s in level_stripes(m, set, 2, 3).unwrap() {
        for (x, y) in s.samples(m, 8, 9, None) {
            assert_eq!(early.vertical(s.branch, x, y), late.vertical(s.branch, x, y));
        }
    }
}

#[test]
fn linearized_stripes_have_no_distortion() {
    let (m, set) = fixture();
    let map = linearize_levels(m, set, 2, 5).unwrap();
    for s in level_stripes(m, set, 2, 5).unwrap().iter().step_by(5) {
        let x = 0.5 * (s.x.0 + s.x.1);
        let (lo, hi) = (s.lower.eval(m, x).0, s.upper.eval(m, x).0);
        // interior of the stripe: its boundary curves belong to either side
        let pad = 0.01 * (hi - lo);
        let seg = VerticalSegment { x, y: (lo + pad, hi - pad) };
        assert_eq!(distortion(&map, &seg, 1, 33), 1.0);
    }
}

#[test]
fn chain_stripes_satisfy_the_linearization_bound() {
    let (m, set) = fixture();
    let stripe: RoughStripe = level_stripes(m, set, 3, 4).unwrap().remove(0);
    let lin = linearize_on_stripe(m, &stripe).unwrap();
    let rep = semithick::perturb::check_delta_lemma(m, &stripe).unwrap();
    assert!(rep.passed(), "{rep}");
    assert!(stripe_distance(m, &lin, &stripe) > 0.0);
}
