mod common;

use fbdiag::fde::{Belief, Component, Evidence, FdeError, Hypothesis, LikelihoodTable};
use common::bayes::{close, oracle};
use proptest::prelude::*;

fn evidence() -> impl Strategy<Value = Evidence> {
    let component = prop_oneof![
        Just(Component::Sensor),
        Just(Component::Conversion),
        Just(Component::Controller),
        Just(Component::ActuatorOrPlant),
    ];
    prop_oneof![
        Just(Evidence::Outlier),
        Just(Evidence::Inconsistency),
        Just(Evidence::Latency),
        Just(Evidence::ErrorBranch),
        Just(Evidence::MissingAck),
        Just(Evidence::RateAnomaly),
        component.clone().prop_map(Evidence::SegmentMatch),
        component.prop_map(Evidence::SegmentMismatch),
        Just(Evidence::ExonerateSensor),
        Just(Evidence::ExoneratePlant),
    ]
}

fn weights() -> impl Strategy<Value = [f64; 5]> {
    prop::array::uniform5(0.01f64..1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn posterior_stays_normalized_and_matches_bayes(prior in weights(), seq in prop::collection::vec(evidence(), 0..20)) {
        let table = LikelihoodTable::default();
        let prior = Belief::new(prior).unwrap();
        let mut b = prior;
        let mut rows = Vec::new();
        for e in &seq {
            table.apply(&mut b, *e).unwrap();
            rows.push(table.row(*e));
        }
        let p = b.probabilities();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{p:?}");
        prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        let expected = oracle(prior.probabilities(), &rows);
        prop_assert!(close(p, expected, 1e-9), "{p:?} vs {expected:?}");
    }

    #[test]
    fn uniform_likelihood_scaling_changes_nothing(prior in weights(), row in weights(), k in 1e-3f64..1e3) {
        let mut a = Belief::new(prior).unwrap();
        let mut b = a;
        a.update(&row).unwrap();
        b.update(&row.map(|l| l * k)).unwrap();
        prop_assert!(close(a.probabilities(), b.probabilities(), 1e-12));
        prop_assert_eq!(a.map(), b.map());
    }

    #[test]
    fn evidence_order_does_not_matter(prior in weights(), seq in prop::collection::vec(evidence(), 1..12), rot in 0usize..12) {
        let table = LikelihoodTable::default();
        let mut a = Belief::new(prior).unwrap();
        let mut b = a;
        for e in &seq {
            table.apply(&mut a, *e).unwrap();
        }
        let mut rotated = seq.clone();
        rotated.rotate_left(rot % seq.len());
        for e in &rotated {
            table.apply(&mut b, *e).unwrap();
        }
        prop_assert!(close(a.probabilities(), b.probabilities(), 1e-9));
    }

    #[test]
    fn zero_row_is_rejected_without_side_effects(prior in weights()) {
        let mut b = Belief::new(prior).unwrap();
        let before = b;
        prop_assert_eq!(b.update(&[0.0; 5]), Err(FdeError::DegenerateUpdate));
        prop_assert_eq!(b, before);
    }
}

#[test]
fn default_prior_favours_no_fault() {
    assert_eq!(Belief::default().map(), Hypothesis::NoFault);
    assert!((Belief::default().prob(Hypothesis::NoFault) - 0.6).abs() < 1e-12);
}
