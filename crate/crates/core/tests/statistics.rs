//! Statistical checks against exact values, at desk-scale sample sizes.

use tasep_core::coupling::{coupled_evolve, CoupledEnsemble, EnsembleMember};
use tasep_core::engine::{evolve, validate_truncation, RunSpec, WindowPolicy};
use tasep_core::estimators::{
    density_profile, estimate_current, estimate_event_rate, replica_seed, Lattice, ReplicaPlan,
    Sequential,
};
use tasep_core::harris::{ClockMerge, StreamId};
use tasep_core::model::{concrete_mechanism, ModelParams, Pattern, RightBoundary};
use tasep_core::oracle::{exact_event_rate, solve, FiniteModelSpec};

fn open(len: usize) -> Lattice {
    Lattice::Open {
        len,
        reservoir_density: 0.0,
    }
}

#[test]
fn event_rate_matches_oracle_on_three_sites() {
    let mech = concrete_mechanism(0.3, 0.0).unwrap();
    let spec = FiniteModelSpec::new(3, mech.clone(), 0.0).unwrap();
    let (pi, _) = solve(&spec).unwrap();
    let empty = Pattern::parse("00").unwrap();
    let exact = exact_event_rate(&pi, &mech, 0, empty).unwrap();
    let plan = ReplicaPlan::new(50.0, 5e3, 40, 17);
    let est = estimate_event_rate(&mech, 0, empty, 3, 0.0, &plan, &Sequential).unwrap();
    assert!(est.counted.covers(exact, 3.0), "{:?} vs {exact}", est.counted);
    assert!(est.occupation.covers(exact, 3.0), "{:?} vs {exact}", est.occupation);
    let combined = (est.counted.std_error.powi(2) + est.occupation.std_error.powi(2)).sqrt();
    assert!((est.counted.point - est.occupation.point).abs() <= 3.0 * combined);
}

#[test]
fn unreachable_pattern_has_zero_rate() {
    let mech = concrete_mechanism(0.0, 0.0).unwrap();
    let plan = ReplicaPlan::new(0.0, 100.0, 2, 1);
    let full = Pattern::parse("11").unwrap();
    let est = estimate_event_rate(&mech, 0, full, 3, 0.0, &plan, &Sequential).unwrap();
    assert_eq!(est.counted.point, 0.0);
    assert_eq!(est.occupation.point, 0.0);
}

#[test]
fn perturbed_current_lies_in_the_sandwich() {
    let p = ModelParams::new(0.25, 0.05).unwrap();
    let plan = ReplicaPlan::new(500.0, 5e3, 10, 23).with_lattice(open(128));
    let e = estimate_current(&p, &plan, &Sequential).unwrap().estimate;
    assert!(e.point >= 0.1875 - 3.0 * e.std_error);
    assert!(e.point <= 0.21 + 3.0 * e.std_error);
}

#[test]
fn empty_profile_without_entries() {
    let p = ModelParams::new(0.0, 0.0).unwrap();
    let plan = ReplicaPlan::new(10.0, 100.0, 2, 1).with_lattice(open(60));
    let prof = density_profile(&p, &plan, (3, 50), &Sequential).unwrap();
    assert_eq!(prof.len(), 48);
    assert!(prof.iter().all(|e| e.point == 0.0));
}

#[test]
fn coupled_tasep_member_carries_its_own_current() {
    let right = RightBoundary::OpenExit { reservoir_density: 0.0 };
    let tasep = ModelParams::new(0.25, 0.0).unwrap().with_right_boundary(right).unwrap();
    let model = ModelParams::new(0.25, 0.05).unwrap().with_right_boundary(right).unwrap();
    let mut rates = Vec::new();
    for i in 0..8 {
        let e = CoupledEnsemble::new(
            vec![EnsembleMember::empty("tasep", tasep), EnsembleMember::empty("model", model)],
            replica_seed(99, i),
            WindowPolicy::Fixed(128),
        );
        let out = coupled_evolve(&e, 4000.0).unwrap();
        assert!(out[1].1.entries_total >= out[0].1.entries_total);
        rates.push(out[0].1.entries_total as f64 / 4000.0);
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    assert!((mean - 0.1875).abs() < 0.01, "{mean}");
}

#[test]
fn truncation_check_examples() {
    let mut spec = RunSpec::new(ModelParams::new(0.3, 0.05).unwrap(), 300.0, 4);
    spec.window = WindowPolicy::Fixed(1500);
    assert!(validate_truncation(&spec, 20, 2).unwrap());

    let params = ModelParams::new(0.3, 0.0)
        .unwrap()
        .with_right_boundary(RightBoundary::OpenExit { reservoir_density: 0.0 })
        .unwrap();
    let mut tiny = RunSpec::new(params, 1e3, 4);
    tiny.window = WindowPolicy::Fixed(5);
    assert!(!validate_truncation(&tiny, 5, 2).unwrap());
}

#[test]
fn class_one_marginal_is_a_tasep() {
    let t = 40.0;
    let reps = 500;
    let mut multi = [0.0f64; 10];
    let mut plain = [0.0f64; 10];
    for i in 0..reps {
        let k3 = ModelParams::new(0.25, 0.05).unwrap().with_classes(3).unwrap();
        let (c, _) = evolve(&RunSpec::new(k3, t, replica_seed(1, i))).unwrap();
        let (d, _) = evolve(&RunSpec::new(ModelParams::new(0.25, 0.0).unwrap(), t, replica_seed(2, i))).unwrap();
        for x in 1..=10 {
            multi[x - 1] += f64::from(c.label(x).number() == Some(1));
            plain[x - 1] += f64::from(d.occupied(x));
        }
    }
    for x in 0..10 {
        let (p, q) = (multi[x] / reps as f64, plain[x] / reps as f64);
        let se = ((p * (1.0 - p) + q * (1.0 - q)) / reps as f64).sqrt();
        assert!((p - q).abs() <= 3.5 * se, "site {}: {p} vs {q}", x + 1);
    }
}

#[test]
fn nested_thinning_is_poisson() {
    // marks below 0.1/0.4 of a rate-0.4 source: Exp(0.1) gaps, KS test
    let mut m = ClockMerge::new(5);
    m.activate(StreamId::BoundaryTransition(0), 0.4, 0.0).unwrap();
    let mut last = 0.0;
    let mut gaps = Vec::new();
    while gaps.len() < 4000 {
        let e = m.next_event().unwrap();
        if e.mark * 0.4 < 0.1 {
            gaps.push(e.time - last);
            last = e.time;
        }
    }
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len() as f64;
    let d = gaps
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let f = 1.0 - (-0.1 * g).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value
    assert!(d < 1.63 / n.sqrt(), "KS distance {d}");
}
