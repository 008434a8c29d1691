use proptest::prelude::*;

use tasep_core::coupling::{check_attractivity, sandwich_ensemble};
use tasep_core::engine::{evolve, InitialCondition, RunSpec, Simulation, WindowPolicy};
use tasep_core::estimators::rho_from_current;
use tasep_core::harris::{ClockMerge, StreamId};
use tasep_core::model::{apply_bulk_jump, leq, ClassLabel, Configuration, ModelParams};

fn occupancy(max_len: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..2, 1..max_len)
}

fn labels(max_len: usize) -> impl Strategy<Value = Vec<ClassLabel>> {
    prop::collection::vec(
        prop_oneof![Just(ClassLabel::HOLE), (1u16..4).prop_map(|j| ClassLabel::class(j).unwrap())],
        2..max_len,
    )
}

fn sorted_labels(c: &Configuration) -> Vec<ClassLabel> {
    let mut v = c.labels().to_vec();
    v.sort();
    v
}

proptest! {
    #[test]
    fn leq_is_a_partial_order(a in occupancy(12), b in occupancy(12), c in occupancy(12)) {
        let (a, b, c) = (
            Configuration::from_occupancy(&a),
            Configuration::from_occupancy(&b),
            Configuration::from_occupancy(&c),
        );
        prop_assert!(leq(&a, &a));
        if leq(&a, &b) && leq(&b, &a) {
            let n = a.window_len().max(b.window_len());
            prop_assert!((1..=n).all(|x| a.occupied(x) == b.occupied(x)));
        }
        if leq(&a, &b) && leq(&b, &c) {
            prop_assert!(leq(&a, &c));
        }
    }

    #[test]
    fn bulk_jumps_conserve_labels_and_respect_priority(l in labels(16), x in 1usize..15) {
        let mut c = Configuration::from_labels(l);
        prop_assume!(x < c.window_len());
        let before = c.clone();
        let moved = apply_bulk_jump(&mut c, x).unwrap();
        prop_assert_eq!(sorted_labels(&before), sorted_labels(&c));
        prop_assert_eq!(before.particle_count(), c.particle_count());
        if moved {
            prop_assert!(before.label(x).is_particle());
            prop_assert!(before.label(x) < before.label(x + 1));
            prop_assert_eq!(c.label(x), before.label(x + 1));
            prop_assert_eq!(c.label(x + 1), before.label(x));
        } else {
            prop_assert_eq!(&before, &c);
        }
    }

    #[test]
    fn mass_balance_and_determinism(
        lambda in 0.0f64..0.45,
        frac in 0.0f64..1.0,
        seed in any::<u64>(),
        horizon in 1.0f64..80.0,
    ) {
        let epsilon = frac * (0.4999 - lambda);
        let spec = RunSpec::new(ModelParams::new(lambda, epsilon).unwrap(), horizon, seed);
        let (c, s) = evolve(&spec).unwrap();
        prop_assert_eq!(
            s.entries_total as i64 - s.exits_right as i64 - s.destroyed as i64,
            c.particle_count() as i64 - s.initial_particles as i64
        );
        let total: f64 = s.pattern_occupation.values().sum();
        prop_assert!((total - horizon).abs() <= 1e-9 * horizon.max(1.0));
        let again = evolve(&spec).unwrap();
        prop_assert_eq!(again.1.event_log_digest, s.event_log_digest);
        prop_assert_eq!(again.0, c);
    }

    #[test]
    fn particles_only_disappear_by_overwrite_at_site_one(
        lambda in 0.05f64..0.4,
        seed in any::<u64>(),
        horizon in 10.0f64..150.0,
    ) {
        let epsilon = 0.45 - lambda;
        let params = ModelParams::new(lambda, epsilon).unwrap().with_classes(3).unwrap();
        let mut spec = RunSpec::new(params, horizon, seed);
        spec.window = WindowPolicy::DEFAULT_LAZY;
        let mut sim = Simulation::new(&spec).unwrap();
        sim.advance_to(horizon).unwrap();
        let s = sim.stats();
        let counts = sim.config().class_counts(3);
        let destroyed = sim.member().destroyed();
        prop_assert_eq!(destroyed.len() as u64, s.destroyed);
        for d in destroyed {
            prop_assert_eq!(d.position, 1);
            prop_assert!(d.class >= 2);
            prop_assert!(d.birth_time <= d.death_time);
        }
        for j in 1..=3u16 {
            let lost = destroyed.iter().filter(|d| d.class == j).count() as u64;
            prop_assert_eq!(counts[j as usize] as u64, s.entries_of_class(j as usize) - lost);
        }
    }

    #[test]
    fn merged_clock_times_never_decrease(seed in any::<u64>(), n in 1u64..20) {
        let mut m = ClockMerge::new(seed);
        for i in 1..=n {
            m.activate(StreamId::Bulk(i), 1.0, 0.0).unwrap();
        }
        m.activate(StreamId::BoundaryTransition(0), 0.3, 0.0).unwrap();
        let mut last = 0.0;
        for _ in 0..500 {
            let e = m.next_event().unwrap();
            prop_assert!(e.time >= last);
            prop_assert!(e.mark > 0.0 && e.mark < 1.0);
            last = e.time;
        }
    }

    #[test]
    fn density_inverts_current(rho in 0.0f64..0.5) {
        let (r, _) = rho_from_current(rho * (1.0 - rho)).unwrap();
        prop_assert!((r - rho).abs() < 1e-12);
    }

    #[test]
    fn sandwich_never_breaks_order(lambda in 0.0f64..0.4, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let epsilon = frac * (0.4999 - lambda);
        let e = sandwich_ensemble(lambda, epsilon, seed, WindowPolicy::DEFAULT_LAZY).unwrap();
        let r = check_attractivity(&e, 60.0, 2).unwrap();
        prop_assert_eq!(r.violations, 0);
    }

    #[test]
    fn explicit_start_keeps_labels_in_range(l in labels(20), seed in any::<u64>()) {
        let params = ModelParams::new(0.2, 0.1).unwrap().with_classes(3).unwrap();
        let mut spec = RunSpec::new(params, 30.0, seed);
        spec.initial = InitialCondition::Explicit(l);
        let (c, _) = evolve(&spec).unwrap();
        prop_assert!(c.labels().iter().all(|x| x.is_hole() || x.number().is_some_and(|j| (1..=3).contains(&j))));
    }
}
