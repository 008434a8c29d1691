//! Class-labelled particles with priority dynamics.
//!
//! Class 1 has the highest priority; a particle of class `k` is a hole for
//! every class `j < k`. Entry at site 1 follows the class-specific rules of
//! [`class_entry_guard`]. Summing classes `1..=j` gives an occupancy process
//! (see [`project`]); for `j = K` it is the occupancy model with entry rate
//! `lambda + epsilon * eta(2)`.

use core::ops::ControlFlow;

use crate::engine::{InitialCondition, RunSpec, Simulation, WindowPolicy};
use crate::harris::{ClockEvent, StreamId};
use crate::model::{apply_bulk_jump, ClassLabel, Configuration, ModelParams};
use crate::{Error, Result};

/// Whether a `ClassEntry(j)` arrival creates a class-`j` particle at site 1,
/// given the labels of sites 1 and 2.
pub fn class_entry_guard(site1: ClassLabel, site2: ClassLabel, j: u16, classes: u16) -> bool {
    if j == 0 || j > classes {
        return false;
    }
    if j == 1 {
        return site1.is_hole() || site1.number().is_some_and(|c| c >= 2);
    }
    if j < classes {
        let site1_ok = site1.is_hole() || site1.number().is_some_and(|c| c > j);
        return site1_ok && site2.number() == Some(j - 1);
    }
    site1.is_hole() && matches!(site2.number(), Some(c) if c == classes - 1 || c == classes)
}

/// Functional single-event update of a class-labelled configuration.
pub fn step_multiclass(
    config: &Configuration,
    event: &ClockEvent,
    classes: u16,
) -> Result<Configuration> {
    let mut next = config.clone();
    match event.stream {
        StreamId::Bulk(x) => {
            let x = x as usize;
            next.ensure_len(x + 1);
            apply_bulk_jump(&mut next, x)?;
        }
        StreamId::ClassEntry(j) => {
            let j = u16::try_from(j).unwrap_or(u16::MAX);
            if class_entry_guard(config.label(1), config.label(2), j, classes) {
                next.ensure_len(2);
                next.set(1, ClassLabel::class(j)?)?;
            }
        }
        StreamId::BoundaryTransition(_) => {
            return Err(Error::Precondition(
                "occupancy-level boundary streams do not act on class labels".into(),
            ))
        }
    }
    Ok(next)
}

/// Occupancy of the classes `1..=j`.
pub fn project(config: &Configuration, j: u16) -> Configuration {
    let occ: alloc::vec::Vec<u8> = config
        .labels()
        .iter()
        .map(|l| l.number().is_some_and(|c| c <= j) as u8)
        .collect();
    Configuration::from_occupancy(&occ)
}

fn sites_agree(classes: &Configuration, occ: &Configuration, cutoff: u16, lo: usize, hi: usize) -> bool {
    (lo.max(1)..=hi).all(|x| classes.label(x).number().is_some_and(|c| c <= cutoff) == occ.occupied(x))
}

fn projection_matches(classes: &Configuration, occ: &Configuration, cutoff: u16) -> bool {
    let hi = classes.window_len().max(occ.window_len());
    sites_agree(classes, occ, cutoff, 1, hi)
}

fn multiclass_spec(lambda: f64, epsilon: f64, classes: u16, horizon: f64, seed: u64) -> Result<RunSpec> {
    let params = ModelParams::new(lambda, epsilon)?.with_classes(classes)?;
    let mut spec = RunSpec::new(params, horizon, seed);
    spec.window = WindowPolicy::DEFAULT_LAZY;
    spec.initial = InitialCondition::Empty;
    spec.validate()?;
    Ok(spec)
}

/// Runs the multiclass process from empty and, alongside it, an occupancy
/// process whose bulk moves use the same bulk arrivals and whose site-1
/// entries fire exactly when a class-entry arrival passes its guard. Returns
/// whether the projection of all classes equals the occupancy process after
/// every event.
///
/// Both states agree before an event and an event only changes the sites it
/// touches, so comparing those sites at each event (plus a full comparison at
/// the start and the end) checks equality at every event time.
pub fn check_projection_identity(
    lambda: f64,
    epsilon: f64,
    classes: u16,
    horizon: f64,
    seed: u64,
) -> Result<bool> {
    let spec = multiclass_spec(lambda, epsilon, classes, horizon, seed)?;
    let mut sim = Simulation::new(&spec)?;
    let mut occ = Configuration::empty(sim.config().window_len());
    let mut ok = projection_matches(sim.config(), &occ, classes);
    let mut failure = None;
    let finished = sim.advance_with(horizon, |event: &ClockEvent, member| {
        let (lo, hi) = match event.stream {
            StreamId::Bulk(x) => {
                let x = x as usize;
                occ.ensure_len(x + 1);
                if let Err(e) = apply_bulk_jump(&mut occ, x) {
                    failure = Some(e);
                    return ControlFlow::Break(());
                }
                (x, x + 1)
            }
            _ => {
                if member.last_applied() && !occ.occupied(1) {
                    occ.ensure_len(1);
                    occ.set_unchecked(1, ClassLabel::FIRST);
                }
                (1, 1)
            }
        };
        if sites_agree(member.config(), &occ, classes, lo, hi) {
            ControlFlow::Continue(())
        } else {
            ControlFlow::Break(())
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    ok &= finished && projection_matches(sim.config(), &occ, classes);
    Ok(ok)
}

/// Negative control: the multiclass run uses `seed` and an independent
/// occupancy run uses `other_seed`. Compares the two states at unit time
/// steps and reports whether they agreed at every checkpoint.
pub fn check_projection_identity_decoupled(
    lambda: f64,
    epsilon: f64,
    classes: u16,
    horizon: f64,
    seed: u64,
    other_seed: u64,
) -> Result<bool> {
    let spec = multiclass_spec(lambda, epsilon, classes, horizon, seed)?;
    let mut occ_spec = RunSpec::new(ModelParams::new(lambda, epsilon)?, horizon, other_seed);
    occ_spec.window = WindowPolicy::DEFAULT_LAZY;
    let mut a = Simulation::new(&spec)?;
    let mut b = Simulation::new(&occ_spec)?;
    let steps = libm::ceil(horizon) as u64;
    for k in 1..=steps {
        let t = (k as f64).min(horizon);
        a.advance_to(t)?;
        b.advance_to(t)?;
        if !projection_matches(a.config(), b.config(), classes) {
            return Ok(false);
        }
    }
    Ok(true)
}
