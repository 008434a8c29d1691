//! Basic coupling of several occupancy models on one set of clocks.
//!
//! All members share the bulk clocks, the right-exit marks and one entry
//! source of rate `S = max(lambda + epsilon)`. An entry arrival with mark
//! `u` creates a particle at an empty site 1 of a member iff
//! `u * S < lambda + epsilon * eta(2)` for that member, so a member with
//! smaller entry rates accepts a subset of the arrivals accepted by a larger
//! one. With ordered starting configurations the sitewise order is then
//! preserved event by event.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use crate::engine::{Rules, Sweep, SweepOptions, TrajectoryStats, WindowPolicy};
use crate::estimators::replica_seed;
use crate::harris::StreamId;
use crate::model::{leq, Configuration, ModelParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub label: String,
    pub params: ModelParams,
    pub initial: Configuration,
}

impl EnsembleMember {
    pub fn new(label: &str, params: ModelParams, initial: Configuration) -> Self {
        EnsembleMember {
            label: label.into(),
            params,
            initial,
        }
    }

    /// Member started from the empty lattice.
    pub fn empty(label: &str, params: ModelParams) -> Self {
        Self::new(label, params, Configuration::empty(1))
    }
}

/// Members evolved under one shared Harris system.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledEnsemble {
    pub members: Vec<EnsembleMember>,
    pub seed: u64,
    pub window: WindowPolicy,
}

impl CoupledEnsemble {
    pub fn new(members: Vec<EnsembleMember>, seed: u64, window: WindowPolicy) -> Self {
        CoupledEnsemble {
            members,
            seed,
            window,
        }
    }

    /// Rate of the shared entry source.
    pub fn source_rate(&self) -> f64 {
        self.members
            .iter()
            .map(|m| m.params.lambda + m.params.epsilon)
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.members.first() else {
            return Err(Error::InvalidParams("ensemble has no members".into()));
        };
        for m in &self.members {
            m.params.validate()?;
            if m.params.num_classes != 1 {
                return Err(Error::InvalidParams(
                    "coupled members must be single-class occupancy models".into(),
                ));
            }
            if m.params.right_boundary != first.params.right_boundary {
                return Err(Error::InvalidParams(
                    "coupled members must share the right boundary".into(),
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn sweep(&self, seed: u64) -> Result<Sweep> {
        self.validate()?;
        let source_rate = self.source_rate();
        let members = self
            .members
            .iter()
            .map(|m| {
                let (l, e) = (m.params.lambda, m.params.epsilon);
                // pattern bits: site 1 is bit 0, site 2 is bit 1
                let rules = Rules::SharedEntry {
                    range: 2,
                    rate_by_pattern: vec![l, l, l + e, l + e],
                    source_rate,
                };
                (m.initial.clone(), rules)
            })
            .collect();
        let opts = SweepOptions {
            seed,
            right: self.members[0].params.right_boundary,
            window: self.window,
            observed: None,
            record_events: false,
        };
        Sweep::new(opts, members)
    }
}

/// Evolves every member to `horizon` in one chronological sweep.
pub fn coupled_evolve(
    ensemble: &CoupledEnsemble,
    horizon: f64,
) -> Result<Vec<(Configuration, TrajectoryStats)>> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidHorizon(horizon));
    }
    let mut sweep = ensemble.sweep(ensemble.seed)?;
    sweep.advance_to(horizon)?;
    Ok((0..ensemble.members.len())
        .map(|i| (sweep.members()[i].config().clone(), sweep.stats(i)))
        .collect())
}

/// First event after which an initially ordered pair was out of order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderViolation {
    pub seed: u64,
    pub time: f64,
    pub stream: StreamId,
    pub lower: usize,
    pub upper: usize,
    pub site: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractivityReport {
    pub seeds: usize,
    /// Member index pairs `a < b` whose configurations were ordered at time 0;
    /// only these are checked. Members are listed from lowest to highest.
    pub ordered_pairs: Vec<(usize, usize)>,
    pub events_checked: u64,
    pub violations: u64,
    pub first_violation: Option<OrderViolation>,
}

fn first_disorder(a: &Configuration, b: &Configuration, lo: usize, hi: usize) -> Option<usize> {
    (lo.max(1)..=hi).find(|&x| a.occupied(x) && !b.occupied(x))
}

/// Runs the ensemble on `seeds` replica seeds derived from its master seed
/// and counts, after every applied event, the initially ordered pairs that
/// lost their order. Only the sites an event touched are compared; the full
/// configurations are compared again at the horizon.
pub fn check_attractivity(
    ensemble: &CoupledEnsemble,
    horizon: f64,
    seeds: usize,
) -> Result<AttractivityReport> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidHorizon(horizon));
    }
    ensemble.validate()?;
    let n = ensemble.members.len();
    let mut pairs = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if leq(&ensemble.members[a].initial, &ensemble.members[b].initial) {
                pairs.push((a, b));
            }
        }
    }
    let mut report = AttractivityReport {
        seeds,
        ordered_pairs: pairs.clone(),
        events_checked: 0,
        violations: 0,
        first_violation: None,
    };
    for s in 0..seeds {
        let seed = replica_seed(ensemble.seed, s);
        let mut sweep = ensemble.sweep(seed)?;
        let mut events = 0;
        let mut violations = 0;
        let mut first = None;
        sweep.advance_with(horizon, |event, members| {
            let mut lo = usize::MAX;
            let mut hi = 0;
            for m in members {
                if m.last_applied() {
                    lo = lo.min(m.last_touched().0);
                    hi = hi.max(m.last_touched().1);
                }
            }
            if hi == 0 {
                return ControlFlow::Continue(());
            }
            events += 1;
            for &(a, b) in &pairs {
                if let Some(site) = first_disorder(members[a].config(), members[b].config(), lo, hi) {
                    violations += 1;
                    if first.is_none() {
                        first = Some(OrderViolation {
                            seed,
                            time: event.time,
                            stream: event.stream,
                            lower: a,
                            upper: b,
                            site,
                        });
                    }
                }
            }
            ControlFlow::Continue(())
        })?;
        for &(a, b) in &pairs {
            if !leq(sweep.members()[a].config(), sweep.members()[b].config()) {
                violations += 1;
            }
        }
        report.events_checked += events;
        report.violations += violations;
        if report.first_violation.is_none() {
            report.first_violation = first;
        }
    }
    Ok(report)
}

/// The ensemble TASEP(lambda) <= model(lambda, epsilon) <= TASEP(lambda + epsilon),
/// all from empty.
pub fn sandwich_ensemble(
    lambda: f64,
    epsilon: f64,
    seed: u64,
    window: WindowPolicy,
) -> Result<CoupledEnsemble> {
    let model = ModelParams::new(lambda, epsilon)?;
    let lower = ModelParams::new(lambda, 0.0)?.with_right_boundary(model.right_boundary)?;
    let upper = ModelParams::new(lambda + epsilon, 0.0)?;
    Ok(CoupledEnsemble::new(
        vec![
            EnsembleMember::empty("tasep-lower", lower),
            EnsembleMember::empty("model", model),
            EnsembleMember::empty("tasep-upper", upper),
        ],
        seed,
        window,
    ))
}
