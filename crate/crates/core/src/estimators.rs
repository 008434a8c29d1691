//! Replica-level Monte Carlo estimators.
//!
//! Every estimator is a pure function of its inputs and master seed: replica
//! `i` uses [`replica_seed`]`(seed, i)` and results are reduced in replica
//! order, so the way replicas are scheduled (see [`ReplicaRunner`]) cannot
//! change any output bit.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use crate::coupling::{CoupledEnsemble, EnsembleMember};
use crate::engine::{
    RunSpec, Rules, Simulation, Sweep, SweepOptions, TrajectoryStats, WindowPolicy,
};
use crate::harris::{derive_aux_rng, mix64, uniform_open01};
use crate::model::{BoundaryMechanism, ClassLabel, Configuration, ModelParams, Pattern, RightBoundary};
use crate::stats::{mean_and_se, ratio_and_se, weighted_line_fit};
use crate::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed of replica `index` under a master seed.
pub fn replica_seed(master: u64, index: usize) -> u64 {
    master ^ (index as u64).wrapping_mul(GOLDEN_GAMMA)
}

/// Master seed of sub-experiment `domain` (a grid point, say). Unlike
/// nesting [`replica_seed`], the derived replica seeds of different domains
/// do not collide.
pub fn derive_seed(master: u64, domain: u64) -> u64 {
    mix64(master ^ mix64(domain.wrapping_add(GOLDEN_GAMMA)))
}

/// Executes independent replicas, returning results in index order.
pub trait ReplicaRunner {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs replicas one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ReplicaRunner for Sequential {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(f).collect()
    }
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateWithCI {
    pub point: f64,
    pub std_error: f64,
    pub replicas: usize,
    pub burn_in: f64,
    pub horizon: f64,
    pub batches: usize,
}

impl EstimateWithCI {
    fn from_samples(samples: &[f64], burn_in: f64, horizon: f64) -> Self {
        let (point, se) = mean_and_se(samples);
        EstimateWithCI {
            point,
            std_error: se,
            replicas: samples.len(),
            burn_in,
            horizon,
            batches: 1,
        }
    }

    /// Whether `value` lies within `k` standard errors of the point.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.point - value).abs() <= k * self.std_error
    }
}

/// Lattice used by the stationary estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lattice {
    /// Unbounded lattice grown on demand.
    HalfLine,
    /// Sites `1..=len` with exit from `len` at rate `1 - reservoir_density`.
    Open { len: usize, reservoir_density: f64 },
}

impl Lattice {
    pub const DEFAULT: Lattice = Lattice::Open {
        len: 512,
        reservoir_density: 0.0,
    };

    fn apply(self, params: &ModelParams) -> Result<(ModelParams, WindowPolicy)> {
        match self {
            Lattice::HalfLine => Ok((
                params.with_right_boundary(RightBoundary::HalfLine)?,
                WindowPolicy::DEFAULT_LAZY,
            )),
            Lattice::Open {
                len,
                reservoir_density,
            } => Ok((
                params.with_right_boundary(RightBoundary::OpenExit { reservoir_density })?,
                WindowPolicy::Fixed(len),
            )),
        }
    }
}

/// Replica layout shared by the stationary estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaPlan {
    pub burn_in: f64,
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    pub lattice: Lattice,
}

impl ReplicaPlan {
    pub fn new(burn_in: f64, horizon: f64, replicas: usize, seed: u64) -> Self {
        ReplicaPlan {
            burn_in,
            horizon,
            replicas,
            seed,
            lattice: Lattice::DEFAULT,
        }
    }

    pub fn with_lattice(mut self, lattice: Lattice) -> Self {
        self.lattice = lattice;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.burn_in >= 0.0 && self.burn_in.is_finite()) {
            return Err(Error::InvalidHorizon(self.burn_in));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidHorizon(self.horizon));
        }
        if self.replicas < 2 {
            return Err(Error::InvalidParams("at least two replicas are needed".into()));
        }
        Ok(())
    }
}

/// Post-burn-in statistics of one replica, split into `batches` equal batches.
fn stationary_replica(
    params: &ModelParams,
    plan: &ReplicaPlan,
    index: usize,
    observed: Option<(usize, usize)>,
    batches: usize,
) -> Result<Vec<TrajectoryStats>> {
    let (params, window) = plan.lattice.apply(params)?;
    let mut spec = RunSpec::new(params, plan.burn_in + plan.horizon, replica_seed(plan.seed, index));
    spec.window = window;
    spec.observed_sites = observed;
    let mut sim = Simulation::new(&spec)?;
    sim.advance_to(plan.burn_in)?;
    let mut prev = sim.stats();
    let mut out = Vec::with_capacity(batches);
    for b in 1..=batches {
        let t = plan.burn_in + plan.horizon * b as f64 / batches as f64;
        sim.advance_to(t)?;
        let now = sim.stats();
        out.push(now.since(&prev));
        prev = now;
    }
    Ok(out)
}

fn net_entries(s: &TrajectoryStats) -> f64 {
    s.entries_total as f64 - s.destroyed as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurrentEstimate {
    pub estimate: EstimateWithCI,
    pub per_replica: Vec<f64>,
    pub replica_seeds: Vec<u64>,
    /// Standard error from pooled within-run batch means (diagnostic only).
    pub batch_means_se: f64,
}

/// Stationary entry current: net particles entering per unit time after
/// `burn_in`, averaged over replicas started from empty.
pub fn estimate_current<R: ReplicaRunner + ?Sized>(
    params: &ModelParams,
    plan: &ReplicaPlan,
    runner: &R,
) -> Result<CurrentEstimate> {
    params.validate()?;
    plan.validate()?;
    const BATCHES: usize = 10;
    let runs = collect(runner.map(plan.replicas, |i| {
        stationary_replica(params, plan, i, None, BATCHES)
    }))?;
    let batch_len = plan.horizon / BATCHES as f64;
    let per_replica: Vec<f64> = runs
        .iter()
        .map(|r| r.iter().map(net_entries).sum::<f64>() / plan.horizon)
        .collect();
    let pooled: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.iter().map(|s| net_entries(s) / batch_len))
        .collect();
    let mut estimate = EstimateWithCI::from_samples(&per_replica, plan.burn_in, plan.horizon);
    estimate.batches = BATCHES;
    Ok(CurrentEstimate {
        estimate,
        replica_seeds: (0..plan.replicas).map(|i| replica_seed(plan.seed, i)).collect(),
        per_replica,
        batch_means_se: mean_and_se(&pooled).1,
    })
}

/// Entry rate of each class `1..=K` (index `j - 1`) after `burn_in`.
pub fn estimate_class_entry_rates<R: ReplicaRunner + ?Sized>(
    params: &ModelParams,
    plan: &ReplicaPlan,
    runner: &R,
) -> Result<Vec<EstimateWithCI>> {
    params.validate()?;
    plan.validate()?;
    let runs = collect(runner.map(plan.replicas, |i| {
        stationary_replica(params, plan, i, None, 1).map(|mut v| v.remove(0))
    }))?;
    Ok((1..=params.num_classes as usize)
        .map(|j| {
            let samples: Vec<f64> = runs
                .iter()
                .map(|s| s.entries_of_class(j) as f64 / plan.horizon)
                .collect();
            EstimateWithCI::from_samples(&samples, plan.burn_in, plan.horizon)
        })
        .collect())
}

/// Time-averaged occupation of each site in `sites` after `burn_in`.
pub fn density_profile<R: ReplicaRunner + ?Sized>(
    params: &ModelParams,
    plan: &ReplicaPlan,
    sites: (usize, usize),
    runner: &R,
) -> Result<Vec<EstimateWithCI>> {
    params.validate()?;
    plan.validate()?;
    let (a, b) = sites;
    if a == 0 || b < a {
        return Err(Error::InvalidParams(alloc::format!("bad site range {a}..={b}")));
    }
    if let Lattice::Open { len, .. } = plan.lattice {
        if b > len {
            return Err(Error::SiteOutOfWindow { site: b, len });
        }
    }
    let runs = collect(runner.map(plan.replicas, |i| {
        stationary_replica(params, plan, i, Some(sites), 1).map(|mut v| v.remove(0))
    }))?;
    Ok((0..=b - a)
        .map(|k| {
            let samples: Vec<f64> = runs
                .iter()
                .map(|s| s.observed_occupation[k] / plan.horizon)
                .collect();
            EstimateWithCI::from_samples(&samples, plan.burn_in, plan.horizon)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRateEstimate {
    /// Arrivals of the transition's clock while the block showed the pattern.
    pub counted: EstimateWithCI,
    /// Transition rate times the fraction of time the block showed the pattern.
    pub occupation: EstimateWithCI,
}

/// Long-run rate of arrivals of boundary transition `index` that find the
/// boundary block in `pattern`, on the open lattice `1..=len`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_event_rate<R: ReplicaRunner + ?Sized>(
    mechanism: &BoundaryMechanism,
    index: usize,
    pattern: Pattern,
    len: usize,
    reservoir_density: f64,
    plan: &ReplicaPlan,
    runner: &R,
) -> Result<EventRateEstimate> {
    plan.validate()?;
    let t = *mechanism.transition(index)?;
    if t.to == pattern {
        return Err(Error::Precondition(
            "the observed pattern must differ from the transition's target".into(),
        ));
    }
    let params = ModelParams::new(0.0, 0.0)?
        .with_right_boundary(RightBoundary::OpenExit { reservoir_density })?;
    let runs = collect(runner.map(plan.replicas, |i| {
        let mut spec = RunSpec::new(params, plan.burn_in + plan.horizon, replica_seed(plan.seed, i));
        spec.window = WindowPolicy::Fixed(len);
        spec.mechanism = Some(mechanism.clone());
        let mut sim = Simulation::new(&spec)?;
        sim.advance_to(plan.burn_in)?;
        let a = sim.stats();
        sim.advance_to(plan.burn_in + plan.horizon)?;
        Ok(sim.stats().since(&a))
    }))?;
    let counted: Vec<f64> = runs
        .iter()
        .map(|s| s.boundary_arrivals[index][pattern.bits() as usize] as f64 / plan.horizon)
        .collect();
    let occupation: Vec<f64> = runs
        .iter()
        .map(|s| t.rate * s.pattern_occupation.get(&pattern).copied().unwrap_or(0.0) / plan.horizon)
        .collect();
    Ok(EventRateEstimate {
        counted: EstimateWithCI::from_samples(&counted, plan.burn_in, plan.horizon),
        occupation: EstimateWithCI::from_samples(&occupation, plan.burn_in, plan.horizon),
    })
}

/// Density `rho <= 1/2` with `rho (1 - rho) = j`, and whether `j` sits at
/// the maximal current `1/4`.
pub fn rho_from_current(j: f64) -> Result<(f64, bool)> {
    if !(0.0..=0.25).contains(&j) {
        return Err(Error::OutOfRange {
            value: j,
            lo: 0.0,
            hi: 0.25,
        });
    }
    let disc = 1.0 - 4.0 * j;
    // 2j / (1 + sqrt(1 - 4j)) avoids cancellation for small j
    let rho = 2.0 * j / (1.0 + libm::sqrt(disc));
    Ok((rho, j == 0.25))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurvivalOutcome {
    Survived,
    Died,
    Censored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalRecord {
    pub seed: u64,
    pub entry_time: f64,
    pub death_time: Option<f64>,
    pub max_position: usize,
    pub outcome: SurvivalOutcome,
    pub half_way_time: Option<f64>,
    pub far_time: Option<f64>,
    /// `(time, position)` samples of the tagged particle.
    pub path: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalSpec {
    pub lambda: f64,
    pub x_far: usize,
    pub t_max: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Sites kept beyond `x_far`.
    pub margin: usize,
    /// Sampling interval of recorded paths; `None` records no path.
    pub path_every: Option<f64>,
}

impl SurvivalSpec {
    pub fn default_t_max(lambda: f64, x_far: usize) -> f64 {
        if lambda >= 0.5 {
            5e3
        } else {
            f64::max(5e3, 20.0 * x_far as f64 / (1.0 - 2.0 * lambda))
        }
    }

    pub fn new(lambda: f64, replicas: usize, seed: u64) -> Self {
        SurvivalSpec {
            lambda,
            x_far: 200,
            t_max: Self::default_t_max(lambda, 200),
            replicas,
            seed,
            margin: 50,
            path_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.lambda) {
            return Err(Error::InvalidParams(alloc::format!(
                "lambda {} not in [0, 1/2]",
                self.lambda
            )));
        }
        if self.x_far < 10 {
            return Err(Error::InvalidParams("x_far must be at least 10".into()));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidHorizon(self.t_max));
        }
        if self.replicas < 2 {
            return Err(Error::InvalidParams("at least two replicas are needed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalEstimate {
    /// Fraction survived among non-censored replicas.
    pub probability: EstimateWithCI,
    pub survived: usize,
    pub died: usize,
    pub censored: usize,
    pub censored_fraction: f64,
    /// Set when more than 5% of replicas were censored.
    pub unreliable: bool,
    /// Survivor speed between `x_far / 2` and `x_far` (ratio of sums).
    pub speed: Option<EstimateWithCI>,
    pub records: Vec<SurvivalRecord>,
}

/// One tagged second-class particle started at site 1, a first-class
/// particle at site 2 and Bernoulli(lambda) first-class particles beyond.
/// First-class particles enter at rate lambda and destroy the tagged
/// particle if it sits on site 1. The right end is an open exit with
/// reservoir density lambda, which keeps Bernoulli(lambda) stationary for
/// the first-class particles.
pub fn survival_replica(spec: &SurvivalSpec, index: usize) -> Result<SurvivalRecord> {
    let seed = replica_seed(spec.seed, index);
    let len = spec.x_far + spec.margin;
    let mut rng = derive_aux_rng(seed, 2);
    let mut labels = vec![ClassLabel::HOLE; len];
    labels[0] = ClassLabel::class(2)?;
    labels[1] = ClassLabel::FIRST;
    for l in labels.iter_mut().skip(2) {
        if uniform_open01(&mut rng) < spec.lambda {
            *l = ClassLabel::FIRST;
        }
    }
    let rules = Rules::Classes {
        lambda: spec.lambda,
        epsilon: 0.0,
        classes: 2,
    };
    let opts = SweepOptions {
        seed,
        right: RightBoundary::OpenExit {
            reservoir_density: spec.lambda,
        },
        window: WindowPolicy::Fixed(len),
        observed: None,
        record_events: false,
    };
    let mut sweep = Sweep::new(opts, vec![(Configuration::from_labels(labels), rules)])?;

    let tagged = ClassLabel::class(2)?;
    let half = spec.x_far / 2;
    let mut pos = 1usize;
    let mut max_position = 1usize;
    let mut death = None;
    let mut half_way = None;
    let mut far = None;
    let mut path = Vec::new();
    let mut next_sample = 0.0;
    if spec.path_every.is_some() {
        path.push((0.0, 1));
    }
    sweep.advance_with(spec.t_max, |event, members| {
        let m = &members[0];
        if !m.last_applied() {
            return ControlFlow::Continue(());
        }
        if !m.destroyed().is_empty() {
            death = Some(event.time);
            return ControlFlow::Break(());
        }
        let (lo, hi) = m.last_touched();
        if (lo..=hi).contains(&pos) {
            pos = (lo..=hi).find(|&x| m.config().label(x) == tagged).unwrap_or(pos);
        }
        if let Some(dt) = spec.path_every {
            if event.time >= next_sample {
                path.push((event.time, pos));
                next_sample = event.time + dt;
            }
        }
        if pos > max_position {
            max_position = pos;
            if half_way.is_none() && pos >= half {
                half_way = Some(event.time);
            }
            if pos >= spec.x_far {
                far = Some(event.time);
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    })?;
    let outcome = if death.is_some() {
        SurvivalOutcome::Died
    } else if far.is_some() {
        SurvivalOutcome::Survived
    } else {
        SurvivalOutcome::Censored
    };
    Ok(SurvivalRecord {
        seed,
        entry_time: 0.0,
        death_time: death,
        max_position,
        outcome,
        half_way_time: half_way,
        far_time: far,
        path,
    })
}

/// Survival probability of the tagged second-class particle.
pub fn estimate_survival<R: ReplicaRunner + ?Sized>(
    spec: &SurvivalSpec,
    runner: &R,
) -> Result<SurvivalEstimate> {
    spec.validate()?;
    let records = collect(runner.map(spec.replicas, |i| survival_replica(spec, i)))?;
    let count = |o| records.iter().filter(|r| r.outcome == o).count();
    let (survived, died, censored) = (
        count(SurvivalOutcome::Survived),
        count(SurvivalOutcome::Died),
        count(SurvivalOutcome::Censored),
    );
    let decided = survived + died;
    let (p, se) = if decided == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let p = survived as f64 / decided as f64;
        (p, libm::sqrt(p * (1.0 - p) / decided as f64))
    };
    let probability = EstimateWithCI {
        point: p,
        std_error: se,
        replicas: decided,
        burn_in: 0.0,
        horizon: spec.t_max,
        batches: 1,
    };
    let distance = (spec.x_far - spec.x_far / 2) as f64;
    let (dist, time): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter_map(|r| Some((distance, r.far_time? - r.half_way_time?)))
        .unzip();
    let speed = (dist.len() >= 2).then(|| {
        let (v, se) = ratio_and_se(&dist, &time);
        EstimateWithCI {
            point: v,
            std_error: se,
            replicas: dist.len(),
            burn_in: 0.0,
            horizon: spec.t_max,
            batches: 1,
        }
    });
    let censored_fraction = censored as f64 / records.len() as f64;
    Ok(SurvivalEstimate {
        probability,
        survived,
        died,
        censored,
        censored_fraction,
        unreliable: censored_fraction > 0.05,
        speed,
        records,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderEstimate {
    /// Intercept at epsilon -> 0 of the coupled difference quotient.
    pub slope: EstimateWithCI,
    /// Per-epsilon mean of `(N(model) - N(TASEP)) / (epsilon * horizon)`.
    pub per_epsilon: Vec<(f64, EstimateWithCI)>,
    /// Coefficient of epsilon in the fit.
    pub curvature: f64,
    pub curvature_se: f64,
    /// Whether the cumulative coupled difference was nonnegative in every replica.
    pub differences_nonnegative: bool,
}

/// Coefficient of epsilon in the current, from TASEP(lambda) and
/// model(lambda, epsilon) run on the same clocks for each epsilon in the grid,
/// extrapolated to epsilon -> 0 by weighted least squares.
pub fn estimate_first_order<R: ReplicaRunner + ?Sized>(
    lambda: f64,
    eps_grid: &[f64],
    plan: &ReplicaPlan,
    runner: &R,
) -> Result<FirstOrderEstimate> {
    plan.validate()?;
    if eps_grid.len() < 3 {
        return Err(Error::InvalidParams("the epsilon grid needs at least 3 points".into()));
    }
    for &e in eps_grid {
        if !(e > 0.0 && lambda + e < 0.5) {
            return Err(Error::InvalidParams(alloc::format!(
                "epsilon {e} outside (0, 1/2 - lambda)"
            )));
        }
    }
    let mut per_epsilon = Vec::new();
    let mut nonneg = true;
    for (k, &eps) in eps_grid.iter().enumerate() {
        let (model, window) = plan.lattice.apply(&ModelParams::new(lambda, eps)?)?;
        let tasep = ModelParams::new(lambda, 0.0)?.with_right_boundary(model.right_boundary)?;
        let runs = collect(runner.map(plan.replicas, |i| -> Result<(f64, bool)> {
            let seed = replica_seed(plan.seed, k * plan.replicas + i);
            let ensemble = CoupledEnsemble::new(
                vec![EnsembleMember::empty("tasep", tasep), EnsembleMember::empty("model", model)],
                seed,
                window,
            );
            let mut sweep = ensemble.sweep(seed)?;
            sweep.advance_to(plan.burn_in)?;
            let (a0, a1) = (sweep.stats(0), sweep.stats(1));
            sweep.advance_to(plan.burn_in + plan.horizon)?;
            let (b0, b1) = (sweep.stats(0), sweep.stats(1));
            let cumulative_ok = b1.entries_total >= b0.entries_total;
            let diff = net_entries(&b1.since(&a1)) - net_entries(&b0.since(&a0));
            Ok((diff / (eps * plan.horizon), cumulative_ok))
        }))?;
        nonneg &= runs.iter().all(|r| r.1);
        let samples: Vec<f64> = runs.iter().map(|r| r.0).collect();
        per_epsilon.push((eps, EstimateWithCI::from_samples(&samples, plan.burn_in, plan.horizon)));
    }
    let x: Vec<f64> = per_epsilon.iter().map(|p| p.0).collect();
    let y: Vec<f64> = per_epsilon.iter().map(|p| p.1.point).collect();
    let se: Vec<f64> = per_epsilon.iter().map(|p| p.1.std_error).collect();
    let (a, a_se, b, b_se) = weighted_line_fit(&x, &y, &se)
        .ok_or_else(|| Error::Singular("degenerate epsilon regression".into()))?;
    Ok(FirstOrderEstimate {
        slope: EstimateWithCI {
            point: a,
            std_error: a_se,
            replicas: plan.replicas * eps_grid.len(),
            burn_in: plan.burn_in,
            horizon: plan.horizon,
            batches: 1,
        },
        per_epsilon,
        curvature: b,
        curvature_se: b_se,
        differences_nonnegative: nonneg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replica_seeds_follow_golden_gamma() {
        assert_eq!(replica_seed(42, 0), 42);
        assert_eq!(replica_seed(0, 1), 0x9E37_79B9_7F4A_7C15);
        assert_eq!(replica_seed(7, 2), 7 ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(2));
    }

    #[test]
    fn derived_seeds_do_not_alias() {
        let a = replica_seed(derive_seed(1, 1), 2);
        let b = replica_seed(derive_seed(1, 2), 1);
        assert_ne!(a, b);
        assert_eq!(derive_seed(9, 3), derive_seed(9, 3));
    }

    #[test]
    fn rho_from_current_examples() {
        assert_eq!(rho_from_current(0.0).unwrap(), (0.0, false));
        assert_eq!(rho_from_current(0.25).unwrap(), (0.5, true));
        assert!((rho_from_current(0.21).unwrap().0 - 0.3).abs() < 1e-15);
        assert!(rho_from_current(0.2500001).is_err());
        assert!(rho_from_current(-0.1).is_err());
        for k in 0..500 {
            let l = k as f64 / 1000.0;
            assert!((rho_from_current(l * (1.0 - l)).unwrap().0 - l).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_entry_rate_gives_zero_current() {
        let p = ModelParams::new(0.0, 0.3).unwrap();
        let plan = ReplicaPlan::new(10.0, 100.0, 3, 1);
        let e = estimate_current(&p, &plan, &Sequential).unwrap();
        assert_eq!(e.estimate.point, 0.0);
        assert_eq!(e.estimate.std_error, 0.0);
    }

    #[test]
    fn short_current_run_is_plausible() {
        let p = ModelParams::new(0.3, 0.0).unwrap();
        let plan = ReplicaPlan::new(200.0, 1000.0, 8, 3).with_lattice(Lattice::Open {
            len: 64,
            reservoir_density: 0.0,
        });
        let e = estimate_current(&p, &plan, &Sequential).unwrap();
        assert!(e.estimate.covers(0.21, 5.0), "{:?}", e.estimate);
        assert_eq!(e.per_replica.len(), 8);
        assert!(e.batch_means_se > 0.0);
    }

    #[test]
    fn estimators_are_deterministic() {
        let p = ModelParams::new(0.25, 0.05).unwrap();
        let plan = ReplicaPlan::new(50.0, 200.0, 3, 11).with_lattice(Lattice::Open {
            len: 40,
            reservoir_density: 0.0,
        });
        assert_eq!(
            estimate_current(&p, &plan, &Sequential).unwrap(),
            estimate_current(&p, &plan, &Sequential).unwrap()
        );
    }

    #[test]
    fn event_rate_preconditions() {
        let mech = crate::model::concrete_mechanism(0.3, 0.0).unwrap();
        let plan = ReplicaPlan::new(10.0, 100.0, 2, 1);
        let target = mech.transitions()[0].to;
        assert!(estimate_event_rate(&mech, 0, target, 3, 0.0, &plan, &Sequential).is_err());
        let zero = crate::model::concrete_mechanism(0.0, 0.0).unwrap();
        let e = estimate_event_rate(&zero, 0, Pattern::from_bits(0), 3, 0.0, &plan, &Sequential)
            .unwrap();
        assert_eq!(e.occupation.point, 0.0);
    }

    #[test]
    fn survival_without_competition_is_certain() {
        let spec = SurvivalSpec {
            x_far: 30,
            t_max: 500.0,
            margin: 10,
            ..SurvivalSpec::new(0.0, 20, 4)
        };
        let s = estimate_survival(&spec, &Sequential).unwrap();
        assert_eq!(s.probability.point, 1.0);
        assert_eq!(s.died, 0);
        assert_eq!(s.censored, 0);
    }

    #[test]
    fn survival_records_are_consistent() {
        let spec = SurvivalSpec {
            x_far: 40,
            t_max: 2000.0,
            margin: 20,
            path_every: Some(5.0),
            ..SurvivalSpec::new(0.25, 30, 8)
        };
        let s = estimate_survival(&spec, &Sequential).unwrap();
        for r in &s.records {
            match r.outcome {
                SurvivalOutcome::Died => assert!(r.death_time.is_some_and(|t| t <= spec.t_max)),
                SurvivalOutcome::Survived => {
                    assert!(r.max_position >= spec.x_far && r.death_time.is_none())
                }
                SurvivalOutcome::Censored => assert!(r.max_position < spec.x_far),
            }
            assert!(!r.path.is_empty());
        }
        assert_eq!(s.survived + s.died + s.censored, 30);
        assert!(s.died > 0 && s.survived > 0);
    }

    #[test]
    fn first_order_rejects_bad_grids() {
        let plan = ReplicaPlan::new(10.0, 100.0, 2, 1);
        assert!(estimate_first_order(0.25, &[0.0, 0.01, 0.02], &plan, &Sequential).is_err());
        assert!(estimate_first_order(0.25, &[0.01, 0.02], &plan, &Sequential).is_err());
        assert!(estimate_first_order(0.25, &[0.01, 0.02, 0.3], &plan, &Sequential).is_err());
    }
}
