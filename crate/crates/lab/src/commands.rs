//! One function per subcommand. Each validates everything it reads from the
//! config before starting any simulation.

use tasep_core::coupling::{check_attractivity, sandwich_ensemble};
use tasep_core::engine::WindowPolicy;
use tasep_core::estimators::{
    density_profile, derive_seed, estimate_class_entry_rates, estimate_current, estimate_first_order,
    estimate_survival, replica_seed, rho_from_current, Lattice, ReplicaPlan, SurvivalOutcome,
};
use tasep_core::model::{concrete_mechanism, ModelParams, RightBoundary};
use tasep_core::multiclass::{check_projection_identity, check_projection_identity_decoupled};
use tasep_core::oracle::{solve, FiniteModelSpec};

use crate::config::{ConfigError, ExperimentConfig, Subcommand};
use crate::output::{Cell, Table};
use crate::runner::RayonRunner;
use crate::LabError;

/// Everything a subcommand produces besides the manifest bookkeeping.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub replica_seeds: Vec<u64>,
    pub warning: Option<String>,
    /// Human-readable lines echoed to stdout.
    pub lines: Vec<String>,
}

pub fn dispatch(sub: Subcommand, cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    match sub {
        Subcommand::Current => current(cfg),
        Subcommand::Survival => survival(cfg),
        Subcommand::FirstOrder => first_order(cfg),
        Subcommand::Sandwich => sandwich(cfg),
        Subcommand::Profile => profile(cfg),
        Subcommand::OracleCheck => oracle_check(cfg),
        Subcommand::ProjectionCheck => projection_check(cfg),
    }
}

fn seeds(master: u64, count: usize) -> Vec<u64> {
    (0..count).map(|i| replica_seed(master, i)).collect()
}

fn plan(cfg: &ExperimentConfig, burn_in: f64, horizon: f64, replicas: usize) -> Result<ReplicaPlan, ConfigError> {
    Ok(ReplicaPlan::new(
        cfg.burn_in(burn_in)?,
        cfg.horizon(horizon)?,
        cfg.replicas(replicas)?,
        cfg.seed(),
    )
    .with_lattice(cfg.lattice()?))
}

fn current(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let (lambda, epsilon) = cfg.rates()?;
    let classes = cfg.classes(1)?;
    let plan = plan(cfg, 5e3, 2e4, 50)?;
    let params = ModelParams::new(lambda, epsilon)?.with_classes(classes)?;

    let est = estimate_current(&params, &plan, &RayonRunner)?;
    let e = est.estimate;
    let density = rho_from_current(e.point).map_or(f64::NAN, |r| r.0);
    let mut table = Table::new(
        "current",
        &[
            "lambda", "epsilon", "classes", "estimate", "std_error", "replicas", "seed", "burn_in",
            "horizon", "batch_means_se", "density",
        ],
    );
    table.push(vec![
        lambda.into(),
        epsilon.into(),
        (classes as u64).into(),
        e.point.into(),
        e.std_error.into(),
        e.replicas.into(),
        plan.seed.into(),
        plan.burn_in.into(),
        plan.horizon.into(),
        est.batch_means_se.into(),
        density.into(),
    ]);
    let mut out = Outcome {
        lines: vec![format!("current {:.6} +- {:.6}", e.point, e.std_error)],
        replica_seeds: est.replica_seeds,
        tables: vec![table],
        warning: None,
    };
    if classes > 1 {
        let rates = estimate_class_entry_rates(&params, &plan, &RayonRunner)?;
        let mut t = Table::new("class_entry_rates", &["class", "estimate", "std_error", "replicas", "seed"]);
        for (j, r) in rates.iter().enumerate() {
            t.push(vec![(j + 1).into(), r.point.into(), r.std_error.into(), r.replicas.into(), plan.seed.into()]);
        }
        out.tables.push(t);
    }
    Ok(out)
}

fn survival(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let spec = cfg.survival_spec()?;
    let est = estimate_survival(&spec, &RayonRunner)?;
    let p = est.probability;
    let (v, v_se) = est.speed.map_or((f64::NAN, f64::NAN), |s| (s.point, s.std_error));
    let mut table = Table::new(
        "survival",
        &[
            "lambda", "x_far", "t_max", "estimate", "std_error", "replicas", "seed", "survived",
            "died", "censored", "censored_fraction", "speed", "speed_std_error",
        ],
    );
    table.push(vec![
        spec.lambda.into(),
        spec.x_far.into(),
        spec.t_max.into(),
        p.point.into(),
        p.std_error.into(),
        spec.replicas.into(),
        spec.seed.into(),
        est.survived.into(),
        est.died.into(),
        est.censored.into(),
        est.censored_fraction.into(),
        v.into(),
        v_se.into(),
    ]);
    let mut records = Table::new(
        "survival_records",
        &["replica", "seed", "outcome", "death_time", "max_position", "half_way_time", "far_time"],
    );
    for (i, r) in est.records.iter().enumerate() {
        let outcome = match r.outcome {
            SurvivalOutcome::Survived => "survived",
            SurvivalOutcome::Died => "died",
            SurvivalOutcome::Censored => "censored",
        };
        records.push(vec![
            i.into(),
            r.seed.into(),
            outcome.into(),
            r.death_time.unwrap_or(f64::NAN).into(),
            r.max_position.into(),
            r.half_way_time.unwrap_or(f64::NAN).into(),
            r.far_time.unwrap_or(f64::NAN).into(),
        ]);
    }
    Ok(Outcome {
        tables: vec![table, records],
        replica_seeds: seeds(spec.seed, spec.replicas),
        warning: est.unreliable.then(|| {
            format!(
                "censored fraction {:.3} exceeds 0.05; raise t_max or x_far",
                est.censored_fraction
            )
        }),
        lines: vec![format!("survival {:.6} +- {:.6}", p.point, p.std_error)],
    })
}

fn first_order(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let lambda = cfg.lambda()?;
    let grid = cfg.eps_grid(lambda)?;
    let plan = plan(cfg, 2e3, 2e4, 200)?;
    let est = estimate_first_order(lambda, &grid, &plan, &RayonRunner)?;
    let mut table = Table::new(
        "first_order",
        &["kind", "lambda", "epsilon", "estimate", "std_error", "replicas", "seed"],
    );
    for (eps, e) in &est.per_epsilon {
        table.push(vec![
            "difference_quotient".into(),
            lambda.into(),
            (*eps).into(),
            e.point.into(),
            e.std_error.into(),
            e.replicas.into(),
            plan.seed.into(),
        ]);
    }
    table.push(vec![
        "slope".into(),
        lambda.into(),
        0.0.into(),
        est.slope.point.into(),
        est.slope.std_error.into(),
        est.slope.replicas.into(),
        plan.seed.into(),
    ]);
    Ok(Outcome {
        tables: vec![table],
        replica_seeds: seeds(plan.seed, plan.replicas * grid.len()),
        warning: (!est.differences_nonnegative)
            .then(|| "a coupled count difference was negative".to_string()),
        lines: vec![format!("slope {:.6} +- {:.6}", est.slope.point, est.slope.std_error)],
    })
}

fn sandwich(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let (lambda, epsilon) = cfg.rates()?;
    let horizon = cfg.horizon(1e3)?;
    let count = cfg.replicas(100)?;
    let lattice = cfg.lattice()?;
    let seed = cfg.seed();

    let (window, right) = match lattice {
        Lattice::HalfLine => (WindowPolicy::DEFAULT_LAZY, RightBoundary::HalfLine),
        Lattice::Open {
            len,
            reservoir_density,
        } => (WindowPolicy::Fixed(len), RightBoundary::OpenExit { reservoir_density }),
    };
    let mut ensemble = sandwich_ensemble(lambda, epsilon, seed, window)?;
    for m in &mut ensemble.members {
        m.params = m.params.with_right_boundary(right)?;
    }
    let report = check_attractivity(&ensemble, horizon, count)?;
    let mut table = Table::new(
        "sandwich",
        &[
            "estimate", "std_error", "replicas", "seed", "events_checked", "first_violation_seed",
            "first_violation_time", "first_violation_site",
        ],
    );
    let first = report.first_violation.as_ref();
    table.push(vec![
        Cell::Int(report.violations),
        0.0.into(),
        count.into(),
        seed.into(),
        report.events_checked.into(),
        first.map_or(Cell::Text(String::new()), |v| v.seed.into()),
        first.map_or(f64::NAN, |v| v.time).into(),
        first.map_or(0, |v| v.site).into(),
    ]);
    let verdict = if report.violations == 0 { "PASS" } else { "FAIL" };
    Ok(Outcome {
        tables: vec![table],
        replica_seeds: seeds(seed, count),
        warning: None,
        lines: vec![format!(
            "{verdict} order violations {} over {} events and {count} seeds",
            report.violations, report.events_checked
        )],
    })
}

fn profile(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let (lambda, epsilon) = cfg.rates()?;
    let plan = plan(cfg, 5e3, 2e4, 50)?;
    let sites = cfg.sites()?;
    let params = ModelParams::new(lambda, epsilon)?;
    let prof = density_profile(&params, &plan, sites, &RayonRunner)?;
    let mut table = Table::new("profile", &["site", "estimate", "std_error", "replicas", "seed"]);
    for (k, e) in prof.iter().enumerate() {
        table.push(vec![
            (sites.0 + k).into(),
            e.point.into(),
            e.std_error.into(),
            e.replicas.into(),
            plan.seed.into(),
        ]);
    }
    Ok(Outcome {
        tables: vec![table],
        replica_seeds: seeds(plan.seed, plan.replicas),
        warning: None,
        lines: Vec::new(),
    })
}

/// Grid of the oracle comparison; config values narrow it.
pub fn oracle_grid(cfg: &ExperimentConfig) -> Result<Vec<(usize, f64, f64)>, ConfigError> {
    let lens = match cfg.lattice_len {
        Some(l) if (2..=tasep_core::oracle::MAX_SITES).contains(&l) => vec![l],
        Some(l) => return Err(ConfigError::field("L", format!("{l} not in [2, 12]"))),
        None => vec![2, 3, 4],
    };
    let lambdas = match cfg.lambda {
        Some(_) => vec![cfg.lambda()?],
        None => vec![0.1, 0.3],
    };
    let epsilons = match cfg.epsilon {
        Some(_) => vec![cfg.rates()?.1],
        None => vec![0.0, 0.05],
    };
    let mut grid = Vec::new();
    for &l in &lens {
        for &lambda in &lambdas {
            for &eps in &epsilons {
                if lambda + eps >= 0.5 {
                    return Err(ConfigError::field("epsilon", "lambda + epsilon must be < 1/2"));
                }
                grid.push((l, lambda, eps));
            }
        }
    }
    Ok(grid)
}

fn oracle_check(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let grid = oracle_grid(cfg)?;
    let burn_in = cfg.burn_in(100.0)?;
    let horizon = cfg.horizon(2e4)?;
    let replicas = cfg.replicas(50)?;
    let rho = cfg.reservoir_density.unwrap_or(0.0);
    if !(0.0..1.0).contains(&rho) {
        return Err(ConfigError::field("reservoir_density", format!("{rho} not in [0, 1)")).into());
    }
    let seed = cfg.seed();

    let mut table = Table::new(
        "oracle_check",
        &["L", "lambda", "epsilon", "exact", "estimate", "std_error", "replicas", "seed", "pass"],
    );
    let mut lines = Vec::new();
    let mut all_seeds = Vec::new();
    let mut failures = 0;
    for (g, &(len, lambda, eps)) in grid.iter().enumerate() {
        let spec = FiniteModelSpec::new(len, concrete_mechanism(lambda, eps)?, rho)?;
        let (_, exact) = solve(&spec)?;
        let point_seed = derive_seed(seed, g as u64);
        let plan = ReplicaPlan::new(burn_in, horizon, replicas, point_seed).with_lattice(Lattice::Open {
            len,
            reservoir_density: rho,
        });
        let est = estimate_current(&ModelParams::new(lambda, eps)?, &plan, &RayonRunner)?;
        let e = est.estimate;
        let pass = e.covers(exact, 3.0);
        failures += usize::from(!pass);
        all_seeds.extend(est.replica_seeds);
        lines.push(format!(
            "{} L={len} lambda={lambda} epsilon={eps} exact={exact:.6} estimate={:.6} se={:.6}",
            if pass { "PASS" } else { "FAIL" },
            e.point,
            e.std_error
        ));
        table.push(vec![
            len.into(),
            lambda.into(),
            eps.into(),
            exact.into(),
            e.point.into(),
            e.std_error.into(),
            replicas.into(),
            point_seed.into(),
            pass.into(),
        ]);
    }
    Ok(Outcome {
        tables: vec![table],
        replica_seeds: all_seeds,
        warning: (failures > 0).then(|| format!("{failures} grid points outside 3 standard errors")),
        lines,
    })
}

fn projection_check(cfg: &ExperimentConfig) -> Result<Outcome, LabError> {
    let (lambda, epsilon) = cfg.rates()?;
    let classes = cfg.classes(3)?;
    let horizon = cfg.horizon(1e3)?;
    let count = cfg.replicas(100)?;
    let seed = cfg.seed();

    let replica_seeds = seeds(seed, count);
    let mut passed = 0;
    for &s in &replica_seeds {
        passed += usize::from(check_projection_identity(lambda, epsilon, classes, horizon, s)?);
    }
    let controls = count.min(10);
    let mut control_failures = 0;
    if epsilon > 0.0 || lambda > 0.0 {
        for &s in &replica_seeds[..controls] {
            let other = s ^ 0xD1B5_4A32_D192_ED03;
            control_failures += usize::from(!check_projection_identity_decoupled(
                lambda, epsilon, classes, horizon, s, other,
            )?);
        }
    }
    let mut table = Table::new(
        "projection_check",
        &["estimate", "std_error", "replicas", "seed", "passed", "control_runs", "control_failures"],
    );
    table.push(vec![
        (passed as f64 / count as f64).into(),
        0.0.into(),
        count.into(),
        seed.into(),
        passed.into(),
        controls.into(),
        control_failures.into(),
    ]);
    let verdict = if passed == count { "PASS" } else { "FAIL" };
    Ok(Outcome {
        tables: vec![table],
        replica_seeds,
        warning: None,
        lines: vec![format!(
            "{verdict} projection identity on {passed}/{count} seeds; decoupled control failed on {control_failures}/{controls}"
        )],
    })
}
