//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use tasep_core::coupling::{check_attractivity, sandwich_ensemble};
use tasep_core::engine::WindowPolicy;
use tasep_core::estimators::{
    density_profile, derive_seed, estimate_class_entry_rates, estimate_current,
    estimate_first_order, estimate_survival, EstimateWithCI, Lattice, ReplicaPlan, SurvivalEstimate, SurvivalSpec,
};
use tasep_core::model::{concrete_mechanism, ModelParams};
use tasep_core::multiclass::check_projection_identity;
use tasep_core::oracle::{build_generator, exact_entry_current, stationary_distribution, FiniteModelSpec};
use tasep_lab::runner::RayonRunner;

const SEED: u64 = 20_240_601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn survival_full(lambda: f64, domain: u64) -> SurvivalEstimate {
    let spec = SurvivalSpec::new(lambda, 2000, derive_seed(SEED, domain));
    estimate_survival(&spec, &RayonRunner).expect("survival")
}

fn survival(lambda: f64, domain: u64) -> EstimateWithCI {
    survival_full(lambda, domain).probability
}

fn zero_epsilon_current() -> Verdict {
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, &l) in [0.1, 0.2, 0.3, 0.4].iter().enumerate() {
        let p = ModelParams::new(l, 0.0).unwrap();
        let plan = ReplicaPlan::new(5e3, 2e4, 50, derive_seed(SEED, 100 + k as u64));
        let e = estimate_current(&p, &plan, &RayonRunner).unwrap().estimate;
        let exact = l * (1.0 - l);
        let ok = e.covers(exact, 3.0) && e.std_error <= 0.005;
        pass &= ok;
        detail.push(format!("lambda={l}: {:.5}+-{:.5} vs {exact:.5}", e.point, e.std_error));
    }
    verdict(pass, detail.join("; "))
}

fn oracle_equivalence() -> Verdict {
    let mut pass = true;
    let mut worst: f64 = 0.0;
    let mut flux: f64 = 0.0;
    let mut g = 0;
    for len in [2, 3, 4] {
        for lambda in [0.1, 0.3] {
            for eps in [0.0, 0.05] {
                let spec = FiniteModelSpec::new(len, concrete_mechanism(lambda, eps).unwrap(), 0.0).unwrap();
                let q = build_generator(&spec).unwrap();
                let pi = stationary_distribution(&q).unwrap();
                let exact = match exact_entry_current(&pi, &spec) {
                    Ok(j) => j,
                    Err(e) => return verdict(false, format!("L={len}: {e}")),
                };
                let last = 1usize << (len - 1);
                let exit: f64 = pi.iter().enumerate().filter(|(s, _)| s & last != 0).map(|(_, p)| p).sum();
                flux = flux.max((exact - exit).abs());
                let plan = ReplicaPlan::new(100.0, 2e4, 50, derive_seed(SEED, 200 + g))
                    .with_lattice(Lattice::Open { len, reservoir_density: 0.0 });
                g += 1;
                let e = estimate_current(&ModelParams::new(lambda, eps).unwrap(), &plan, &RayonRunner)
                    .unwrap()
                    .estimate;
                pass &= e.covers(exact, 3.0);
                worst = worst.max((e.point - exact).abs() / e.std_error);
            }
        }
    }
    pass &= flux <= 1e-10;
    verdict(pass, format!("12 grid points, worst deviation {worst:.2} SE, flux imbalance {flux:.1e}"))
}

fn survival_shape(s25: &SurvivalEstimate) -> Verdict {
    let p25 = &s25.probability;
    let p0 = survival(0.0, 300);
    let p50 = survival(0.5, 301);
    let grid = [0.1, 0.2, 0.3, 0.4];
    let ps: Vec<EstimateWithCI> = grid
        .iter()
        .enumerate()
        .map(|(k, &l)| survival(l, 310 + k as u64))
        .collect();
    let monotone = ps.windows(2).all(|w| {
        w[1].point <= w[0].point + 3.0 * (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt()
    });
    let speed = s25.speed;
    let speed_ok = speed.is_some_and(|v| (v.point - 0.5).abs() <= 0.05);
    let pass = p0.point == 1.0 && p50.point <= 0.02 && monotone && speed_ok;
    let listed: Vec<String> = grid
        .iter()
        .zip(&ps)
        .map(|(l, p)| format!("p({l})={:.4}+-{:.4}", p.point, p.std_error))
        .collect();
    verdict(
        pass,
        format!(
            "p(0)={} p(0.5)={:.4} {} p(0.25)={:.4}+-{:.4} speed(0.25)={:.4}",
            p0.point,
            p50.point,
            listed.join(" "),
            p25.point,
            p25.std_error,
            speed.map_or(f64::NAN, |v| v.point)
        ),
    )
}

fn first_order_law(p25: &EstimateWithCI) -> Verdict {
    let lambda = 0.25;
    let plan = ReplicaPlan::new(2e3, 2e4, 200, derive_seed(SEED, 400));
    let est = estimate_first_order(lambda, &[0.01, 0.02, 0.04], &plan, &RayonRunner).unwrap();
    let product = lambda * (1.0 - lambda) * p25.point;
    let product_se = lambda * (1.0 - lambda) * p25.std_error;
    let combined = (est.slope.std_error.powi(2) + product_se.powi(2)).sqrt();
    let tolerance = 3.0 * combined + 0.15 * product;
    let gap = (est.slope.point - product).abs();
    verdict(
        gap <= tolerance && est.differences_nonnegative,
        format!(
            "slope {:.5}+-{:.5} vs lambda(1-lambda)p = {product:.5}+-{product_se:.5}, gap {gap:.5} <= {tolerance:.5}",
            est.slope.point, est.slope.std_error
        ),
    )
}

fn class_layering() -> Verdict {
    let lambda = 0.25;
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, &eps) in [0.02, 0.05].iter().enumerate() {
        let params = ModelParams::new(lambda, eps).unwrap().with_classes(3).unwrap();
        let plan = ReplicaPlan::new(0.0, 2e4, 20, derive_seed(SEED, 500 + k as u64));
        let rates = estimate_class_entry_rates(&params, &plan, &RayonRunner).unwrap();
        let (n2, n3) = (rates[1].point, rates[2].point);
        let bound = 1.1 * eps * lambda * (1.0 - lambda);
        let ratio = n3 / n2;
        pass &= n2 <= bound && ratio <= 10.0 * eps;
        detail.push(format!("eps={eps}: N2/t={n2:.5} <= {bound:.5}, N3/N2={ratio:.4} <= {:.2}", 10.0 * eps));
    }
    verdict(pass, detail.join("; "))
}

fn projection_identity() -> Verdict {
    let failed: Vec<u64> = (0..100)
        .filter(|&i| !check_projection_identity(0.25, 0.05, 3, 1e3, derive_seed(SEED, 600 + i)).unwrap())
        .collect();
    verdict(failed.is_empty(), format!("{} of 100 seeds disagreed", failed.len()))
}

fn attractivity() -> Verdict {
    let e = sandwich_ensemble(0.25, 0.05, derive_seed(SEED, 700), WindowPolicy::DEFAULT_LAZY).unwrap();
    let r = check_attractivity(&e, 1e3, 100).unwrap();
    verdict(
        r.violations == 0 && r.events_checked > 0,
        format!("{} violations over {} events, 100 seeds", r.violations, r.events_checked),
    )
}

fn density_sandwich() -> Verdict {
    let params = ModelParams::new(0.25, 0.05).unwrap();
    let plan = ReplicaPlan::new(5e3, 2e4, 50, derive_seed(SEED, 800));
    let prof = density_profile(&params, &plan, (3, 50), &RayonRunner).unwrap();
    let outside: Vec<usize> = prof
        .iter()
        .enumerate()
        .filter(|(_, e)| e.point < 0.25 - 3.0 * e.std_error || e.point > 0.30 + 3.0 * e.std_error)
        .map(|(k, _)| k + 3)
        .collect();
    let lo = prof.iter().map(|e| e.point).fold(f64::INFINITY, f64::min);
    let hi = prof.iter().map(|e| e.point).fold(f64::NEG_INFINITY, f64::max);
    verdict(
        outside.is_empty(),
        format!("sites 3..50 densities in [{lo:.4}, {hi:.4}], sites outside: {outside:?}"),
    )
}

fn run_lab(sub: &str, config: &Path, out: &Path, threads: usize) -> bool {
    Command::new(env!("CARGO_BIN_EXE_tasep-lab"))
        .args([sub, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--threads", &threads.to_string()])
        .output()
        .is_ok_and(|o| o.status.success())
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("current", r#"{"lambda": 0.3, "epsilon": 0.05, "burn_in": 200, "horizon": 1000, "replicas": 16, "L": 64, "seed": 7}"#, "current.csv"),
        ("survival", r#"{"lambda": 0.25, "x_far": 40, "t_max": 2000, "replicas": 64, "seed": 7}"#, "survival_records.csv"),
        ("first-order", r#"{"lambda": 0.25, "burn_in": 100, "horizon": 500, "replicas": 8, "L": 64, "seed": 7}"#, "first_order.csv"),
    ];
    let mut pass = true;
    let mut checked = 0;
    for (sub, cfg, file) in cases {
        let base = dir.path().join(sub);
        std::fs::create_dir_all(&base).unwrap();
        let config = base.join("config.json");
        std::fs::write(&config, cfg).unwrap();
        let (a, b, c) = (base.join("t1"), base.join("t8"), base.join("again"));
        pass &= run_lab(sub, &config, &a, 1) && run_lab(sub, &config, &b, 8);
        // rerun from the first run's manifest
        pass &= run_lab(sub, &a.join("manifest.json"), &c, 1);
        let read = |d: &Path| std::fs::read(d.join(file)).unwrap_or_default();
        let first = read(&a);
        pass &= !first.is_empty() && first == read(&b) && first == read(&c);
        checked += 1;
    }
    verdict(pass, format!("{checked} subcommands: threads 1 vs 8 and manifest rerun byte-identical"))
}

fn main() {
    let started = Instant::now();
    let s25 = survival_full(0.25, 330);
    let p25 = s25.probability;
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict>)> = vec![
        ("1 zero-epsilon current", Box::new(zero_epsilon_current)),
        ("2 oracle equivalence", Box::new(oracle_equivalence)),
        ("3 survival endpoints and shape", Box::new(move || survival_shape(&s25))),
        ("4 first-order law", Box::new(move || first_order_law(&p25))),
        ("5 class layering", Box::new(class_layering)),
        ("6 pathwise projection identity", Box::new(projection_identity)),
        ("7 attractivity", Box::new(attractivity)),
        ("8 density sandwich", Box::new(density_sandwich)),
        ("9 determinism and parallelism invariance", Box::new(determinism)),
    ];
    let mut failures = 0;
    for (name, check) in &criteria {
        let t = Instant::now();
        let v = check();
        failures += usize::from(!v.pass);
        println!(
            "{} criterion {name}: {} ({:.0}s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.0}s",
        criteria.len() - failures,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
