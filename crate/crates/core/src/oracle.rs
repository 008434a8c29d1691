//! Exact stationary quantities of the model on a tiny lattice `1..=len`
//! with an open right end. States are occupancy bit masks, site `x` in bit
//! `x - 1`.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::model::{BoundaryMechanism, Pattern};
use crate::{Error, Result};

pub const MAX_SITES: usize = 12;

/// Finite open lattice: boundary mechanism on the left, exit at rate
/// `1 - reservoir_density` from the last site, unit bulk rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteModelSpec {
    pub len: usize,
    pub mechanism: BoundaryMechanism,
    pub reservoir_density: f64,
}

impl FiniteModelSpec {
    pub fn new(len: usize, mechanism: BoundaryMechanism, reservoir_density: f64) -> Result<Self> {
        let spec = FiniteModelSpec {
            len,
            mechanism,
            reservoir_density,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.len > MAX_SITES {
            return Err(Error::StateSpaceTooLarge {
                len: self.len,
                max: MAX_SITES,
            });
        }
        if self.len == 0 || self.mechanism.range() > self.len {
            return Err(Error::InvalidParams(format!(
                "lattice of {} sites cannot hold a boundary block of {}",
                self.len,
                self.mechanism.range()
            )));
        }
        if !(0.0..=1.0).contains(&self.reservoir_density) {
            return Err(Error::InvalidParams(format!(
                "reservoir density {} not in [0, 1]",
                self.reservoir_density
            )));
        }
        Ok(())
    }

    pub fn states(&self) -> usize {
        1 << self.len
    }

    fn for_each_transition(&self, s: usize, mut f: impl FnMut(usize, f64)) {
        let len = self.len;
        for x in 1..len {
            let here = 1 << (x - 1);
            let next = 1 << x;
            if s & here != 0 && s & next == 0 {
                f(s ^ here ^ next, 1.0);
            }
        }
        let r = self.mechanism.range();
        let mask = (1usize << r) - 1;
        for t in self.mechanism.transitions() {
            if s & mask == t.from.bits() as usize && t.rate > 0.0 {
                f((s & !mask) | t.to.bits() as usize, t.rate);
            }
        }
        let exit = 1.0 - self.reservoir_density;
        let last = 1 << (len - 1);
        if s & last != 0 && exit > 0.0 {
            f(s ^ last, exit);
        }
    }
}

/// Generator matrix over all `2^len` states; rows sum to zero.
pub fn build_generator(spec: &FiniteModelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.states();
    let mut q = DMatrix::<f64>::zeros(n, n);
    for s in 0..n {
        let mut out = 0.0;
        spec.for_each_transition(s, |to, rate| {
            q[(s, to)] += rate;
            out += rate;
        });
        q[(s, s)] -= out;
    }
    Ok(q)
}

fn reachable_from(q: &DMatrix<f64>, start: usize, forward: bool) -> Vec<bool> {
    let n = q.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    seen[start] = true;
    queue.push_back(start);
    while let Some(s) = queue.pop_front() {
        for t in 0..n {
            let rate = if forward { q[(s, t)] } else { q[(t, s)] };
            if t != s && rate > 0.0 && !seen[t] {
                seen[t] = true;
                queue.push_back(t);
            }
        }
    }
    seen
}

/// Stationary law on the class reachable from the empty state, as a vector
/// over all states (zero off that class).
pub fn stationary_distribution(q: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = q.nrows();
    if n == 0 || q.ncols() != n {
        return Err(Error::InvalidParams("generator must be a non-empty square matrix".into()));
    }
    let forward = reachable_from(q, 0, true);
    let backward = reachable_from(q, 0, false);
    let class: Vec<usize> = (0..n).filter(|&s| forward[s]).collect();
    let transient = class.iter().filter(|&&s| !backward[s]).count();
    if transient > 0 {
        return Err(Error::Reducible {
            reachable: class.len(),
            transient,
        });
    }
    let m = class.len();
    // balance equations pi Q = 0 on the class, last one replaced by sum(pi) = 1
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (i, &s) in class.iter().enumerate() {
        for (j, &t) in class.iter().enumerate() {
            a[(j, i)] = q[(s, t)];
        }
    }
    for i in 0..m {
        a[(m - 1, i)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(m);
    b[m - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Singular("balance system has no unique solution".into()))?;
    let mut pi = vec![0.0; n];
    for (i, &s) in class.iter().enumerate() {
        pi[s] = sol[i];
    }
    let mut residual: f64 = 0.0;
    for t in 0..n {
        let r: f64 = (0..n).map(|s| pi[s] * q[(s, t)]).sum();
        residual = residual.max(r.abs());
    }
    if residual > 1e-10 || pi.iter().any(|&p| p < -1e-12) {
        return Err(Error::Singular(format!("stationary residual {residual:e}")));
    }
    Ok(pi)
}

/// Probability that the boundary block shows `pattern`.
pub fn pattern_probability(pi: &[f64], range: usize, pattern: Pattern) -> f64 {
    let mask = (1usize << range) - 1;
    pi.iter()
        .enumerate()
        .filter(|(s, _)| s & mask == pattern.bits() as usize)
        .map(|(_, p)| p)
        .sum()
}

/// Rate of transition `index` times the stationary probability of `pattern`
/// on the boundary block.
pub fn exact_event_rate(
    pi: &[f64],
    mechanism: &BoundaryMechanism,
    index: usize,
    pattern: Pattern,
) -> Result<f64> {
    let t = mechanism.transition(index)?;
    if t.rate == 0.0 {
        return Ok(0.0);
    }
    Ok(t.rate * pattern_probability(pi, mechanism.range(), pattern))
}

/// Net stationary particle flux through the left boundary, checked against
/// the exit flux through the right end.
pub fn exact_entry_current(pi: &[f64], spec: &FiniteModelSpec) -> Result<f64> {
    let range = spec.mechanism.range();
    let entry: f64 = spec
        .mechanism
        .transitions()
        .iter()
        .map(|t| t.rate * t.particle_delta() as f64 * pattern_probability(pi, range, t.from))
        .sum();
    let last = 1usize << (spec.len - 1);
    let occupied_last: f64 = pi
        .iter()
        .enumerate()
        .filter(|(s, _)| s & last != 0)
        .map(|(_, p)| p)
        .sum();
    let exit = (1.0 - spec.reservoir_density) * occupied_last;
    if (entry - exit).abs() > 1e-10 {
        return Err(Error::FluxImbalance { entry, exit });
    }
    Ok(entry)
}

/// Stationary law and entry current in one call.
pub fn solve(spec: &FiniteModelSpec) -> Result<(Vec<f64>, f64)> {
    let q = build_generator(spec)?;
    let pi = stationary_distribution(&q)?;
    let j = exact_entry_current(&pi, spec)?;
    Ok((pi, j))
}
