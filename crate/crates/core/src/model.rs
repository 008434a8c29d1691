//! Lattice configurations, class labels and boundary mechanisms.
//!
//! Sites are numbered from 1. Empty sites carry [`ClassLabel::HOLE`], which
//! orders after every numeric class, so the occupancy-level process and the
//! multi-class process share the same representation: a site is occupied
//! iff its label is not `HOLE`, and a particle at `x` may exchange with the
//! content of `x + 1` iff the latter has a strictly larger label.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::{Error, Result};

/// Class of the particle on a site. Smaller is higher priority.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassLabel(u16);

impl ClassLabel {
    pub const HOLE: ClassLabel = ClassLabel(u16::MAX);
    pub const FIRST: ClassLabel = ClassLabel(1);

    /// Numeric class `j >= 1`.
    pub fn class(j: u16) -> Result<Self> {
        if j == 0 || j == u16::MAX {
            return Err(Error::InvalidParams(format!("class label {j} out of range")));
        }
        Ok(ClassLabel(j))
    }

    pub(crate) const fn from_raw(j: u16) -> Self {
        ClassLabel(j)
    }

    pub fn is_hole(self) -> bool {
        self == Self::HOLE
    }

    pub fn is_particle(self) -> bool {
        self != Self::HOLE
    }

    /// The numeric class, or `None` for a hole.
    pub fn number(self) -> Option<u16> {
        (!self.is_hole()).then_some(self.0)
    }
}

impl fmt::Debug for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.number() {
            Some(j) => write!(f, "{j}"),
            None => f.write_str("H"),
        }
    }
}

/// Occupancy pattern on the boundary block `{1..R}`; bit `x - 1` is site `x`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pattern(u32);

impl Pattern {
    pub const fn from_bits(bits: u32) -> Self {
        Pattern(bits)
    }

    pub const fn bits(self) -> u32 {
        self.0
    }

    /// Builds a pattern from a string of `0`/`1` characters, site 1 first.
    pub fn parse(s: &str) -> Result<Self> {
        if s.is_empty() || s.len() > BoundaryMechanism::MAX_RANGE {
            return Err(Error::InvalidParams(format!("pattern {s:?} has invalid length")));
        }
        let mut bits = 0;
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => bits |= 1 << i,
                _ => return Err(Error::InvalidParams(format!("pattern {s:?} is not binary"))),
            }
        }
        Ok(Pattern(bits))
    }

    pub fn occupied(self, site: usize) -> bool {
        site >= 1 && self.0 >> (site - 1) & 1 == 1
    }

    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    /// Renders the first `range` sites, site 1 first.
    pub fn render(self, range: usize) -> String {
        (1..=range)
            .map(|x| if self.occupied(x) { '1' } else { '0' })
            .collect()
    }
}

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pattern({:#b})", self.0)
    }
}

/// Lattice state over a window `1..=len`. Sites beyond the window read as holes.
#[derive(Clone, PartialEq, Eq)]
pub struct Configuration {
    labels: Vec<ClassLabel>,
    rightmost: Option<usize>,
    particles: usize,
}

impl Configuration {
    pub fn empty(len: usize) -> Self {
        Configuration {
            labels: vec![ClassLabel::HOLE; len.max(1)],
            rightmost: None,
            particles: 0,
        }
    }

    pub fn from_labels(labels: Vec<ClassLabel>) -> Self {
        let mut labels = labels;
        if labels.is_empty() {
            labels.push(ClassLabel::HOLE);
        }
        let particles = labels.iter().filter(|l| l.is_particle()).count();
        let rightmost = labels.iter().rposition(|l| l.is_particle()).map(|i| i + 1);
        Configuration {
            labels,
            rightmost,
            particles,
        }
    }

    /// Occupancy configuration from 0/1 values; particles get class 1.
    pub fn from_occupancy(occ: &[u8]) -> Self {
        Self::from_labels(
            occ.iter()
                .map(|&o| if o != 0 { ClassLabel::FIRST } else { ClassLabel::HOLE })
                .collect(),
        )
    }

    pub fn window_len(&self) -> usize {
        self.labels.len()
    }

    pub fn rightmost_occupied(&self) -> Option<usize> {
        self.rightmost
    }

    pub fn particle_count(&self) -> usize {
        self.particles
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn label(&self, site: usize) -> ClassLabel {
        if site == 0 {
            return ClassLabel::HOLE;
        }
        self.labels.get(site - 1).copied().unwrap_or(ClassLabel::HOLE)
    }

    pub fn occupied(&self, site: usize) -> bool {
        self.label(site).is_particle()
    }

    pub fn occupancy(&self) -> Vec<u8> {
        self.labels.iter().map(|l| l.is_particle() as u8).collect()
    }

    /// Occupancy restricted to sites `1..=range`.
    pub fn pattern(&self, range: usize) -> Pattern {
        let mut bits = 0;
        for x in 1..=range {
            if self.occupied(x) {
                bits |= 1 << (x - 1);
            }
        }
        Pattern(bits)
    }

    /// Grows the window with holes so that it has at least `len` sites.
    pub fn ensure_len(&mut self, len: usize) {
        if self.labels.len() < len {
            self.labels.resize(len, ClassLabel::HOLE);
        }
    }

    /// Writes a label, keeping the particle count and rightmost site in sync.
    pub fn set(&mut self, site: usize, label: ClassLabel) -> Result<()> {
        let len = self.labels.len();
        if site == 0 || site > len {
            return Err(Error::SiteOutOfWindow { site, len });
        }
        self.set_unchecked(site, label);
        Ok(())
    }

    pub(crate) fn set_unchecked(&mut self, site: usize, label: ClassLabel) {
        let old = core::mem::replace(&mut self.labels[site - 1], label);
        match (old.is_particle(), label.is_particle()) {
            (false, true) => {
                self.particles += 1;
                if self.rightmost.map_or(true, |r| site > r) {
                    self.rightmost = Some(site);
                }
            }
            (true, false) => {
                self.particles -= 1;
                if self.rightmost == Some(site) {
                    self.rightmost = self.labels[..site - 1]
                        .iter()
                        .rposition(|l| l.is_particle())
                        .map(|i| i + 1);
                }
            }
            _ => {}
        }
    }

    pub(crate) fn swap_unchecked(&mut self, x: usize) {
        self.labels.swap(x - 1, x);
        if self.rightmost == Some(x) && self.labels[x].is_particle() && self.labels[x - 1].is_hole()
        {
            self.rightmost = Some(x + 1);
        }
    }

    /// Count of particles of each class `1..=k`; index 0 is unused.
    pub fn class_counts(&self, k: usize) -> Vec<usize> {
        let mut counts = vec![0; k + 1];
        for l in &self.labels {
            if let Some(j) = l.number() {
                if (j as usize) <= k {
                    counts[j as usize] += 1;
                }
            }
        }
        counts
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shown = self.rightmost.unwrap_or(0).max(1).min(self.labels.len());
        write!(f, "Configuration[len={}](", self.labels.len())?;
        for (i, l) in self.labels[..shown].iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l:?}")?;
        }
        f.write_str(")")
    }
}

/// One boundary transition `from -> to` firing at `rate` when the block matches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: Pattern,
    pub to: Pattern,
    pub rate: f64,
}

impl Transition {
    /// True if the transition only turns site 1 from empty to occupied.
    pub fn is_site1_creation(&self) -> bool {
        !self.from.occupied(1) && self.to.bits() == self.from.bits() | 1
    }

    /// Net change of the particle count when the transition applies.
    pub fn particle_delta(&self) -> i64 {
        self.to.count() as i64 - self.from.count() as i64
    }
}

/// Finite-range boundary mechanism: a flat list of pattern rewrites on `{1..R}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMechanism {
    range: usize,
    transitions: Vec<Transition>,
}

impl BoundaryMechanism {
    pub const MAX_RANGE: usize = 16;

    pub fn new(range: usize, transitions: Vec<Transition>) -> Result<Self> {
        if range == 0 || range > Self::MAX_RANGE {
            return Err(Error::InvalidParams(format!("boundary range {range} not in 1..=16")));
        }
        let limit = 1u32 << range;
        for (i, t) in transitions.iter().enumerate() {
            if !(t.rate >= 0.0 && t.rate.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "transition {i} has rate {}",
                    t.rate
                )));
            }
            if t.from.bits() >= limit || t.to.bits() >= limit {
                return Err(Error::InvalidParams(format!(
                    "transition {i} uses sites beyond the range {range}"
                )));
            }
            if t.from == t.to {
                return Err(Error::InvalidParams(format!("transition {i} is a self-loop")));
            }
            if transitions[..i]
                .iter()
                .any(|u| u.from == t.from && u.to == t.to)
            {
                return Err(Error::InvalidParams(format!("transition {i} is duplicated")));
            }
        }
        Ok(BoundaryMechanism { range, transitions })
    }

    pub fn range(&self) -> usize {
        self.range
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn transition(&self, index: usize) -> Result<&Transition> {
        self.transitions.get(index).ok_or(Error::TransitionOutOfRange {
            index,
            count: self.transitions.len(),
        })
    }

    /// Total rate of transitions leaving `pattern`.
    pub fn exit_rate(&self, pattern: Pattern) -> f64 {
        self.transitions
            .iter()
            .filter(|t| t.from == pattern)
            .map(|t| t.rate)
            .sum()
    }
}

/// Right edge of the lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RightBoundary {
    /// The half-line: particles never leave.
    HalfLine,
    /// A reservoir at density `reservoir_density` beyond the last site; the
    /// particle there leaves at rate `1 - reservoir_density`.
    OpenExit { reservoir_density: f64 },
}

/// Parameters of the concrete model: entry at site 1 at rate `lambda`, plus
/// `epsilon` more when site 2 is occupied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub lambda: f64,
    pub epsilon: f64,
    pub num_classes: u16,
    pub right_boundary: RightBoundary,
}

impl ModelParams {
    pub fn new(lambda: f64, epsilon: f64) -> Result<Self> {
        let params = ModelParams {
            lambda,
            epsilon,
            num_classes: 1,
            right_boundary: RightBoundary::HalfLine,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_classes(mut self, k: u16) -> Result<Self> {
        self.num_classes = k;
        self.validate()?;
        Ok(self)
    }

    pub fn with_right_boundary(mut self, right: RightBoundary) -> Result<Self> {
        self.right_boundary = right;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_rates(self.lambda, self.epsilon)?;
        if self.num_classes == 0 || self.num_classes == u16::MAX {
            return Err(Error::InvalidParams(format!(
                "num_classes must be at least 1, got {}",
                self.num_classes
            )));
        }
        if let RightBoundary::OpenExit { reservoir_density } = self.right_boundary {
            if !(0.0..=1.0).contains(&reservoir_density) {
                return Err(Error::InvalidParams(format!(
                    "reservoir density {reservoir_density} not in [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn mechanism(&self) -> Result<BoundaryMechanism> {
        concrete_mechanism(self.lambda, self.epsilon)
    }
}

fn check_rates(lambda: f64, epsilon: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParams(format!("lambda must be >= 0, got {lambda}")));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParams(format!("epsilon must be >= 0, got {epsilon}")));
    }
    if lambda + epsilon >= 0.5 {
        return Err(Error::InvalidParams(format!(
            "lambda + epsilon must be < 1/2, got {}",
            lambda + epsilon
        )));
    }
    Ok(())
}

/// Range-2 mechanism: `00 -> 10` at `lambda`, `01 -> 11` at `lambda + epsilon`.
pub fn concrete_mechanism(lambda: f64, epsilon: f64) -> Result<BoundaryMechanism> {
    check_rates(lambda, epsilon)?;
    BoundaryMechanism::new(
        2,
        vec![
            Transition {
                from: Pattern::from_bits(0b00),
                to: Pattern::from_bits(0b01),
                rate: lambda,
            },
            Transition {
                from: Pattern::from_bits(0b10),
                to: Pattern::from_bits(0b11),
                rate: lambda + epsilon,
            },
        ],
    )
}

/// True iff the particle at `x` may move to `x + 1`.
pub(crate) fn jump_allowed(config: &Configuration, x: usize) -> bool {
    let here = config.label(x);
    here.is_particle() && config.label(x + 1) > here
}

/// Exchanges the contents of `x` and `x + 1` if the priority rule allows it.
/// Returns whether the configuration changed.
pub fn apply_bulk_jump(config: &mut Configuration, x: usize) -> Result<bool> {
    let len = config.window_len();
    if x == 0 || x >= len {
        return Err(Error::SiteOutOfWindow { site: x, len });
    }
    if jump_allowed(config, x) {
        config.swap_unchecked(x);
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Rewrites the boundary block if it matches the transition's source pattern
/// exactly. Created particles are first class. Returns whether anything changed.
pub fn apply_boundary_transition(
    config: &mut Configuration,
    mech: &BoundaryMechanism,
    index: usize,
) -> Result<bool> {
    let t = *mech.transition(index)?;
    let range = mech.range();
    if config.pattern(range) != t.from {
        return Ok(false);
    }
    config.ensure_len(range);
    for x in 1..=range {
        let want = t.to.occupied(x);
        if want != config.occupied(x) {
            let label = if want { ClassLabel::FIRST } else { ClassLabel::HOLE };
            config.set_unchecked(x, label);
        }
    }
    Ok(true)
}

/// Sitewise occupancy order on the union of both windows.
pub fn leq(a: &Configuration, b: &Configuration) -> bool {
    let len = a.window_len().max(b.window_len());
    (1..=len).all(|x| !a.occupied(x) || b.occupied(x))
}
