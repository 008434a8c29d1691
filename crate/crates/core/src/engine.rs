//! Chronological event sweep.
//!
//! A [`Sweep`] owns one set of clocks and one or more member configurations
//! that all read the same events. A bulk clock `Bulk(x)` is only kept in the
//! merge while at least one member could actually move a particle across
//! the bond `(x, x + 1)` (or out of the last site); its arrivals at other
//! times would be no-ops for every member, and the clocks are memoryless
//! substreams, so parking them does not alter any trajectory. Work is
//! therefore proportional to the number of effective jumps.
//!
//! Time integrals are accumulated lazily: boundary-local quantities are
//! flushed only when the boundary block changes, observed-site occupation
//! only when that site changes.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::hash::Hasher;
use core::ops::ControlFlow;

use fnv::FnvHasher;

use crate::harris::{uniform_open01, derive_aux_rng, ClockEvent, ClockMerge, StreamId};
use crate::model::{
    jump_allowed, BoundaryMechanism, ClassLabel, Configuration, ModelParams, Pattern,
    RightBoundary,
};
use crate::multiclass::class_entry_guard;
use crate::stats::CompensatedSum;
use crate::{Error, Result};

/// Starting configuration of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Empty,
    /// Independent first-class particles with the given density on `1..=len`.
    Bernoulli { density: f64, len: usize },
    Explicit(Vec<ClassLabel>),
}

/// How far the lattice extends to the right.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowPolicy {
    /// Exactly `len` sites.
    Fixed(usize),
    /// Grown on demand, keeping at least `slack` empty sites past the
    /// rightmost particle.
    Lazy { slack: usize },
}

impl WindowPolicy {
    pub const DEFAULT_LAZY: WindowPolicy = WindowPolicy::Lazy { slack: 64 };
}

/// Full description of one replica.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub params: ModelParams,
    pub initial: InitialCondition,
    pub horizon: f64,
    pub seed: u64,
    pub window: WindowPolicy,
    /// Occupancy-level mechanism to use instead of the one built from `params`.
    pub mechanism: Option<BoundaryMechanism>,
    /// Inclusive site range whose occupation times are recorded.
    pub observed_sites: Option<(usize, usize)>,
    /// Keep the list of applied events (for truncation checks).
    pub record_events: bool,
}

impl RunSpec {
    pub fn new(params: ModelParams, horizon: f64, seed: u64) -> Self {
        let window = match params.right_boundary {
            RightBoundary::HalfLine => WindowPolicy::DEFAULT_LAZY,
            RightBoundary::OpenExit { .. } => WindowPolicy::Fixed(512),
        };
        RunSpec {
            params,
            initial: InitialCondition::Empty,
            horizon,
            seed,
            window,
            mechanism: None,
            observed_sites: None,
            record_events: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidHorizon(self.horizon));
        }
        match (self.window, &self.initial) {
            (WindowPolicy::Lazy { .. }, InitialCondition::Bernoulli { .. }) => {
                return Err(Error::InvalidParams(
                    "Bernoulli initial conditions need a fixed window".into(),
                ))
            }
            (WindowPolicy::Lazy { .. }, _)
                if matches!(self.params.right_boundary, RightBoundary::OpenExit { .. }) =>
            {
                return Err(Error::InvalidParams(
                    "an open right exit needs a fixed window".into(),
                ))
            }
            (WindowPolicy::Fixed(0), _) => {
                return Err(Error::InvalidParams("fixed window must have at least one site".into()))
            }
            (WindowPolicy::Fixed(len), InitialCondition::Bernoulli { len: b, .. }) if *b > len => {
                return Err(Error::InvalidParams(format!(
                    "Bernoulli block of {b} sites exceeds the window of {len}"
                )))
            }
            (WindowPolicy::Fixed(len), InitialCondition::Explicit(l)) if l.len() > len => {
                if l[len..].iter().any(|x| x.is_particle()) {
                    return Err(Error::InvalidParams(
                        "explicit configuration has particles beyond the window".into(),
                    ));
                }
            }
            _ => {}
        }
        if let InitialCondition::Bernoulli { density, .. } = self.initial {
            if !(0.0..=1.0).contains(&density) {
                return Err(Error::InvalidParams(format!("density {density} not in [0, 1]")));
            }
        }
        if let InitialCondition::Explicit(labels) = &self.initial {
            let k = self.params.num_classes;
            if labels.iter().any(|l| l.number().is_some_and(|j| j > k)) {
                return Err(Error::InvalidParams(format!("labels exceed {k} classes")));
            }
        }
        if let Some((a, b)) = self.observed_sites {
            if a == 0 || b < a {
                return Err(Error::InvalidParams(format!("bad observed range {a}..={b}")));
            }
        }
        Ok(())
    }

    pub(crate) fn rules(&self) -> Result<Rules> {
        if let Some(m) = &self.mechanism {
            return Ok(Rules::Transitions { mech: m.clone() });
        }
        if self.params.num_classes == 1 {
            Ok(Rules::Transitions {
                mech: self.params.mechanism()?,
            })
        } else {
            Ok(Rules::Classes {
                lambda: self.params.lambda,
                epsilon: self.params.epsilon,
                classes: self.params.num_classes,
            })
        }
    }

    pub(crate) fn initial_configuration(&self) -> Configuration {
        match &self.initial {
            InitialCondition::Empty => Configuration::empty(1),
            InitialCondition::Bernoulli { density, len } => {
                let mut rng = derive_aux_rng(self.seed, 1);
                let occ: Vec<u8> = (0..*len)
                    .map(|_| (uniform_open01(&mut rng) < *density) as u8)
                    .collect();
                Configuration::from_occupancy(&occ)
            }
            InitialCondition::Explicit(labels) => Configuration::from_labels(labels.clone()),
        }
    }
}

/// How a member reads boundary clocks.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Rules {
    /// Stream `BoundaryTransition(i)` drives transition `i` of the mechanism.
    Transitions { mech: BoundaryMechanism },
    /// Streams `ClassEntry(j)` with the priority entry rules.
    Classes { lambda: f64, epsilon: f64, classes: u16 },
    /// One entry source `BoundaryTransition(0)` of rate `source_rate`; an
    /// arrival with mark `u` creates a particle at an empty site 1 iff
    /// `u * source_rate < rate_by_pattern[pattern]`.
    SharedEntry {
        range: usize,
        rate_by_pattern: Vec<f64>,
        source_rate: f64,
    },
}

impl Rules {
    fn range(&self) -> usize {
        match self {
            Rules::Transitions { mech } => mech.range(),
            Rules::Classes { .. } => 2,
            Rules::SharedEntry { range, .. } => *range,
        }
    }

    fn classes(&self) -> u16 {
        match self {
            Rules::Classes { classes, .. } => *classes,
            _ => 1,
        }
    }

    fn streams(&self) -> Vec<(StreamId, f64)> {
        match self {
            Rules::Transitions { mech } => mech
                .transitions()
                .iter()
                .enumerate()
                .map(|(i, t)| (StreamId::BoundaryTransition(i as u32), t.rate))
                .collect(),
            Rules::Classes {
                lambda,
                epsilon,
                classes,
            } => {
                let mut s = vec![(StreamId::ClassEntry(1), *lambda)];
                for j in 2..=*classes as u32 {
                    s.push((StreamId::ClassEntry(j), *epsilon));
                }
                s
            }
            Rules::SharedEntry { source_rate, .. } => {
                vec![(StreamId::BoundaryTransition(0), *source_rate)]
            }
        }
    }
}

/// A particle overwritten at site 1 by a higher-priority entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DestroyedParticle {
    pub class: u16,
    pub birth_time: f64,
    pub death_time: f64,
    pub position: usize,
}

/// One applied (state-changing) event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoggedEvent {
    pub time: f64,
    pub stream: StreamId,
}

/// Counters and time integrals of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats {
    /// Length of the time interval covered.
    pub horizon: f64,
    pub entries_total: u64,
    /// Entries of class `j` at index `j - 1`.
    pub entries_by_class: Vec<u64>,
    pub exits_right: u64,
    /// Particles removed at the left boundary (overwritten or erased).
    pub destroyed: u64,
    pub initial_particles: usize,
    pub final_particles: usize,
    /// Time with a class-`j` particle on site 2, at index `j - 1`.
    pub occupation_time_site2_by_class: Vec<f64>,
    /// Time with a first-class particle on site 2 and site 1 not first class.
    pub time_site2_first_class_site1_free: f64,
    /// Time spent with each occupancy pattern on the boundary block.
    pub pattern_occupation: BTreeMap<Pattern, f64>,
    /// Arrivals of boundary-transition stream `i` seen while the block had
    /// pattern `p` (before the event): `boundary_arrivals[i][p.bits()]`.
    pub boundary_arrivals: Vec<Vec<u64>>,
    /// First observed site and the occupation time of each observed site.
    pub observed_first_site: usize,
    pub observed_occupation: Vec<f64>,
    pub applied_events: u64,
    pub event_log_digest: u64,
}

impl TrajectoryStats {
    pub fn entries_of_class(&self, j: usize) -> u64 {
        self.entries_by_class.get(j.wrapping_sub(1)).copied().unwrap_or(0)
    }

    /// Increments between an earlier snapshot of the same run and this one.
    pub fn since(&self, earlier: &TrajectoryStats) -> TrajectoryStats {
        let sub_vec = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x - y).collect()
        };
        TrajectoryStats {
            horizon: self.horizon - earlier.horizon,
            entries_total: self.entries_total - earlier.entries_total,
            entries_by_class: self
                .entries_by_class
                .iter()
                .zip(&earlier.entries_by_class)
                .map(|(a, b)| a - b)
                .collect(),
            exits_right: self.exits_right - earlier.exits_right,
            destroyed: self.destroyed - earlier.destroyed,
            initial_particles: earlier.final_particles,
            final_particles: self.final_particles,
            occupation_time_site2_by_class: sub_vec(
                &self.occupation_time_site2_by_class,
                &earlier.occupation_time_site2_by_class,
            ),
            time_site2_first_class_site1_free: self.time_site2_first_class_site1_free
                - earlier.time_site2_first_class_site1_free,
            pattern_occupation: self
                .pattern_occupation
                .iter()
                .map(|(p, t)| (*p, t - earlier.pattern_occupation.get(p).copied().unwrap_or(0.0)))
                .collect(),
            boundary_arrivals: self
                .boundary_arrivals
                .iter()
                .zip(&earlier.boundary_arrivals)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
            observed_first_site: self.observed_first_site,
            observed_occupation: sub_vec(&self.observed_occupation, &earlier.observed_occupation),
            applied_events: self.applied_events - earlier.applied_events,
            event_log_digest: self.event_log_digest,
        }
    }
}

#[derive(Debug, Clone)]
struct Observed {
    first: usize,
    time: Vec<CompensatedSum>,
    since: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Accumulator {
    initial_particles: usize,
    entries_by_class: Vec<u64>,
    exits_right: u64,
    destroyed: u64,
    local_range: usize,
    pattern_time: Vec<CompensatedSum>,
    site2_class_time: Vec<CompensatedSum>,
    tilde_time: CompensatedSum,
    flushed_at: f64,
    arrivals: Vec<Vec<u64>>,
    observed: Option<Observed>,
    digest: u64,
    applied: u64,
}

impl Accumulator {
    fn new(config: &Configuration, rules: &Rules, observed: Option<(usize, usize)>) -> Self {
        let range = rules.range();
        let transitions = match rules {
            Rules::Transitions { mech } => mech.transitions().len(),
            _ => 0,
        };
        let observed = observed.map(|(a, b)| {
            let n = b - a + 1;
            Observed {
                first: a,
                time: vec![CompensatedSum::default(); n],
                since: vec![0.0; n],
            }
        });
        Accumulator {
            initial_particles: config.particle_count(),
            entries_by_class: vec![0; rules.classes() as usize],
            exits_right: 0,
            destroyed: 0,
            local_range: range.max(2),
            pattern_time: vec![CompensatedSum::default(); 1 << range],
            site2_class_time: vec![CompensatedSum::default(); rules.classes() as usize],
            tilde_time: CompensatedSum::default(),
            flushed_at: 0.0,
            arrivals: vec![vec![0; 1 << range]; transitions],
            observed,
            digest: FnvHasher::default().finish(),
            applied: 0,
        }
    }

    fn flush_local(&mut self, config: &Configuration, range: usize, t: f64) {
        let dt = t - self.flushed_at;
        if dt <= 0.0 {
            return;
        }
        self.pattern_time[config.pattern(range).bits() as usize].add(dt);
        let s2 = config.label(2);
        if let Some(j) = s2.number() {
            if let Some(acc) = self.site2_class_time.get_mut(j as usize - 1) {
                acc.add(dt);
            }
            if j == 1 && config.label(1) != ClassLabel::FIRST {
                self.tilde_time.add(dt);
            }
        }
        self.flushed_at = t;
    }

    fn flush_observed(&mut self, config: &Configuration, t: f64) {
        if let Some(obs) = &mut self.observed {
            for (i, acc) in obs.time.iter_mut().enumerate() {
                if config.occupied(obs.first + i) {
                    acc.add(t - obs.since[i]);
                    obs.since[i] = t;
                }
            }
        }
    }

    fn record(&mut self, event: &ClockEvent) {
        let mut h = FnvHasher::with_key(self.digest);
        h.write_u8(event.stream.tag());
        h.write(&event.stream.index().to_le_bytes());
        h.write(&event.time.to_bits().to_le_bytes());
        self.digest = h.finish();
        self.applied += 1;
    }
}

/// One configuration inside a sweep.
#[derive(Debug, Clone)]
pub struct Member {
    config: Configuration,
    rules: Rules,
    enabled: Vec<bool>,
    acc: Accumulator,
    births: Option<Vec<f64>>,
    destroyed: Vec<DestroyedParticle>,
    log: Option<Vec<LoggedEvent>>,
    last_applied: bool,
    last_touched: (usize, usize),
}

impl Member {
    pub fn config(&self) -> &Configuration {
        &self.config
    }

    /// Whether the last processed event changed this member.
    pub fn last_applied(&self) -> bool {
        self.last_applied
    }

    /// Sites the last applied event may have changed.
    pub fn last_touched(&self) -> (usize, usize) {
        self.last_touched
    }

    pub fn destroyed(&self) -> &[DestroyedParticle] {
        &self.destroyed
    }

    pub fn event_log(&self) -> Option<&[LoggedEvent]> {
        self.log.as_deref()
    }

    fn write(&mut self, site: usize, label: ClassLabel, t: f64) {
        if site <= self.acc.local_range {
            let range = self.rules.range();
            self.acc.flush_local(&self.config, range, t);
        }
        let was = self.config.occupied(site);
        if let Some(obs) = &mut self.acc.observed {
            if site >= obs.first && site < obs.first + obs.time.len() {
                let i = site - obs.first;
                match (was, label.is_particle()) {
                    (true, false) => obs.time[i].add(t - obs.since[i]),
                    (false, true) => obs.since[i] = t,
                    _ => {}
                }
            }
        }
        self.config.set_unchecked(site, label);
    }

    fn stats(&mut self, t: f64) -> TrajectoryStats {
        let range = self.rules.range();
        self.acc.flush_local(&self.config, range, t);
        self.acc.flush_observed(&self.config, t);
        let acc = &self.acc;
        TrajectoryStats {
            horizon: t,
            entries_total: acc.entries_by_class.iter().sum(),
            entries_by_class: acc.entries_by_class.clone(),
            exits_right: acc.exits_right,
            destroyed: acc.destroyed,
            initial_particles: acc.initial_particles,
            final_particles: self.config.particle_count(),
            occupation_time_site2_by_class: acc.site2_class_time.iter().map(|s| s.value()).collect(),
            time_site2_first_class_site1_free: acc.tilde_time.value(),
            pattern_occupation: acc
                .pattern_time
                .iter()
                .enumerate()
                .map(|(p, s)| (Pattern::from_bits(p as u32), s.value()))
                .collect(),
            boundary_arrivals: acc.arrivals.clone(),
            observed_first_site: acc.observed.as_ref().map_or(0, |o| o.first),
            observed_occupation: acc
                .observed
                .as_ref()
                .map_or_else(Vec::new, |o| o.time.iter().map(|s| s.value()).collect()),
            applied_events: acc.applied,
            event_log_digest: acc.digest,
        }
    }

    fn can_fire(&self, x: usize, len: usize, right: RightBoundary, lazy: bool) -> bool {
        if x < len {
            jump_allowed(&self.config, x)
        } else {
            // the last site: exit, or overflow of a fixed half-line window
            !lazy && self.config.occupied(x) && {
                let _ = right;
                true
            }
        }
    }
}

/// Options shared by every member of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SweepOptions {
    pub seed: u64,
    pub right: RightBoundary,
    pub window: WindowPolicy,
    pub observed: Option<(usize, usize)>,
    pub record_events: bool,
}

/// Chronological sweep of one clock family over several members.
#[derive(Debug, Clone)]
pub struct Sweep {
    clocks: ClockMerge,
    members: Vec<Member>,
    time: f64,
    len: usize,
    right: RightBoundary,
    window: WindowPolicy,
    enabled_count: Vec<u32>,
}

impl Sweep {
    pub(crate) fn new(opts: SweepOptions, members: Vec<(Configuration, Rules)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidParams("a sweep needs at least one member".into()));
        }
        let range = members.iter().map(|(_, r)| r.range()).max().unwrap_or(1);
        let rightmost = members
            .iter()
            .filter_map(|(c, _)| c.rightmost_occupied())
            .max()
            .unwrap_or(0);
        let longest = members.iter().map(|(c, _)| c.window_len()).max().unwrap_or(1);
        let len = match opts.window {
            WindowPolicy::Fixed(l) => {
                if l < range {
                    return Err(Error::InvalidParams(format!(
                        "window of {l} sites is shorter than the boundary range {range}"
                    )));
                }
                if rightmost > l {
                    return Err(Error::InvalidParams(format!(
                        "initial particle at site {rightmost} beyond the window of {l}"
                    )));
                }
                l
            }
            WindowPolicy::Lazy { slack } => longest.max(rightmost + 1 + slack.max(1)).max(range + 1),
        };

        let mut boundary: Vec<(StreamId, f64)> = Vec::new();
        for (_, rules) in &members {
            for (id, rate) in rules.streams() {
                if !(rate >= 0.0 && rate.is_finite()) {
                    return Err(Error::InvalidRate(rate));
                }
                match boundary.iter().find(|(b, _)| *b == id) {
                    Some((_, r)) if *r != rate => {
                        return Err(Error::InvalidParams(format!(
                            "members disagree on the rate of {id:?}"
                        )))
                    }
                    Some(_) => {}
                    None => boundary.push((id, rate)),
                }
            }
        }

        let mut clocks = ClockMerge::new(opts.seed);
        for (id, rate) in &boundary {
            clocks.activate(*id, *rate, 0.0)?;
        }

        let members: Vec<Member> = members
            .into_iter()
            .map(|(mut config, rules)| {
                if config.window_len() > len {
                    config = Configuration::from_labels(config.labels()[..len].to_vec());
                }
                config.ensure_len(len);
                let acc = Accumulator::new(&config, &rules, opts.observed);
                let births = matches!(rules, Rules::Classes { .. }).then(|| vec![0.0; len]);
                let mut m = Member {
                    config,
                    rules,
                    enabled: vec![false; len + 1],
                    acc,
                    births,
                    destroyed: Vec::new(),
                    log: opts.record_events.then(Vec::new),
                    last_applied: false,
                    last_touched: (0, 0),
                };
                if let Some(obs) = &mut m.acc.observed {
                    obs.since.iter_mut().for_each(|s| *s = 0.0);
                }
                m
            })
            .collect();

        let mut sweep = Sweep {
            clocks,
            members,
            time: 0.0,
            len,
            right: opts.right,
            window: opts.window,
            enabled_count: vec![0; len + 1],
        };
        for i in 0..sweep.members.len() {
            sweep.refresh_enabled(i, 1, len)?;
        }
        Ok(sweep)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    fn lazy(&self) -> bool {
        matches!(self.window, WindowPolicy::Lazy { .. })
    }

    fn refresh_enabled(&mut self, i: usize, lo: usize, hi: usize) -> Result<()> {
        let lo = lo.max(1);
        let hi = hi.min(self.len);
        let lazy = self.lazy();
        for x in lo..=hi {
            let m = &mut self.members[i];
            let now = m.can_fire(x, self.len, self.right, lazy);
            if now != m.enabled[x] {
                m.enabled[x] = now;
                if now {
                    self.enabled_count[x] += 1;
                    if self.enabled_count[x] == 1 {
                        self.clocks.activate(StreamId::Bulk(x as u64), 1.0, self.time)?;
                    }
                } else {
                    self.enabled_count[x] -= 1;
                    if self.enabled_count[x] == 0 {
                        self.clocks.deactivate(StreamId::Bulk(x as u64));
                    }
                }
            }
        }
        Ok(())
    }

    fn grow_if_needed(&mut self) -> Result<()> {
        let WindowPolicy::Lazy { slack } = self.window else {
            return Ok(());
        };
        let rightmost = self
            .members
            .iter()
            .filter_map(|m| m.config.rightmost_occupied())
            .max()
            .unwrap_or(0);
        if rightmost < self.len {
            return Ok(());
        }
        let old = self.len;
        let new_len = rightmost + 1 + slack.max(1);
        self.len = new_len;
        self.enabled_count.resize(new_len + 1, 0);
        for m in &mut self.members {
            m.config.ensure_len(new_len);
            m.enabled.resize(new_len + 1, false);
            if let Some(b) = &mut m.births {
                b.resize(new_len, 0.0);
            }
        }
        for i in 0..self.members.len() {
            self.refresh_enabled(i, old, old)?;
        }
        Ok(())
    }

    fn apply(&mut self, i: usize, event: &ClockEvent) -> Result<bool> {
        let t = event.time;
        let len = self.len;
        let right = self.right;
        let m = &mut self.members[i];
        m.last_applied = false;
        let touched = match event.stream {
            StreamId::Bulk(x) => {
                let x = x as usize;
                if x > len || !m.enabled[x] {
                    return Ok(false);
                }
                if x < len {
                    let (a, b) = (m.config.label(x), m.config.label(x + 1));
                    m.write(x + 1, a, t);
                    m.write(x, b, t);
                    if let Some(births) = &mut m.births {
                        births.swap(x - 1, x);
                    }
                    (x, x + 1)
                } else {
                    match right {
                        RightBoundary::OpenExit { reservoir_density } => {
                            if event.mark >= 1.0 - reservoir_density {
                                return Ok(false);
                            }
                            m.write(x, ClassLabel::HOLE, t);
                            m.acc.exits_right += 1;
                            (x, x)
                        }
                        RightBoundary::HalfLine => {
                            return Err(Error::WindowOverflow { site: x, len, time: t })
                        }
                    }
                }
            }
            StreamId::BoundaryTransition(k) => match &m.rules {
                Rules::Transitions { mech } => {
                    let k = k as usize;
                    let Some(tr) = mech.transitions().get(k).copied() else {
                        return Ok(false);
                    };
                    let range = mech.range();
                    let pattern = m.config.pattern(range);
                    m.acc.arrivals[k][pattern.bits() as usize] += 1;
                    if pattern != tr.from {
                        return Ok(false);
                    }
                    for x in 1..=range {
                        let want = tr.to.occupied(x);
                        let have = m.config.occupied(x);
                        if want && !have {
                            m.write(x, ClassLabel::FIRST, t);
                            m.acc.entries_by_class[0] += 1;
                        } else if !want && have {
                            m.write(x, ClassLabel::HOLE, t);
                            m.acc.destroyed += 1;
                        }
                    }
                    (1, range)
                }
                Rules::SharedEntry {
                    range,
                    rate_by_pattern,
                    source_rate,
                } => {
                    if k != 0 || m.config.occupied(1) {
                        return Ok(false);
                    }
                    let rate = rate_by_pattern[m.config.pattern(*range).bits() as usize];
                    if event.mark * source_rate >= rate {
                        return Ok(false);
                    }
                    m.write(1, ClassLabel::FIRST, t);
                    m.acc.entries_by_class[0] += 1;
                    (1, 1)
                }
                Rules::Classes { .. } => return Ok(false),
            },
            StreamId::ClassEntry(j) => {
                let Rules::Classes { classes, .. } = m.rules else {
                    return Ok(false);
                };
                let j = j as u16;
                if !class_entry_guard(m.config.label(1), m.config.label(2), j, classes) {
                    return Ok(false);
                }
                let old = m.config.label(1);
                if let Some(c) = old.number() {
                    m.acc.destroyed += 1;
                    let birth = m.births.as_ref().map_or(0.0, |b| b[0]);
                    m.destroyed.push(DestroyedParticle {
                        class: c,
                        birth_time: birth,
                        death_time: t,
                        position: 1,
                    });
                }
                m.write(1, ClassLabel::from_raw(j), t);
                if let Some(b) = &mut m.births {
                    b[0] = t;
                }
                m.acc.entries_by_class[j as usize - 1] += 1;
                (1, 1)
            }
        };
        m.acc.record(event);
        if let Some(log) = &mut m.log {
            log.push(LoggedEvent {
                time: t,
                stream: event.stream,
            });
        }
        m.last_applied = true;
        m.last_touched = touched;
        self.refresh_enabled(i, touched.0 - 1, touched.1)?;
        Ok(true)
    }

    fn process(&mut self, event: &ClockEvent) -> Result<bool> {
        self.time = event.time;
        let mut any = false;
        for i in 0..self.members.len() {
            any |= self.apply(i, event)?;
        }
        if any {
            self.grow_if_needed()?;
        }
        Ok(any)
    }

    /// Runs every event up to and including time `t`.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        self.advance_with(t, |_, _| ControlFlow::Continue(()))
            .map(|_| ())
    }

    /// Like [`advance_to`](Self::advance_to), calling `observer` after every
    /// processed clock arrival. Returns `Ok(false)` if the observer stopped
    /// the sweep early; the sweep time is then the time of that event.
    pub fn advance_with<F>(&mut self, t: f64, mut observer: F) -> Result<bool>
    where
        F: FnMut(&ClockEvent, &[Member]) -> ControlFlow<()>,
    {
        loop {
            match self.clocks.peek_time() {
                Some(next) if next <= t => {}
                _ => break,
            }
            let event = self.clocks.next_event().expect("peeked");
            self.process(&event)?;
            if observer(&event, &self.members).is_break() {
                return Ok(false);
            }
        }
        if t > self.time {
            self.time = t;
        }
        Ok(true)
    }

    /// Flushed statistics of member `i` at the current sweep time.
    pub fn stats(&mut self, i: usize) -> TrajectoryStats {
        let t = self.time;
        self.members[i].stats(t)
    }
}

/// Single-replica simulation.
#[derive(Debug, Clone)]
pub struct Simulation {
    sweep: Sweep,
}

impl Simulation {
    pub fn new(spec: &RunSpec) -> Result<Self> {
        spec.params.validate()?;
        let mut check = spec.clone();
        check.horizon = 1.0;
        check.validate()?;
        let rules = spec.rules()?;
        let opts = SweepOptions {
            seed: spec.seed,
            right: spec.params.right_boundary,
            window: spec.window,
            observed: spec.observed_sites,
            record_events: spec.record_events,
        };
        let sweep = Sweep::new(opts, vec![(spec.initial_configuration(), rules)])?;
        Ok(Simulation { sweep })
    }

    pub fn time(&self) -> f64 {
        self.sweep.time()
    }

    pub fn config(&self) -> &Configuration {
        self.sweep.members()[0].config()
    }

    pub fn member(&self) -> &Member {
        &self.sweep.members()[0]
    }

    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        self.sweep.advance_to(t)
    }

    pub fn advance_with<F>(&mut self, t: f64, mut observer: F) -> Result<bool>
    where
        F: FnMut(&ClockEvent, &Member) -> ControlFlow<()>,
    {
        self.sweep.advance_with(t, |e, m| observer(e, &m[0]))
    }

    pub fn stats(&mut self) -> TrajectoryStats {
        self.sweep.stats(0)
    }
}

/// Evolves one replica to `spec.horizon`.
pub fn evolve(spec: &RunSpec) -> Result<(Configuration, TrajectoryStats)> {
    spec.validate()?;
    let mut sim = Simulation::new(spec)?;
    sim.advance_to(spec.horizon)?;
    let stats = sim.stats();
    Ok((sim.config().clone(), stats))
}

fn restricted_log(spec: &RunSpec, len: usize, observable: usize) -> Option<Vec<LoggedEvent>> {
    let mut s = spec.clone();
    s.window = WindowPolicy::Fixed(len);
    s.record_events = true;
    let mut sim = Simulation::new(&s).ok()?;
    sim.advance_to(s.horizon).ok()?;
    Some(
        sim.member()
            .event_log()
            .unwrap_or(&[])
            .iter()
            .filter(|e| match e.stream {
                StreamId::Bulk(x) => (x as usize) <= observable,
                _ => true,
            })
            .copied()
            .collect(),
    )
}

/// Runs a fixed-window spec at its length and at `factor` times that length
/// with the same seed, and reports whether the applied events touching
/// sites `1..=observable` coincide. A window overflow counts as a mismatch.
pub fn validate_truncation(spec: &RunSpec, observable: usize, factor: usize) -> Result<bool> {
    let WindowPolicy::Fixed(len) = spec.window else {
        return Err(Error::Precondition("truncation check needs a fixed window".into()));
    };
    if factor < 2 {
        return Err(Error::Precondition(format!("factor must be at least 2, got {factor}")));
    }
    spec.validate()?;
    let small = restricted_log(spec, len, observable);
    let large = restricted_log(spec, len * factor, observable);
    Ok(match (small, large) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    })
}

/// Configuration reached from the empty lattice after `burn_in`.
pub fn warm_start(
    params: &ModelParams,
    burn_in: f64,
    seed: u64,
    window: WindowPolicy,
) -> Result<Configuration> {
    params.validate()?;
    if !(burn_in >= 0.0 && burn_in.is_finite()) {
        return Err(Error::InvalidHorizon(burn_in));
    }
    let len = match window {
        WindowPolicy::Fixed(l) => l,
        WindowPolicy::Lazy { .. } => 1,
    };
    if burn_in == 0.0 {
        return Ok(Configuration::empty(len));
    }
    let mut spec = RunSpec::new(*params, burn_in, seed);
    spec.window = window;
    Ok(evolve(&spec)?.0)
}
