//! Poisson clocks of the graphical construction.
//!
//! Every clock is identified by a [`StreamId`]. Its arrivals are a fixed
//! function of `(master_seed, id, rate)`: time is cut into blocks of
//! [`BLOCK_ARRIVALS`]` / rate` time units and each block draws its own
//! exponential gaps from a generator keyed by `(seed, id, block)`. Because
//! the exponential law is memoryless, restarting at block boundaries still
//! yields a homogeneous Poisson process, and a stream can jump forward to any
//! time without replaying the skipped blocks. The engine relies on this to
//! park clocks whose events would be no-ops.
//!
//! Each arrival also carries an independent uniform mark in `(0, 1)` used for
//! thinning (right-edge exits, nested entry sources).

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use rand_core::{Rng, SeedableRng};
use rand_pcg::Pcg64Mcg;

use crate::{Error, Result};

/// Mean number of arrivals per substream block.
pub const BLOCK_ARRIVALS: f64 = 8.0;

/// Identity of one Poisson clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StreamId {
    /// Rate-1 jump clock of site `x`.
    Bulk(u64),
    /// Clock of one boundary transition, by index.
    BoundaryTransition(u32),
    /// Entry clock of class `j`.
    ClassEntry(u32),
}

impl StreamId {
    pub fn tag(self) -> u8 {
        match self {
            StreamId::Bulk(_) => 0,
            StreamId::BoundaryTransition(_) => 1,
            StreamId::ClassEntry(_) => 2,
        }
    }

    pub fn index(self) -> u64 {
        match self {
            StreamId::Bulk(x) => x,
            StreamId::BoundaryTransition(i) | StreamId::ClassEntry(i) => i as u64,
        }
    }
}

/// One arrival of one clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockEvent {
    pub time: f64,
    pub stream: StreamId,
    pub mark: f64,
}

pub type StreamRng = Pcg64Mcg;

// splitmix64 finalizer
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_key(master_seed: u64, stream: StreamId) -> u64 {
    let k = mix64(master_seed ^ 0x5441_5345_505f_4c41);
    let k = mix64(k ^ stream.tag() as u64);
    mix64(k ^ stream.index())
}

fn block_rng(key: u64, block: u64) -> StreamRng {
    StreamRng::seed_from_u64(mix64(key ^ mix64(block)))
}

/// Generator for the first block of a stream's randomness.
pub fn derive_stream_rng(master_seed: u64, stream: StreamId) -> StreamRng {
    block_rng(stream_key(master_seed, stream), 0)
}

/// Auxiliary generator for non-clock randomness (initial conditions),
/// separated from every clock by a domain tag.
pub fn derive_aux_rng(master_seed: u64, domain: u64) -> StreamRng {
    StreamRng::seed_from_u64(mix64(mix64(master_seed ^ 0x4155_5849_4c49_4152) ^ domain))
}

/// Uniform on the open interval `(0, 1)`.
pub fn uniform_open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Inverse-CDF exponential: `-ln(u) / rate`.
pub fn exponential_from_uniform(u: f64, rate: f64) -> f64 {
    -libm::log(u) / rate
}

pub fn sample_exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::InvalidRate(rate));
    }
    Ok(exponential_from_uniform(uniform_open01(rng), rate))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Arrival {
    time: f64,
    mark: f64,
}

/// A single lazily generated Poisson clock.
#[derive(Debug, Clone)]
pub struct ClockStream {
    id: StreamId,
    rate: f64,
    key: u64,
    span: f64,
    block: u64,
    rng: StreamRng,
    cursor: f64,
    pending: Arrival,
}

impl ClockStream {
    pub fn new(master_seed: u64, id: StreamId, rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidRate(rate));
        }
        let key = stream_key(master_seed, id);
        let mut stream = ClockStream {
            id,
            rate,
            key,
            span: BLOCK_ARRIVALS / rate,
            block: 0,
            rng: block_rng(key, 0),
            cursor: 0.0,
            pending: Arrival { time: 0.0, mark: 0.0 },
        };
        stream.generate();
        Ok(stream)
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Time of the next arrival.
    pub fn peek_time(&self) -> f64 {
        self.pending.time
    }

    /// Consumes the next arrival.
    pub fn advance(&mut self) -> ClockEvent {
        let a = self.pending;
        self.generate();
        ClockEvent {
            time: a.time,
            stream: self.id,
            mark: a.mark,
        }
    }

    /// Discards arrivals up to and including `t`.
    pub fn seek_after(&mut self, t: f64) {
        if self.pending.time > t {
            return;
        }
        let target = libm::floor(t / self.span);
        if target.is_finite() && target > self.block as f64 {
            self.enter_block(target as u64);
            self.generate();
        }
        while self.pending.time <= t {
            self.generate();
        }
    }

    fn enter_block(&mut self, block: u64) {
        self.block = block;
        self.rng = block_rng(self.key, block);
        self.cursor = block as f64 * self.span;
    }

    fn generate(&mut self) {
        let prev = self.pending.time;
        loop {
            let gap = exponential_from_uniform(uniform_open01(&mut self.rng), self.rate);
            let t = self.cursor + gap;
            let end = (self.block + 1) as f64 * self.span;
            if t < end {
                self.cursor = t;
                let mark = uniform_open01(&mut self.rng);
                // a gap below one ulp must not produce a repeated time
                let time = if t > prev { t } else { prev.next_up() };
                self.pending = Arrival { time, mark };
                return;
            }
            self.enter_block(self.block + 1);
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct QueueEntry {
    time: f64,
    id: StreamId,
    generation: u32,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueEntry {}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueEntry {
    // exact ties are broken by stream id
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.id.cmp(&other.id))
            .then(self.generation.cmp(&other.generation))
    }
}

#[derive(Debug, Clone)]
struct Slot {
    stream: ClockStream,
    generation: u32,
    active: bool,
}

/// Chronological merge of the active clocks.
///
/// Streams can be switched off and on again; a stream switched on at time
/// `t` resumes at its first arrival strictly after `t`. Switching a stream
/// off only ever hides arrivals, never moves them, so the arrivals of any
/// stream are the same whatever else is in the merge.
#[derive(Debug, Clone)]
pub struct ClockMerge {
    seed: u64,
    bulk: Vec<Option<Slot>>,
    other: Vec<Slot>,
    heap: BinaryHeap<Reverse<QueueEntry>>,
    active: usize,
}

impl ClockMerge {
    pub fn new(master_seed: u64) -> Self {
        ClockMerge {
            seed: master_seed,
            bulk: Vec::new(),
            other: Vec::new(),
            heap: BinaryHeap::new(),
            active: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn active_count(&self) -> usize {
        self.active
    }

    fn slot_mut(&mut self, id: StreamId) -> Option<&mut Slot> {
        match id {
            StreamId::Bulk(x) => self.bulk.get_mut(x as usize).and_then(Option::as_mut),
            _ => self.other.iter_mut().find(|s| s.stream.id == id),
        }
    }

    /// Switches a stream on at time `now`. Rate-0 streams are never merged.
    pub fn activate(&mut self, id: StreamId, rate: f64, now: f64) -> Result<()> {
        if rate == 0.0 {
            return Ok(());
        }
        let seed = self.seed;
        let slot = match id {
            StreamId::Bulk(x) => {
                let x = x as usize;
                if self.bulk.len() <= x {
                    self.bulk.resize_with(x + 1, || None);
                }
                if self.bulk[x].is_none() {
                    self.bulk[x] = Some(Slot {
                        stream: ClockStream::new(seed, id, rate)?,
                        generation: 0,
                        active: false,
                    });
                }
                self.bulk[x].as_mut().unwrap()
            }
            _ => {
                let pos = match self.other.iter().position(|s| s.stream.id == id) {
                    Some(p) => p,
                    None => {
                        self.other.push(Slot {
                            stream: ClockStream::new(seed, id, rate)?,
                            generation: 0,
                            active: false,
                        });
                        self.other.len() - 1
                    }
                };
                &mut self.other[pos]
            }
        };
        if slot.active {
            return Ok(());
        }
        slot.stream.seek_after(now);
        slot.active = true;
        slot.generation = slot.generation.wrapping_add(1);
        let entry = QueueEntry {
            time: slot.stream.peek_time(),
            id,
            generation: slot.generation,
        };
        self.heap.push(Reverse(entry));
        self.active += 1;
        Ok(())
    }

    pub fn deactivate(&mut self, id: StreamId) {
        if let Some(slot) = self.slot_mut(id) {
            if slot.active {
                slot.active = false;
                slot.generation = slot.generation.wrapping_add(1);
                self.active -= 1;
            }
        }
    }

    pub fn is_active(&self, id: StreamId) -> bool {
        match id {
            StreamId::Bulk(x) => self
                .bulk
                .get(x as usize)
                .and_then(Option::as_ref)
                .is_some_and(|s| s.active),
            _ => self.other.iter().any(|s| s.stream.id == id && s.active),
        }
    }

    fn discard_stale(&mut self) {
        while let Some(Reverse(top)) = self.heap.peek().copied() {
            let live = match top.id {
                StreamId::Bulk(x) => self.bulk[x as usize]
                    .as_ref()
                    .is_some_and(|s| s.active && s.generation == top.generation),
                _ => self
                    .other
                    .iter()
                    .any(|s| s.stream.id == top.id && s.active && s.generation == top.generation),
            };
            if live {
                return;
            }
            self.heap.pop();
        }
    }

    /// Time of the next arrival among active streams.
    pub fn peek_time(&mut self) -> Option<f64> {
        self.discard_stale();
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    /// Pops the earliest arrival and schedules that stream's next one.
    /// Returns `None` when no stream is active.
    pub fn next_event(&mut self) -> Option<ClockEvent> {
        self.discard_stale();
        let Reverse(entry) = self.heap.pop()?;
        let slot = self.slot_mut(entry.id).expect("live entry has a slot");
        let event = slot.stream.advance();
        let next = QueueEntry {
            time: slot.stream.peek_time(),
            id: entry.id,
            generation: slot.generation,
        };
        self.heap.push(Reverse(next));
        Some(event)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn derived_rng_is_deterministic() {
        let mut a = derive_stream_rng(7, StreamId::Bulk(3));
        let mut b = derive_stream_rng(7, StreamId::Bulk(3));
        let xa: Vec<u64> = (0..100).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..100).map(|_| b.next_u64()).collect();
        assert_eq!(xa, xb);
    }

    #[test]
    fn derived_rng_differs_between_streams() {
        let mut a = derive_stream_rng(7, StreamId::Bulk(1));
        let mut b = derive_stream_rng(7, StreamId::Bulk(2));
        let xa: Vec<u64> = (0..100).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..100).map(|_| b.next_u64()).collect();
        assert_ne!(xa, xb);
        let mut c = derive_stream_rng(7, StreamId::ClassEntry(1));
        let mut d = derive_stream_rng(7, StreamId::BoundaryTransition(1));
        assert_ne!(c.next_u64(), d.next_u64());
    }

    #[test]
    fn exponential_inversion() {
        let e = exponential_from_uniform(libm::exp(-1.0), 1.0);
        assert!((e - 1.0).abs() < 1e-15);
    }

    #[test]
    fn exponential_rejects_nonpositive_rate() {
        let mut rng = derive_stream_rng(1, StreamId::Bulk(1));
        assert_eq!(sample_exponential(&mut rng, 0.0), Err(Error::InvalidRate(0.0)));
        assert!(sample_exponential(&mut rng, -1.0).is_err());
        assert!(ClockStream::new(1, StreamId::Bulk(1), 0.0).is_err());
    }

    #[test]
    fn exponential_mean() {
        let mut rng = derive_stream_rng(11, StreamId::Bulk(1));
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_exponential(&mut rng, 2.0).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn stream_times_strictly_increase() {
        let mut s = ClockStream::new(5, StreamId::Bulk(1), 3.0).unwrap();
        let mut last = 0.0;
        for _ in 0..10_000 {
            let e = s.advance();
            assert!(e.time > last);
            assert!(e.mark > 0.0 && e.mark < 1.0);
            last = e.time;
        }
    }

    #[test]
    fn seek_matches_sequential_consumption() {
        let mut full = ClockStream::new(9, StreamId::Bulk(4), 1.0).unwrap();
        let mut times = vec![];
        while full.peek_time() < 200.0 {
            times.push(full.advance().time);
        }
        for &cut in &[0.0, 3.7, 17.25, 64.0, 150.5] {
            let mut s = ClockStream::new(9, StreamId::Bulk(4), 1.0).unwrap();
            s.seek_after(cut);
            let expected = times.iter().copied().find(|&t| t > cut).unwrap();
            assert_eq!(s.peek_time(), expected, "cut {cut}");
        }
    }

    #[test]
    fn singleton_and_min_merge() {
        let mut m = ClockMerge::new(3);
        assert!(m.next_event().is_none());
        m.activate(StreamId::Bulk(1), 1.0, 0.0).unwrap();
        let first = ClockStream::new(3, StreamId::Bulk(1), 1.0).unwrap().peek_time();
        let e = m.next_event().unwrap();
        assert_eq!(e.time, first);
        assert_eq!(e.stream, StreamId::Bulk(1));

        let mut m = ClockMerge::new(3);
        m.activate(StreamId::Bulk(1), 1.0, 0.0).unwrap();
        m.activate(StreamId::Bulk(2), 1.0, 0.0).unwrap();
        let a = ClockStream::new(3, StreamId::Bulk(1), 1.0).unwrap().peek_time();
        let b = ClockStream::new(3, StreamId::Bulk(2), 1.0).unwrap().peek_time();
        assert_eq!(m.next_event().unwrap().time, a.min(b));
    }

    #[test]
    fn zero_rate_streams_are_excluded() {
        let mut m = ClockMerge::new(3);
        m.activate(StreamId::ClassEntry(2), 0.0, 0.0).unwrap();
        assert_eq!(m.active_count(), 0);
        assert!(m.next_event().is_none());
    }

    fn bulk_log(seed: u64, sites: u64, horizon: f64) -> Vec<(u64, u64)> {
        let mut m = ClockMerge::new(seed);
        for x in 1..=sites {
            m.activate(StreamId::Bulk(x), 1.0, 0.0).unwrap();
        }
        let mut log = vec![];
        while let Some(e) = m.next_event() {
            if e.time > horizon {
                break;
            }
            log.push((e.stream.index(), e.time.to_bits()));
        }
        log
    }

    #[test]
    fn adding_streams_leaves_existing_subsequence_unchanged() {
        let small = bulk_log(21, 10, 50.0);
        let large: Vec<_> = bulk_log(21, 20, 50.0)
            .into_iter()
            .filter(|&(x, _)| x <= 10)
            .collect();
        assert_eq!(small, large);
    }

    #[test]
    fn deactivation_hides_but_does_not_shift_arrivals() {
        let mut reference = ClockStream::new(4, StreamId::Bulk(2), 1.0).unwrap();
        let mut all = vec![];
        while reference.peek_time() < 100.0 {
            all.push(reference.advance().time);
        }
        let mut m = ClockMerge::new(4);
        m.activate(StreamId::Bulk(2), 1.0, 0.0).unwrap();
        let mut seen = vec![];
        while let Some(e) = m.next_event() {
            if e.time > 100.0 {
                break;
            }
            seen.push(e.time);
            if seen.len() == 5 {
                m.deactivate(StreamId::Bulk(2));
                m.activate(StreamId::Bulk(2), 1.0, 40.0).unwrap();
            }
        }
        let expected: Vec<f64> = all[..5]
            .iter()
            .copied()
            .chain(all.iter().copied().filter(|&t| t > 40.0))
            .collect();
        assert_eq!(seen, expected);
    }
}
