//! M/G/inf birth-death process: Poisson births, general lifetimes.
//!
//! [`EventSchedule`] is the continuous-time event engine used both by the
//! stand-alone population simulation and by the full network engine. The
//! closed-form stationary results live alongside it so tests can compare
//! the two directly.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::distributions::{sample_interarrival, LifetimeDistribution, RandomSource};
use crate::world::AgentId;

#[derive(Clone, Copy, Debug, PartialEq)]
struct PendingDeath {
    time: f64,
    id: AgentId,
}

impl Eq for PendingDeath {}

impl Ord for PendingDeath {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for PendingDeath {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Event {
    Birth {
        time: f64,
        id: AgentId,
        death_time: f64,
    },
    Death {
        time: f64,
        id: AgentId,
    },
}

impl Event {
    pub fn time(&self) -> f64 {
        match *self {
            Event::Birth { time, .. } | Event::Death { time, .. } => time,
        }
    }
}

/// Next birth time plus a min-heap of pending deaths.
#[derive(Clone, Debug)]
pub struct EventSchedule {
    next_birth_time: f64,
    pending_deaths: BinaryHeap<Reverse<PendingDeath>>,
    next_id: u64,
}

impl EventSchedule {
    /// Empty system at `now`; the first birth is drawn immediately.
    pub fn new(now: f64, lambda: f64, rng: &mut RandomSource) -> Self {
        Self {
            next_birth_time: now + sample_interarrival(lambda, rng),
            pending_deaths: BinaryHeap::new(),
            next_id: 0,
        }
    }

    /// Explicit state, mostly for tests.
    pub fn from_parts(
        next_birth_time: f64,
        deaths: impl IntoIterator<Item = (f64, AgentId)>,
    ) -> Self {
        let pending_deaths: BinaryHeap<_> = deaths
            .into_iter()
            .map(|(time, id)| Reverse(PendingDeath { time, id }))
            .collect();
        let next_id = pending_deaths
            .iter()
            .map(|Reverse(d)| d.id.0 + 1)
            .max()
            .unwrap_or(0);
        Self {
            next_birth_time,
            pending_deaths,
            next_id,
        }
    }

    pub fn next_birth_time(&self) -> f64 {
        self.next_birth_time
    }

    pub fn next_death(&self) -> Option<(f64, AgentId)> {
        self.pending_deaths.peek().map(|Reverse(d)| (d.time, d.id))
    }

    pub fn pending(&self) -> usize {
        self.pending_deaths.len()
    }

    /// Hands out a fresh id without scheduling anything.
    pub fn allocate_id(&mut self) -> AgentId {
        let id = AgentId(self.next_id);
        self.next_id += 1;
        id
    }

    pub fn schedule_death(&mut self, id: AgentId, time: f64) {
        self.pending_deaths.push(Reverse(PendingDeath { time, id }));
    }

    /// Pops the earlier of the next birth and the next death.
    ///
    /// A birth wins only when strictly earlier. On a birth the newborn's
    /// death and the following birth are both scheduled before returning.
    pub fn advance(
        &mut self,
        lambda: f64,
        dist: &LifetimeDistribution,
        rng: &mut RandomSource,
    ) -> Event {
        let birth_first = match self.pending_deaths.peek() {
            Some(Reverse(d)) => self.next_birth_time < d.time,
            None => true,
        };
        if birth_first {
            let now = self.next_birth_time;
            let id = self.allocate_id();
            let death_time = now + dist.sample(rng);
            self.schedule_death(id, death_time);
            self.next_birth_time = now + sample_interarrival(lambda, rng);
            Event::Birth {
                time: now,
                id,
                death_time,
            }
        } else {
            let Reverse(d) = self.pending_deaths.pop().expect("peeked above");
            Event::Death {
                time: d.time,
                id: d.id,
            }
        }
    }
}

/// Population count sampled at integer times `0, 1, ..., horizon`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PopulationTrace {
    pub samples: Vec<(f64, u64)>,
    pub births: u64,
    pub deaths: u64,
}

impl PopulationTrace {
    pub fn counts(&self) -> impl Iterator<Item = u64> + '_ {
        self.samples.iter().map(|&(_, n)| n)
    }

    /// The samples after discarding the leading `discard` fraction.
    pub fn tail(&self, discard: f64) -> &[(f64, u64)] {
        let skip = ((self.samples.len() as f64) * discard).round() as usize;
        &self.samples[skip.min(self.samples.len())..]
    }

    pub fn tail_mean(&self, discard: f64) -> f64 {
        let t = self.tail(discard);
        if t.is_empty() {
            return 0.0;
        }
        t.iter().map(|&(_, n)| n as f64).sum::<f64>() / t.len() as f64
    }

    /// Relative frequency of each count in the tail.
    pub fn tail_histogram(&self, discard: f64) -> BTreeMap<i64, f64> {
        let t = self.tail(discard);
        let mut h = BTreeMap::new();
        for &(_, n) in t {
            *h.entry(n as i64).or_insert(0.0) += 1.0;
        }
        let total = t.len() as f64;
        for v in h.values_mut() {
            *v /= total;
        }
        h
    }
}

/// Runs the bare queue from an empty system for `horizon` time units.
pub fn simulate_population(
    lambda: f64,
    dist: &LifetimeDistribution,
    horizon: u64,
    rng: &mut RandomSource,
) -> PopulationTrace {
    let mut schedule = EventSchedule::new(0.0, lambda, rng);
    let mut trace = PopulationTrace::default();
    let mut population: u64 = 0;
    for t in 0..=horizon {
        let t = t as f64;
        loop {
            let next = match schedule.next_death() {
                Some((d, _)) => d.min(schedule.next_birth_time()),
                None => schedule.next_birth_time(),
            };
            if next > t {
                break;
            }
            match schedule.advance(lambda, dist, rng) {
                Event::Birth { .. } => {
                    population += 1;
                    trace.births += 1;
                }
                Event::Death { .. } => {
                    population -= 1;
                    trace.deaths += 1;
                }
            }
        }
        trace.samples.push((t, population));
    }
    trace
}

/// Poisson pmf at `i` with the given mean, evaluated in log space.
pub fn poisson_pmf(mean: f64, i: u64) -> f64 {
    if mean <= 0.0 {
        return if i == 0 { 1.0 } else { 0.0 };
    }
    let i = i as f64;
    (i * mean.ln() - mean - ln_gamma(i + 1.0)).exp()
}

/// Stationary probability of `i` individuals: Poisson with mean `lambda * E[G]`.
pub fn limiting_pmf(lambda: f64, dist: &LifetimeDistribution, i: u64) -> f64 {
    poisson_pmf(lambda * dist.mean(), i)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SteadyStateMoments {
    pub mean: f64,
    pub variance: f64,
    pub mean_sojourn: f64,
}

pub fn steady_state_moments(lambda: f64, dist: &LifetimeDistribution) -> SteadyStateMoments {
    let g = dist.mean();
    SteadyStateMoments {
        mean: lambda * g,
        variance: lambda * g,
        mean_sojourn: g,
    }
}
