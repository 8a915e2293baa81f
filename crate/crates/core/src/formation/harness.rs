use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::message::ProtocolMessage;
use super::topology::{GroupId, VehicleId};
use super::FormationError;

/// Simulated time in nanoseconds.
pub type SimTime = u64;

pub const NANOS_PER_SEC: f64 = 1e9;

pub fn secs_to_time(s: f64) -> SimTime {
    (s * NANOS_PER_SEC).round() as SimTime
}

pub fn time_to_secs(t: SimTime) -> f64 {
    t as f64 / NANOS_PER_SEC
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarnessConfig {
    pub min_delay_s: f64,
    pub max_delay_s: f64,
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            min_delay_s: 1e-3,
            max_delay_s: 5e-3,
            drop_probability: 0.0,
            seed: 0,
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<(), FormationError> {
        if !(self.min_delay_s >= 0.0)
            || !(self.max_delay_s >= self.min_delay_s)
            || !self.max_delay_s.is_finite()
        {
            return Err(FormationError::InvalidConfig("delay bounds"));
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(FormationError::InvalidConfig(
                "drop probability outside [0, 1]",
            ));
        }
        Ok(())
    }
}

/// Reliable-send slot; a newer send to the same key replaces the older one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OutboxKey {
    Topology {
        receiver: VehicleId,
        group_id: GroupId,
    },
    Leave {
        group_id: GroupId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerKind {
    JoinTimeout { epoch: u32 },
    Retransmit { key: OutboxKey, generation: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Deliver(ProtocolMessage),
    Timer {
        vehicle: VehicleId,
        timer: TimerKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HarnessStats {
    pub sent: u64,
    pub dropped: u64,
    pub delivered: u64,
    pub bytes_sent: u64,
}

/// Lossy, delayed message network plus the global timer queue. Events are
/// ordered by time, then by the order in which they were scheduled.
#[derive(Debug, Clone)]
pub struct NetworkHarness {
    config: HarnessConfig,
    rng: ChaCha8Rng,
    queue: BTreeMap<(SimTime, u64), Event>,
    seq: u64,
    stats: HarnessStats,
}

impl NetworkHarness {
    pub fn new(config: HarnessConfig) -> Result<Self, FormationError> {
        config.validate()?;
        Ok(Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            queue: BTreeMap::new(),
            seq: 0,
            stats: HarnessStats::default(),
        })
    }

    pub fn config(&self) -> &HarnessConfig {
        &self.config
    }

    pub fn stats(&self) -> HarnessStats {
        self.stats
    }

    fn push(&mut self, at: SimTime, ev: Event) {
        self.queue.insert((at, self.seq), ev);
        self.seq += 1;
    }

    /// Returns whether the message survived the channel.
    pub fn send(&mut self, now: SimTime, msg: ProtocolMessage) -> bool {
        self.stats.sent += 1;
        self.stats.bytes_sent += u64::from(msg.size_bytes());
        let drop_draw: f64 = self.rng.random();
        let lo = secs_to_time(self.config.min_delay_s);
        let hi = secs_to_time(self.config.max_delay_s);
        let delay = if hi > lo {
            self.rng.random_range(lo..=hi)
        } else {
            lo
        };
        if drop_draw < self.config.drop_probability {
            self.stats.dropped += 1;
            return false;
        }
        self.push(now + delay, Event::Deliver(msg));
        true
    }

    pub fn schedule_timer(&mut self, at: SimTime, vehicle: VehicleId, timer: TimerKind) {
        self.push(at, Event::Timer { vehicle, timer });
    }

    pub fn next_time(&self) -> Option<SimTime> {
        self.queue.keys().next().map(|k| k.0)
    }

    /// Earliest event due at or before `until`.
    pub fn pop_due(&mut self, until: SimTime) -> Option<(SimTime, Event)> {
        let (&key, _) = self.queue.iter().next()?;
        if key.0 > until {
            return None;
        }
        let ev = self.queue.remove(&key).expect("present");
        if matches!(ev, Event::Deliver(_)) {
            self.stats.delivered += 1;
        }
        Some((key.0, ev))
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn in_flight(&self) -> usize {
        self.queue
            .values()
            .filter(|e| matches!(e, Event::Deliver(_)))
            .count()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formation::message::Payload;

    fn msg(sender: VehicleId) -> ProtocolMessage {
        ProtocolMessage {
            sender,
            receiver: 0,
            payload: Payload::JoinRequest { epoch: 1 },
            hop: 1,
        }
    }

    fn schedule(seed: u64) -> Vec<(SimTime, VehicleId)> {
        let mut h = NetworkHarness::new(HarnessConfig {
            drop_probability: 0.3,
            seed,
            ..HarnessConfig::default()
        })
        .unwrap();
        for s in 0..50 {
            h.send(u64::from(s) * 1000, msg(s));
        }
        let mut out = Vec::new();
        while let Some((t, Event::Deliver(m))) = h.pop_due(SimTime::MAX) {
            out.push((t, m.sender));
        }
        out
    }

    #[test]
    fn same_seed_same_schedule() {
        assert_eq!(schedule(4), schedule(4));
        assert_ne!(schedule(4), schedule(5));
        let s = schedule(4);
        assert!(s.windows(2).all(|w| w[0].0 <= w[1].0));
        assert!(s.len() < 50);
    }

    #[test]
    fn ties_deliver_in_send_order() {
        let mut h = NetworkHarness::new(HarnessConfig {
            min_delay_s: 0.001,
            max_delay_s: 0.001,
            ..HarnessConfig::default()
        })
        .unwrap();
        for s in 0..5 {
            h.send(0, msg(s));
        }
        let order: Vec<_> = std::iter::from_fn(|| h.pop_due(SimTime::MAX))
            .map(|(_, e)| match e {
                Event::Deliver(m) => m.sender,
                Event::Timer { .. } => unreachable!(),
            })
            .collect();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn full_loss_drops_everything() {
        let mut h = NetworkHarness::new(HarnessConfig {
            drop_probability: 1.0,
            ..HarnessConfig::default()
        })
        .unwrap();
        assert!(!h.send(0, msg(1)));
        assert!(h.is_idle());
        assert_eq!(h.stats().dropped, 1);
        assert!(NetworkHarness::new(HarnessConfig {
            drop_probability: 1.5,
            ..HarnessConfig::default()
        })
        .is_err());
    }
}
