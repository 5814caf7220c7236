//! Demonstration and experience buffers, and the schedules that mix them.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use rand::Rng;

use crate::env::Transition;
use crate::error::{Error, Result};
use crate::ndiff::Checkpoint;

/// Fixed-capacity FIFO ring of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push overwrites once full.
    head: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 20)),
            head: 0,
            inserted: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total pushes since creation.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
        }
        self.head = (self.head + 1) % self.capacity;
        self.inserted += 1;
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.head };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// Uniform draw with replacement.
    pub fn sample_one<R: Rng>(&self, rng: &mut R) -> &Transition {
        &self.items[rng.gen_range(0..self.items.len())]
    }

    /// Order-sensitive digest of the stored transitions.
    pub fn checksum(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for t in self.iter() {
            for v in t.state.iter().chain(&t.next_state).chain([&t.action, &t.reward]) {
                h.write_u64(v.to_bits());
            }
            h.write_u8(u8::from(t.truncated));
        }
        h.finish()
    }

    /// Serialises the contents (oldest first) as one checkpoint entry.
    pub fn to_checkpoint(&self, name: &str, ck: &mut Checkpoint) {
        let mut values = Vec::with_capacity(self.len() * 17);
        for t in self.iter() {
            values.extend_from_slice(&t.state);
            values.push(t.action);
            values.push(t.reward);
            values.extend_from_slice(&t.next_state);
            values.push(if t.truncated { 1.0 } else { 0.0 });
        }
        ck.push(name, format!("transitions capacity={}", self.capacity), values);
    }

    pub fn from_checkpoint(name: &str, ck: &Checkpoint) -> Result<Self> {
        let e = ck.require(name)?;
        let capacity = e
            .meta
            .strip_prefix("transitions capacity=")
            .and_then(|c| c.parse::<usize>().ok())
            .ok_or_else(|| Error::Checkpoint(format!("entry `{name}` is not a replay buffer")))?;
        if e.values.len() % 17 != 0 || capacity == 0 {
            return Err(Error::Checkpoint(format!("entry `{name}` has a bad length")));
        }
        let mut buf = ReplayBuffer::new(capacity);
        for c in e.values.chunks_exact(17) {
            let mut state = [0.0; 7];
            let mut next_state = [0.0; 7];
            state.copy_from_slice(&c[..7]);
            next_state.copy_from_slice(&c[9..16]);
            buf.push(Transition {
                state,
                action: c[7],
                reward: c[8],
                next_state,
                truncated: c[16] != 0.0,
            });
        }
        Ok(buf)
    }
}

/// Share of demonstrations in each training batch as a function of the
/// episode index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RhoSchedule {
    /// `(E - e) / E`, floored at 0.
    Linear { total_episodes: usize },
    /// `lambda^e`.
    Exponential { lambda: f64 },
    /// `1 / (e + 1)`, what a single shared buffer amounts to.
    Harmonic,
    Constant(f64),
}

impl RhoSchedule {
    pub fn rho(&self, episode: usize) -> Result<f64> {
        let r = match *self {
            RhoSchedule::Linear { total_episodes } => {
                if total_episodes == 0 {
                    return Err(Error::Config("linear schedule needs total_episodes > 0".into()));
                }
                let e = total_episodes as f64;
                ((e - episode as f64) / e).max(0.0)
            }
            RhoSchedule::Exponential { lambda } => {
                if !(0.0..=1.0).contains(&lambda) {
                    return Err(Error::Config(format!("exponential lambda {lambda} outside [0, 1]")));
                }
                lambda.powi(episode as i32)
            }
            RhoSchedule::Harmonic => 1.0 / (episode as f64 + 1.0),
            RhoSchedule::Constant(v) => {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Config(format!("constant rho {v} outside [0, 1]")));
                }
                v
            }
        };
        Ok(r)
    }
}

/// Free-standing form of [`RhoSchedule::rho`].
pub fn rho(schedule: &RhoSchedule, episode: usize) -> Result<f64> {
    schedule.rho(episode)
}

/// A training batch and how many of its transitions came from the
/// demonstration buffer (they come first).
#[derive(Clone, Debug)]
pub struct JointBatch {
    pub transitions: Vec<Transition>,
    pub n_demo: usize,
}

/// Demonstration count before any shortfall top-up: `round(B * rho)`
/// (half away from zero) clamped to `[0, B]`.
pub fn demo_count(batch_size: usize, rho: f64) -> usize {
    ((batch_size as f64 * rho).round().max(0.0) as usize).min(batch_size)
}

/// Draws `batch_size` transitions, `round(B * rho)` of them from `demo`
/// and the rest from `exp`, uniformly with replacement.
///
/// If `exp` holds fewer transitions than its share, the difference is drawn
/// from `demo`; if `demo` is empty the whole batch comes from `exp`.
pub fn sample_joint<R: Rng>(
    demo: &ReplayBuffer,
    exp: &ReplayBuffer,
    batch_size: usize,
    rho: f64,
    rng: &mut R,
) -> Result<JointBatch> {
    if demo.is_empty() && exp.is_empty() {
        return Err(Error::EmptyBuffers);
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let n_demo = if demo.is_empty() {
        0
    } else {
        let wanted = demo_count(batch_size, rho);
        let shortfall = (batch_size - wanted).saturating_sub(exp.len());
        wanted + shortfall
    };
    let mut transitions = Vec::with_capacity(batch_size);
    for _ in 0..n_demo {
        transitions.push(*demo.sample_one(rng));
    }
    for _ in n_demo..batch_size {
        transitions.push(*exp.sample_one(rng));
    }
    Ok(JointBatch { transitions, n_demo })
}
