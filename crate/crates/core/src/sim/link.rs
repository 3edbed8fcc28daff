//! Seeded lossy FIFO channels.

use serde::{Deserialize, Serialize};

use super::rng::SplitMix64;

fn default_latency() -> u64 {
    20
}

fn default_jitter() -> u64 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    #[serde(default = "default_latency")]
    pub latency: u64,
    #[serde(default = "default_jitter")]
    pub jitter: u64,
    #[serde(default)]
    pub drop: f64,
    #[serde(default)]
    pub seed: u64,
    /// Bytes per second; `None` means size does not add delay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub byte_rate: Option<u64>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            latency: default_latency(),
            jitter: default_jitter(),
            drop: 0.0,
            seed: 0,
            byte_rate: None,
        }
    }
}

impl LinkConfig {
    pub fn lossless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.drop) {
            return Err(format!("drop {} outside [0, 1]", self.drop));
        }
        if self.byte_rate == Some(0) {
            return Err("byte_rate must be positive".into());
        }
        Ok(())
    }

    /// Applies a `net` scenario action.
    pub fn set(&mut self, field: &str, value: f64) -> Result<(), String> {
        let whole = || {
            if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as u64)
            } else {
                Err(format!("{field} must be a non-negative integer"))
            }
        };
        let mut next = self.clone();
        match field {
            "latency" => next.latency = whole()?,
            "jitter" => next.jitter = whole()?,
            "drop" => next.drop = value,
            "byte_rate" => next.byte_rate = Some(whole()?),
            _ => return Err(format!("unknown link field {field:?}")),
        }
        next.validate()?;
        *self = next;
        Ok(())
    }
}

/// One direction of one link instance. Delivery times never decrease, so
/// messages that survive arrive in the order they were sent.
#[derive(Debug, Clone)]
pub struct Channel {
    rng: SplitMix64,
    last: u64,
    pub sent: u64,
    pub dropped: u64,
}

impl Channel {
    pub fn new(rng: SplitMix64) -> Self {
        Self {
            rng,
            last: 0,
            sent: 0,
            dropped: 0,
        }
    }

    /// Delivery time for a message of `size` bytes sent at `now`, or `None`
    /// when the message is lost.
    pub fn send(&mut self, cfg: &LinkConfig, now: u64, size: usize) -> Option<u64> {
        self.sent += 1;
        // Both draws happen for every message so the drop pattern does not
        // depend on the jitter setting.
        let jitter = self.rng.range(0, cfg.jitter);
        let lost = self.rng.chance(cfg.drop) || cfg.drop >= 1.0;
        if lost {
            self.dropped += 1;
            return None;
        }
        let transfer = cfg
            .byte_rate
            .map_or(0, |rate| (size as u64 * 1000).div_ceil(rate));
        let at = (now + cfg.latency + jitter + transfer).max(self.last);
        self.last = at;
        Some(at)
    }
}

/// A lossless serial leg: delay is the clocking time of the bytes.
#[derive(Debug, Clone, Default)]
pub struct SerialLeg {
    last: u64,
}

impl SerialLeg {
    pub fn send(&mut self, now: u64, size: usize) -> u64 {
        let at = (now + crate::atlink::serial_latency_ms(size, crate::atlink::BAUD)).max(self.last);
        self.last = at;
        at
    }
}
