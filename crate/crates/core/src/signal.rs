use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Multi-channel time-domain signal, samples stored `N × K` (interleaved by
/// channel, like a WAV file).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSignal {
    pub samples: Tensor,
    pub sample_rate: u32,
}

impl TimeSignal {
    pub fn new(samples: Tensor, sample_rate: u32) -> Result<Self> {
        if samples.ndim() != 2 {
            return Err(Error::shape("TimeSignal::new", samples.shape(), &[0, 0]));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn zeros(len: usize, channels: usize, sample_rate: u32) -> Self {
        Self {
            samples: Tensor::zeros(&[len, channels]),
            sample_rate,
        }
    }

    pub fn from_channels(channels: &[Vec<f64>], sample_rate: u32) -> Result<Self> {
        let k = channels.len();
        let n = channels.first().map_or(0, |c| c.len());
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::shape("TimeSignal::from_channels", &[n], &[]));
        }
        let mut data = Vec::with_capacity(n * k);
        for i in 0..n {
            for c in channels {
                data.push(c[i]);
            }
        }
        Self::new(Tensor::new(vec![n, k], data)?, sample_rate)
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Self {
        let n = samples.len();
        Self {
            samples: Tensor::new(vec![n, 1], samples).expect("mono shape"),
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.samples.shape()[1]
    }

    pub fn channel(&self, k: usize) -> Vec<f64> {
        let kc = self.channels();
        self.samples.data().iter().skip(k).step_by(kc).copied().collect()
    }

    pub fn to_channels(&self) -> Vec<Vec<f64>> {
        (0..self.channels()).map(|k| self.channel(k)).collect()
    }

    /// Single-channel view of channel `k`.
    pub fn select_channel(&self, k: usize) -> TimeSignal {
        TimeSignal::mono(self.channel(k), self.sample_rate)
    }

    /// Samples `start..start + len` of every channel.
    pub fn crop(&self, start: usize, len: usize) -> Result<TimeSignal> {
        if start + len > self.len() {
            return Err(Error::TooShort {
                samples: self.len(),
                required: start + len,
            });
        }
        let k = self.channels();
        let data = self.samples.data()[start * k..(start + len) * k].to_vec();
        TimeSignal::new(Tensor::new(vec![len, k], data)?, self.sample_rate)
    }

    pub fn energy(&self, k: usize) -> f64 {
        self.channel(k).iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.samples.is_finite()
    }
}
