//! Ambient illumination sources.
//!
//! Commercial TV, 4G and 5G downlinks are OFDM, and OFDM baseband is
//! asymptotically circular complex Gaussian. The reader only ever looks at
//! received power, so a band-limited Gaussian process with the right mean
//! power is a sufficient stand-in. 5G TDD cells are modelled by gating that
//! process with a periodic on/off mask (optionally jittered per period).

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::capture::IqBuffer;
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::scalar::Sample;

/// 5G TDD frame duration.
pub const T_5G: f64 = 1e-3;
pub const DEFAULT_DUTY_CYCLE: f64 = 0.7;

/// Band-limiting cutoff as a fraction of the sample rate (80 % of Nyquist).
const BAND_EDGE: f64 = 0.4;
const SHAPING_TAPS: usize = 11;

const STREAM_SIGNAL: u64 = 1;
const STREAM_MASK: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Tv,
    FourG,
    FiveGTdd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceProfile {
    pub kind: SourceKind,
    /// Average power of the underlying (ungated) process.
    pub mean_power: f64,
    /// TDD frame period in seconds; FiveGTdd only.
    pub tdd_period: f64,
    /// On-fraction of each TDD period; FiveGTdd only.
    pub duty_cycle: f64,
    /// Relative per-period spread of the on-duration, in [0, 1).
    pub burst_jitter: f64,
    pub rng_seed: u64,
}

impl SourceProfile {
    pub fn tv(rng_seed: u64) -> Self {
        Self::continuous(SourceKind::Tv, rng_seed)
    }

    pub fn four_g(rng_seed: u64) -> Self {
        Self::continuous(SourceKind::FourG, rng_seed)
    }

    fn continuous(kind: SourceKind, rng_seed: u64) -> Self {
        Self {
            kind,
            mean_power: 1.0,
            tdd_period: T_5G,
            duty_cycle: 1.0,
            burst_jitter: 0.0,
            rng_seed,
        }
    }

    pub fn five_g_tdd(rng_seed: u64) -> Self {
        Self {
            kind: SourceKind::FiveGTdd,
            mean_power: 1.0,
            tdd_period: T_5G,
            duty_cycle: DEFAULT_DUTY_CYCLE,
            burst_jitter: 0.0,
            rng_seed,
        }
    }

    pub fn is_tdd(&self) -> bool {
        self.kind == SourceKind::FiveGTdd
    }

    /// Long-run average power including TDD gating.
    pub fn average_power(&self) -> f64 {
        if self.is_tdd() {
            self.mean_power * self.duty_cycle
        } else {
            self.mean_power
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mean_power > 0.0 && self.mean_power.is_finite()) {
            return Err(Error::param(format!("mean_power must be > 0, got {}", self.mean_power)));
        }
        if self.is_tdd() {
            if !(self.tdd_period > 0.0 && self.tdd_period.is_finite()) {
                return Err(Error::param(format!("tdd_period must be > 0, got {}", self.tdd_period)));
            }
            if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
                return Err(Error::param(format!(
                    "duty_cycle must lie in (0, 1], got {}",
                    self.duty_cycle
                )));
            }
            if !(0.0..1.0).contains(&self.burst_jitter) {
                return Err(Error::param(format!(
                    "burst_jitter must lie in [0, 1), got {}",
                    self.burst_jitter
                )));
            }
        }
        Ok(())
    }
}

/// Hamming-windowed sinc low-pass with unit energy, so white input power is
/// preserved in expectation.
pub fn shaping_taps() -> Vec<f64> {
    let mid = (SHAPING_TAPS - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..SHAPING_TAPS)
        .map(|k| {
            let x = k as f64 - mid;
            let sinc = if x == 0.0 {
                2.0 * BAND_EDGE
            } else {
                (2.0 * std::f64::consts::PI * BAND_EDGE * x).sin() / (std::f64::consts::PI * x)
            };
            let window = 0.54
                - 0.46 * (2.0 * std::f64::consts::PI * k as f64 / (SHAPING_TAPS - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let energy: f64 = taps.iter().map(|t| t * t).sum();
    let norm = energy.sqrt();
    taps.iter_mut().for_each(|t| *t /= norm);
    taps
}

/// On/off gate for a TDD source: each period starts with its on-burst.
pub fn tdd_mask(profile: &SourceProfile, n: usize, sample_rate: f64) -> Vec<bool> {
    let mut rng = rng_for(profile.rng_seed, STREAM_MASK);
    let period = profile.tdd_period * sample_rate;
    let mut mask = vec![false; n];
    let mut p = 0u64;
    loop {
        let start = (p as f64 * period).round() as usize;
        if start >= n {
            break;
        }
        let end = (((p + 1) as f64 * period).round() as usize).max(start + 1);
        let len = end - start;
        let spread = if profile.burst_jitter > 0.0 {
            profile.burst_jitter * rng.random_range(-1.0..=1.0)
        } else {
            0.0
        };
        let on = ((profile.duty_cycle * (1.0 + spread) * len as f64).round() as usize).min(len);
        let stop = (start + on).min(n);
        mask[start..stop].iter_mut().for_each(|m| *m = true);
        p += 1;
    }
    mask
}

/// Synthesizes `duration` seconds of ambient signal at `sample_rate`.
/// Deterministic in `profile.rng_seed`.
pub fn generate<T: Sample>(
    profile: &SourceProfile,
    duration: f64,
    sample_rate: f64,
) -> Result<IqBuffer<T>> {
    profile.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::param(format!("duration must be > 0, got {duration}")));
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::param(format!("sample rate must be > 0, got {sample_rate}")));
    }
    if profile.is_tdd() && sample_rate * profile.tdd_period < 10.0 {
        return Err(Error::param(format!(
            "{sample_rate} Hz cannot resolve a {} s TDD period (need >= 10 samples per period)",
            profile.tdd_period
        )));
    }
    let n = (duration * sample_rate).round() as usize;
    let taps: Vec<T> = shaping_taps().into_iter().map(T::from_f64_lossy).collect();
    let sigma = T::from_f64_lossy((profile.mean_power / 2.0).sqrt());

    let mut rng = rng_for(profile.rng_seed, STREAM_SIGNAL);
    let white: Vec<Complex<T>> = (0..n + taps.len() - 1)
        .map(|_| Complex::new(T::standard_normal(&mut rng) * sigma, T::standard_normal(&mut rng) * sigma))
        .collect();
    let mut samples: Vec<Complex<T>> = white
        .windows(taps.len())
        .map(|w| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (x, &h) in w.iter().zip(&taps) {
                acc.re += x.re * h;
                acc.im += x.im * h;
            }
            acc
        })
        .collect();

    if profile.is_tdd() {
        let mask = tdd_mask(profile, n, sample_rate);
        for (s, &on) in samples.iter_mut().zip(&mask) {
            if !on {
                *s = Complex::new(T::zero(), T::zero());
            }
        }
    }
    IqBuffer::new(samples, sample_rate)
}
