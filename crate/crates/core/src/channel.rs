//! Two-state backscatter channel.
//!
//! The reader receives the ambient signal over a direct path plus a cascade
//! path through the tag. The cascade is scaled by the tag's reflection
//! coefficient, which depends on the RF switch position:
//!
//! ```text
//! y[n] = (h_direct + g_cascade · Γ(state(n)) · e^{j2π f_d n / F1}) · s[n] + w[n]
//! ```
//!
//! The model is narrowband and flat: the tag is metres from the reader, so
//! the cascade's excess delay is far below one sample at 1 MHz.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::capture::IqBuffer;
use crate::error::{Error, Result};
use crate::frame::{switch_state_of, Fm0Levels, SwitchState};
use crate::rng::rng_for;
use crate::scalar::Sample;

const STREAM_NOISE: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub h_direct: Complex<f64>,
    pub g_cascade: Complex<f64>,
    /// Reflection coefficient with the switch closed (short circuit).
    pub refl_connected: Complex<f64>,
    /// Reflection coefficient with the switch open (open circuit).
    pub refl_disconnected: Complex<f64>,
    pub noise_power: f64,
    /// Phase rotation rate of the cascade path; 0 for a static tag.
    pub doppler_hz: f64,
}

impl Default for ChannelParams {
    /// Contrast 1.21, noiseless, static.
    fn default() -> Self {
        Self {
            h_direct: Complex::new(1.0, 0.0),
            g_cascade: Complex::new(0.2, 0.0),
            refl_connected: Complex::new(0.0, 0.0),
            refl_disconnected: Complex::new(0.5, 0.0),
            noise_power: 0.0,
            doppler_hz: 0.0,
        }
    }
}

/// Power ratio between the open- and short-circuit states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contrast {
    Ratio(f64),
    /// The short-circuit state receives no power at all.
    Infinite,
}

impl Contrast {
    pub fn as_f64(self) -> f64 {
        match self {
            Contrast::Ratio(r) => r,
            Contrast::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Contrast::Infinite)
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return Err(Error::param(format!("noise_power must be >= 0, got {}", self.noise_power)));
        }
        for (name, r) in [
            ("refl_connected", self.refl_connected),
            ("refl_disconnected", self.refl_disconnected),
        ] {
            if r.norm() > 1.0 + 1e-12 {
                return Err(Error::param(format!("|{name}| = {} exceeds 1", r.norm())));
            }
        }
        if !self.doppler_hz.is_finite() {
            return Err(Error::param("doppler_hz must be finite"));
        }
        Ok(())
    }

    /// Net complex gain seen by the source in a given switch state (at zero
    /// Doppler phase).
    pub fn state_gain(&self, state: SwitchState) -> Complex<f64> {
        let refl = match state {
            SwitchState::Connected => self.refl_connected,
            SwitchState::Disconnected => self.refl_disconnected,
        };
        self.h_direct + self.g_cascade * refl
    }

    /// |gain|² per state, for a unit-power source.
    pub fn state_power(&self, state: SwitchState) -> f64 {
        self.state_gain(state).norm_sqr()
    }

    /// Absolute received-power gap between the states for a unit-power source.
    pub fn state_gap(&self) -> f64 {
        (self.state_power(SwitchState::Disconnected) - self.state_power(SwitchState::Connected)).abs()
    }

    pub fn contrast(&self) -> Contrast {
        let den = self.state_power(SwitchState::Connected);
        let num = self.state_power(SwitchState::Disconnected);
        if den == 0.0 {
            Contrast::Infinite
        } else {
            Contrast::Ratio(num / den)
        }
    }

    /// True when the two states produce different received power.
    pub fn is_decodable(&self) -> bool {
        self.contrast().as_f64() != 1.0
    }

    pub fn with_swapped_states(&self) -> Self {
        Self {
            refl_connected: self.refl_disconnected,
            refl_disconnected: self.refl_connected,
            ..self.clone()
        }
    }

    /// Sets `noise_power` so that `state_gap · source_power / noise_power`
    /// equals `snr_db`.
    pub fn with_snr_db(&self, snr_db: f64, source_power: f64) -> Self {
        Self {
            noise_power: self.state_gap() * source_power / 10f64.powf(snr_db / 10.0),
            ..self.clone()
        }
    }

    /// Measured SNR in dB under the same definition as [`Self::with_snr_db`].
    pub fn snr_db(&self, source_power: f64) -> f64 {
        10.0 * (self.state_gap() * source_power / self.noise_power).log10()
    }

    /// Rescales the magnitude of `g_cascade` (keeping its phase) so that the
    /// contrast equals `target`. Searches over `|g| ∈ [0, 1e6]` by bisection.
    pub fn with_contrast(&self, target: f64) -> Result<Self> {
        if !(target > 0.0 && target.is_finite()) {
            return Err(Error::param(format!("contrast must be positive, got {target}")));
        }
        let dir = if self.g_cascade.norm() > 0.0 {
            self.g_cascade / self.g_cascade.norm()
        } else {
            Complex::new(1.0, 0.0)
        };
        let ratio_db = |g: Complex<f64>| {
            let c = Self {
                g_cascade: g,
                ..self.clone()
            };
            10.0 * c.contrast().as_f64().log10()
        };
        let goal = 10.0 * target.log10();
        let rising = goal >= ratio_db(Complex::new(0.0, 0.0));
        let past = |v: f64| if rising { v >= goal } else { v <= goal };
        // The current direction of g first, then the opposite one (which
        // lets a contrast cross from above 1 to below 1).
        'dirs: for d in [dir, -dir] {
            let (mut lo, mut hi) = (0.0f64, 1e-3f64);
            while !past(ratio_db(d * hi)) {
                lo = hi;
                hi *= 2.0;
                if hi > 1e6 {
                    continue 'dirs;
                }
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if past(ratio_db(d * mid)) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(Self {
                g_cascade: d * hi,
                ..self.clone()
            });
        }
        Err(Error::param(format!("contrast {target} is unreachable with this geometry")))
    }
}

/// The tag's switch levels laid out in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchWaveform {
    pub levels: Fm0Levels,
    /// Seconds per half-symbol level.
    pub symbol_period: f64,
    pub start_offset: f64,
}

impl SwitchWaveform {
    pub fn new(levels: Fm0Levels, symbol_period: f64, start_offset: f64) -> Result<Self> {
        if !(symbol_period > 0.0 && symbol_period.is_finite()) {
            return Err(Error::param(format!("symbol period must be > 0, got {symbol_period}")));
        }
        if !(start_offset >= 0.0 && start_offset.is_finite()) {
            return Err(Error::param(format!("start offset must be >= 0, got {start_offset}")));
        }
        Ok(Self {
            levels,
            symbol_period,
            start_offset,
        })
    }

    pub fn duration(&self) -> f64 {
        self.levels.len() as f64 * self.symbol_period
    }

    pub fn end(&self) -> f64 {
        self.start_offset + self.duration()
    }

    /// First sample index at or after time `t`, tolerant to rounding noise in
    /// products like 2.7e-3 * 1e6.
    fn index_at(t: f64, rate: f64) -> usize {
        let x = t * rate;
        (x - 1e-9 * x.abs().max(1.0)).ceil().max(0.0) as usize
    }

    /// Switch state per sample for a buffer of `n` samples at `rate`; the tag
    /// rests connected outside its transmission.
    pub fn states(&self, n: usize, rate: f64) -> Vec<SwitchState> {
        let mut out = vec![SwitchState::Connected; n];
        for (k, &level) in self.levels.levels.iter().enumerate() {
            let a = Self::index_at(self.start_offset + k as f64 * self.symbol_period, rate).min(n);
            let b = Self::index_at(self.start_offset + (k + 1) as f64 * self.symbol_period, rate).min(n);
            let state = switch_state_of(level);
            out[a..b].iter_mut().for_each(|s| *s = state);
        }
        out
    }
}

/// Passes `source` through the two-state channel driven by `tag`.
pub fn apply<T: Sample>(
    source: &IqBuffer<T>,
    tag: &SwitchWaveform,
    ch: &ChannelParams,
    rng_seed: u64,
) -> Result<IqBuffer<T>> {
    ch.validate()?;
    let rate = source.sample_rate;
    let buffer_s = source.duration();
    if tag.end() > buffer_s * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::WaveformOverrun {
            end_s: tag.end(),
            buffer_s,
        });
    }
    let n = source.len();
    let states = tag.states(n, rate);

    let cast = |c: Complex<f64>| Complex::new(T::from_f64_lossy(c.re), T::from_f64_lossy(c.im));
    let h = cast(ch.h_direct);
    let tag_gain = [
        cast(ch.g_cascade * ch.refl_connected),
        cast(ch.g_cascade * ch.refl_disconnected),
    ];
    let static_gain = [h + tag_gain[0], h + tag_gain[1]];

    let mut out: Vec<Complex<T>> = if ch.doppler_hz == 0.0 {
        source
            .samples
            .iter()
            .zip(&states)
            .map(|(&s, &st)| static_gain[st.level() as usize] * s)
            .collect()
    } else {
        let w = 2.0 * std::f64::consts::PI * ch.doppler_hz / rate;
        source
            .samples
            .iter()
            .zip(&states)
            .enumerate()
            .map(|(i, (&s, &st))| {
                let (sin, cos) = (w * i as f64).sin_cos();
                let rot = Complex::new(T::from_f64_lossy(cos), T::from_f64_lossy(sin));
                (h + tag_gain[st.level() as usize] * rot) * s
            })
            .collect()
    };

    if ch.noise_power > 0.0 {
        let mut rng = rng_for(rng_seed, STREAM_NOISE);
        let sigma = T::from_f64_lossy((ch.noise_power / 2.0).sqrt());
        for y in out.iter_mut() {
            y.re += T::standard_normal(&mut rng) * sigma;
            y.im += T::standard_normal(&mut rng) * sigma;
        }
    }

    Ok(IqBuffer {
        samples: out,
        sample_rate: rate,
        center_freq: source.center_freq,
        capture_time: source.capture_time.clone(),
    })
}
