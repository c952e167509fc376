//! Non-coherent energy-detector reader.
//!
//! ```text
//! IQ @F1 ─ |x|² ─ LPF(F3) ─ pick every T2 ─ HPF(F4) ─ > moving avg(Ta) ─ pick every Ts ─ FM0 ─ sync ─ image
//! ```
//!
//! The reader never needs to know the ambient waveform, its absolute power,
//! or which switch state reflects more energy: the high-pass and the
//! moving-average threshold remove level and scale, and FM0 decoding is
//! indifferent to polarity.

mod filters;
mod stages;
mod sync;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::capture::IqBuffer;
use crate::error::{Error, Result};
use crate::frame::{SyncWord, DEFAULT_COLS, DEFAULT_ROWS, SYNC_BITS};
use crate::scalar::Sample;
use crate::source::SourceProfile;

pub use filters::{Biquad, DcBlocker, LowPass4};
pub use stages::{
    hpf, lpf_downsample, power_detect, recover_symbols, threshold_binarize, Decimator, SymbolCandidates,
};
pub use sync::{sync_search, DecodeReport, DecodeStatus, DecodedFrame, StageTraces};

/// How the moving-average threshold window sits around each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Window centred on the sample, truncated symmetrically at the edges.
    #[default]
    Centered,
    /// Trailing window ending at the sample.
    Causal,
}

/// Reader parameters. Times in seconds, frequencies in hertz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Input sample period (F1 = 1/t1).
    pub t1: f64,
    /// Decimated sample period (F2 = 1/t2).
    pub t2: f64,
    /// Low-pass cutoff.
    pub f3: f64,
    /// High-pass cutoff.
    pub f4: f64,
    /// Moving-average threshold window.
    pub ta: f64,
    /// Tag switching period (Fs = 1/ts, Fb = 1/(2·ts)).
    pub ts: f64,
    pub sync: SyncWord,
    pub rows: usize,
    pub cols: usize,
    pub threshold: ThresholdMode,
    /// Minimum fraction of sync bits that must match.
    pub min_sync_score: f64,
    /// Most FM0 boundary violations tolerated inside one frame window.
    pub max_frame_violations: usize,
    /// Keep per-stage sample dumps in the report.
    pub keep_traces: bool,
}

impl DetectorConfig {
    /// TV / 4G column of the parameter table.
    pub fn tv_4g() -> Self {
        Self {
            t1: 1e-6,
            t2: 0.5e-3,
            f3: 500.0,
            f4: 50.0,
            ta: 50e-3,
            ts: 2.7e-3,
            sync: SyncWord::default(),
            rows: DEFAULT_ROWS,
            cols: DEFAULT_COLS,
            threshold: ThresholdMode::Centered,
            min_sync_score: 7.0 / 8.0,
            max_frame_violations: 12,
            keep_traces: false,
        }
    }

    /// 5G column; blank cells (t1, t2, ta) taken from the TV / 4G column.
    pub fn five_g() -> Self {
        Self {
            ts: 10.8e-3,
            f3: 100.0,
            f4: 1.0,
            ..Self::tv_4g()
        }
    }

    pub fn f1(&self) -> f64 {
        1.0 / self.t1
    }

    pub fn f2(&self) -> f64 {
        1.0 / self.t2
    }

    /// Tag switching (FM0 half-symbol) rate.
    pub fn fs(&self) -> f64 {
        1.0 / self.ts
    }

    /// Tag bit (pixel) rate.
    pub fn fb(&self) -> f64 {
        1.0 / (2.0 * self.ts)
    }

    pub fn payload_bits(&self) -> usize {
        self.rows * self.cols
    }

    pub fn frame_bits(&self) -> usize {
        self.payload_bits() + SYNC_BITS
    }

    pub fn frame_duration(&self) -> f64 {
        2.0 * self.frame_bits() as f64 * self.ts
    }

    /// Structural checks the pipeline needs before it can run at all;
    /// the parameter-table constraints are reported by [`validate`].
    pub fn check_processable(&self) -> Result<()> {
        for (name, v) in [
            ("t1", self.t1),
            ("t2", self.t2),
            ("f3", self.f3),
            ("f4", self.f4),
            ("ta", self.ta),
            ("ts", self.ts),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} must be positive, got {v}")));
            }
        }
        if self.t2 < self.t1 {
            return Err(Error::param("t2 must not be shorter than t1"));
        }
        if self.ts <= self.t2 {
            return Err(Error::param("ts must exceed t2 (symbols must be oversampled)"));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::param("image dimensions must be nonzero"));
        }
        if !(0.0..=1.0).contains(&self.min_sync_score) {
            return Err(Error::param("min_sync_score must lie in [0, 1]"));
        }
        Ok(())
    }
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::tv_4g()
    }
}

/// One breached parameter constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Violation {
    F3AboveFs { f3: f64, fs: f64 },
    F4BelowFb { f4: f64, fb: f64 },
    F1AboveFs { f1: f64, fs: f64 },
    F2AboveFs { f2: f64, fs: f64 },
    TaMuchLongerThanTs { ta: f64, min_ta: f64 },
    TsAboveTdd { ts: f64, tdd_period: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::F3AboveFs { f3, fs } => write!(f, "F3 > Fs violated: F3 = {f3} Hz, Fs = {fs:.2} Hz"),
            Violation::F4BelowFb { f4, fb } => write!(f, "F4 < Fb violated: F4 = {f4} Hz, Fb = {fb:.2} Hz"),
            Violation::F1AboveFs { f1, fs } => write!(f, "F1 > Fs violated: F1 = {f1} Hz, Fs = {fs:.2} Hz"),
            Violation::F2AboveFs { f2, fs } => write!(f, "F2 > Fs violated: F2 = {f2} Hz, Fs = {fs:.2} Hz"),
            Violation::TaMuchLongerThanTs { ta, min_ta } => write!(
                f,
                "Ta >> Ts violated: Ta = {:.3} ms, need at least 4 Ts = {:.3} ms",
                ta * 1e3,
                min_ta * 1e3
            ),
            Violation::TsAboveTdd { ts, tdd_period } => write!(
                f,
                "Ts > T_5G violated: Ts = {:.3} ms, TDD frame = {:.3} ms",
                ts * 1e3,
                tdd_period * 1e3
            ),
        }
    }
}

/// Minimum Ta / Ts ratio accepted as "Ta much longer than Ts".
pub const MIN_TA_OVER_TS: f64 = 4.0;

/// Checks the parameter-table constraints for a reader against its source.
pub fn validate(cfg: &DetectorConfig, profile: &SourceProfile) -> std::result::Result<(), Vec<Violation>> {
    let fs = cfg.fs();
    let fb = cfg.fb();
    let mut v = Vec::new();
    if !(cfg.f3 > fs) {
        v.push(Violation::F3AboveFs { f3: cfg.f3, fs });
    }
    if !(cfg.f4 < fb) {
        v.push(Violation::F4BelowFb { f4: cfg.f4, fb });
    }
    if !(cfg.f1() > fs) {
        v.push(Violation::F1AboveFs { f1: cfg.f1(), fs });
    }
    if !(cfg.f2() > fs) {
        v.push(Violation::F2AboveFs { f2: cfg.f2(), fs });
    }
    let min_ta = MIN_TA_OVER_TS * cfg.ts;
    if !(cfg.ta >= min_ta * (1.0 - 1e-12)) {
        v.push(Violation::TaMuchLongerThanTs { ta: cfg.ta, min_ta });
    }
    if profile.is_tdd() && !(cfg.ts > profile.tdd_period) {
        v.push(Violation::TsAboveTdd {
            ts: cfg.ts,
            tdd_period: profile.tdd_period,
        });
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Streaming reader: feed IQ chunks with [`Decoder::push`], then call
/// [`Decoder::finish`]. Only the decimated stream (F2 rate) is retained.
pub struct Decoder<T> {
    cfg: DetectorConfig,
    front: stages::FrontEnd<T>,
}

impl<T: Sample> Decoder<T> {
    pub fn new(cfg: &DetectorConfig) -> Result<Self> {
        cfg.check_processable()?;
        Ok(Self {
            front: stages::FrontEnd::new(cfg)?,
            cfg: cfg.clone(),
        })
    }

    pub fn push(&mut self, samples: &[num_complex::Complex<T>]) {
        self.front.push(samples);
    }

    pub fn samples_seen(&self) -> u64 {
        self.front.samples_seen()
    }

    pub fn finish(self) -> Result<DecodeReport> {
        let (hp, traces) = self.front.finish();
        let binary = threshold_binarize(&hp, self.cfg.f2(), self.cfg.ta, self.cfg.threshold);
        let candidates = recover_symbols(&binary, self.cfg.t2, self.cfg.ts, self.cfg.frame_bits());
        let mut report = sync_search(&candidates, &self.cfg);
        if let Some(mut t) = traces {
            t.binary = binary;
            report.stage_traces = Some(t);
        }
        Ok(report)
    }
}

/// Decodes a whole buffer. The buffer's sample rate must equal 1/t1.
pub fn decode<T: Sample>(iq: &IqBuffer<T>, cfg: &DetectorConfig) -> Result<DecodeReport> {
    let expected = cfg.f1();
    if ((iq.sample_rate - expected) / expected).abs() > 1e-9 {
        return Err(Error::SampleRateMismatch {
            expected_hz: expected,
            got_hz: iq.sample_rate,
        });
    }
    if iq.is_empty() {
        return Err(Error::param("cannot decode an empty buffer"));
    }
    let mut dec = Decoder::new(cfg)?;
    dec.push(&iq.samples);
    dec.finish()
}
