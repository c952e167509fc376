//! Ambient backscatter link toolkit.
//!
//! A tag conveys a fixed 8×11 pixel image by switching its antenna between a
//! short-circuit and an open-circuit load, modulating how much of an ambient
//! TV/4G/5G signal it reflects. This crate covers the whole link:
//!
//! - [`frame`]: pixel image ⇄ 96-bit frame ⇄ 192 FM0 half-symbol levels.
//! - [`source`]: statistical stand-ins for continuous (TV/4G) and bursty
//!   5G-TDD ambient illumination.
//! - [`channel`]: the two-state backscatter channel with receiver noise and
//!   optional Doppler drift on the tag path.
//! - [`detector`]: the non-coherent energy-detector reader (power, low-pass,
//!   decimation, high-pass, moving-average threshold, symbol sampling, FM0
//!   demodulation, sync correlation).
//! - [`eval`]: Monte-Carlo trials, sweeps and a throughput benchmark.
//! - [`capture`] and [`config`]: IQ capture files and the JSON experiment
//!   configuration used by the `ambsc` command-line tool.
//!
//! Signal-domain code is generic over the sample scalar ([`Sample`], i.e.
//! `f32` or `f64`). Physical parameters (seconds, hertz, gains) are always
//! `f64`. The aliases at the crate root pick the common instantiations.

pub mod capture;
pub mod channel;
pub mod config;
pub mod detector;
pub mod error;
pub mod eval;
pub mod frame;
pub mod rng;
mod scalar;
pub mod source;

pub use capture::{CaptureFormat, IqBuffer};
pub use channel::{ChannelParams, Contrast, SwitchWaveform};
pub use detector::{DecodeReport, Decoder, DetectorConfig};
pub use error::{Error, Result};
pub use frame::{Fm0Levels, FrameBits, PixelImage, SwitchState, SyncWord};
pub use num_complex::Complex;
pub use scalar::Sample;
pub use source::{SourceKind, SourceProfile};

/// Single-precision complex sample.
pub type Complex32 = Complex<f32>;
/// Double-precision complex sample.
pub type Complex64 = Complex<f64>;

/// IQ buffer of single-precision samples (the native cf32le capture type).
pub type IqBuffer32 = IqBuffer<f32>;
/// IQ buffer of double-precision samples (used by the simulator and sweeps).
pub type IqBuffer64 = IqBuffer<f64>;

/// Streaming reader in single precision.
pub type Decoder32 = Decoder<f32>;
/// Streaming reader in double precision.
pub type Decoder64 = Decoder<f64>;
