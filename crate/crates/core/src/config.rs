//! JSON experiment configuration.
//!
//! One document with `source`, `channel`, `detector` and `tag` sections.
//! Times and frequencies carry their unit in the field name; complex
//! gains are `[re, im]` pairs.

use std::path::Path;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::detector::{DetectorConfig, ThresholdMode};
use crate::error::{Error, Result};
use crate::eval::{Link, TagParams};
use crate::frame::{PixelImage, SyncWord};
use crate::source::{SourceKind, SourceProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub kind: SourceKind,
    pub mean_power: f64,
    pub tdd_period_ms: f64,
    pub duty_cycle: f64,
    #[serde(default)]
    pub burst_jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub h_direct: Complex<f64>,
    pub g_cascade: Complex<f64>,
    pub refl_connected: Complex<f64>,
    pub refl_disconnected: Complex<f64>,
    pub noise_power: f64,
    #[serde(default)]
    pub doppler_hz: f64,
    /// When set, replaces `noise_power` with the value giving this SNR.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub t1_us: f64,
    pub t2_ms: f64,
    pub f3_hz: f64,
    pub f4_hz: f64,
    pub ta_ms: f64,
    pub ts_ms: f64,
    pub sync_hex: SyncWord,
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub threshold: ThresholdMode,
    pub min_sync_score: f64,
    pub max_frame_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagSection {
    pub ts_ms: f64,
    pub repetitions: usize,
    #[serde(default)]
    pub initial_level: bool,
    /// Image lines in `#`/`.` form; a checkerboard when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PixelImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolkitConfig {
    pub source: SourceSection,
    pub channel: ChannelSection,
    pub detector: DetectorSection,
    pub tag: TagSection,
}

impl ToolkitConfig {
    pub fn tv() -> Self {
        Self::from_link(&Link::tv(PixelImage::checkerboard()))
    }

    pub fn five_g() -> Self {
        Self::from_link(&Link::five_g(PixelImage::checkerboard()))
    }

    pub fn from_link(link: &Link) -> Self {
        let s = &link.source;
        let c = &link.channel;
        let d = &link.detector;
        Self {
            source: SourceSection {
                kind: s.kind,
                mean_power: s.mean_power,
                tdd_period_ms: s.tdd_period * 1e3,
                duty_cycle: s.duty_cycle,
                burst_jitter: s.burst_jitter,
            },
            channel: ChannelSection {
                h_direct: c.h_direct,
                g_cascade: c.g_cascade,
                refl_connected: c.refl_connected,
                refl_disconnected: c.refl_disconnected,
                noise_power: c.noise_power,
                doppler_hz: c.doppler_hz,
                snr_db: None,
            },
            detector: DetectorSection {
                t1_us: d.t1 * 1e6,
                t2_ms: d.t2 * 1e3,
                f3_hz: d.f3,
                f4_hz: d.f4,
                ta_ms: d.ta * 1e3,
                ts_ms: d.ts * 1e3,
                sync_hex: d.sync,
                rows: d.rows,
                cols: d.cols,
                threshold: d.threshold,
                min_sync_score: d.min_sync_score,
                max_frame_violations: d.max_frame_violations,
            },
            tag: TagSection {
                ts_ms: link.tag.ts * 1e3,
                repetitions: link.tag.repetitions,
                initial_level: link.tag.initial_level,
                image: Some(link.image.clone()),
            },
        }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        let d = &self.detector;
        DetectorConfig {
            t1: d.t1_us * 1e-6,
            t2: d.t2_ms * 1e-3,
            f3: d.f3_hz,
            f4: d.f4_hz,
            ta: d.ta_ms * 1e-3,
            ts: d.ts_ms * 1e-3,
            sync: d.sync_hex,
            rows: d.rows,
            cols: d.cols,
            threshold: d.threshold,
            min_sync_score: d.min_sync_score,
            max_frame_violations: d.max_frame_violations,
            keep_traces: false,
        }
    }

    /// Source profile; the seed is supplied by the caller at run time.
    pub fn source_profile(&self, rng_seed: u64) -> SourceProfile {
        let s = &self.source;
        SourceProfile {
            kind: s.kind,
            mean_power: s.mean_power,
            tdd_period: s.tdd_period_ms * 1e-3,
            duty_cycle: s.duty_cycle,
            burst_jitter: s.burst_jitter,
            rng_seed,
        }
    }

    /// Builds the full link. `image` overrides the one in the tag section.
    pub fn to_link(&self, image: Option<PixelImage>) -> Result<Link> {
        let source = self.source_profile(0);
        let c = &self.channel;
        let mut channel = ChannelParams {
            h_direct: c.h_direct,
            g_cascade: c.g_cascade,
            refl_connected: c.refl_connected,
            refl_disconnected: c.refl_disconnected,
            noise_power: c.noise_power,
            doppler_hz: c.doppler_hz,
        };
        if let Some(snr) = c.snr_db {
            channel = channel.with_snr_db(snr, source.mean_power);
        }
        let detector = self.detector_config();
        let image = match image.or_else(|| self.tag.image.clone()) {
            Some(img) => img,
            None if (detector.rows, detector.cols) == (8, 11) => PixelImage::checkerboard(),
            None => PixelImage::blank_with(detector.rows, detector.cols),
        };
        let link = Link {
            source,
            channel,
            detector,
            tag: TagParams {
                ts: self.tag.ts_ms * 1e-3,
                repetitions: self.tag.repetitions,
                initial_level: self.tag.initial_level,
            },
            image,
        };
        link.validate()?;
        Ok(link)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
