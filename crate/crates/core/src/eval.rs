//! Monte-Carlo link evaluation.
//!
//! A trial runs one complete simulated transmission: ambient source,
//! two-state channel, reader. Sweeps repeat trials over a grid of one
//! parameter and aggregate exact counts; trial seeds are derived from
//! `(base seed, grid index, trial index)` so results do not depend on
//! evaluation order or thread count.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{apply, ChannelParams, SwitchWaveform};
use crate::detector::{decode, DecodeReport, DetectorConfig};
use crate::error::{Error, Result};
use crate::frame::{fm0_encode_repeated, FrameBits, PixelImage};
use crate::rng::{derive_seed, rng_for};
use crate::scalar::Sample;
use crate::source::{generate, SourceProfile};

const STREAM_TRIAL: u64 = 10;
const STREAM_SOURCE: u64 = 11;
const STREAM_CHANNEL: u64 = 12;

/// How the SNR axis is defined; echoed into sweep outputs.
pub const SNR_DEFINITION: &str =
    "10*log10(|P_open - P_short| / noise_power), per-sample at F1, with P_state = |h_direct + g_cascade*refl_state|^2 * source mean_power";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagParams {
    /// Switching period in seconds.
    pub ts: f64,
    /// Whole frames sent back to back; at least 2.
    pub repetitions: usize,
    pub initial_level: bool,
}

/// Everything needed to simulate and decode one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub source: SourceProfile,
    pub channel: ChannelParams,
    pub detector: DetectorConfig,
    pub tag: TagParams,
    pub image: PixelImage,
}

impl Link {
    /// TV/4G reader parameters, default channel (contrast 1.21, noiseless).
    pub fn tv(image: PixelImage) -> Self {
        let detector = DetectorConfig::tv_4g();
        Self {
            source: SourceProfile::tv(0),
            channel: ChannelParams::default(),
            tag: TagParams {
                ts: detector.ts,
                repetitions: 2,
                initial_level: false,
            },
            detector,
            image,
        }
    }

    /// 5G reader parameters over a 1 ms, 70 % duty TDD source.
    pub fn five_g(image: PixelImage) -> Self {
        let detector = DetectorConfig::five_g();
        Self {
            source: SourceProfile::five_g_tdd(0),
            tag: TagParams {
                ts: detector.ts,
                repetitions: 2,
                initial_level: false,
            },
            detector,
            ..Self::tv(image)
        }
    }

    /// Sets the channel noise for a state-gap-to-noise ratio in dB.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.channel = self.channel.with_snr_db(snr_db, self.source.mean_power);
        self
    }

    /// Uses the same switching period at the tag and the reader.
    pub fn with_ts(mut self, ts: f64) -> Self {
        self.tag.ts = ts;
        self.detector.ts = ts;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.channel.validate()?;
        self.detector.check_processable()?;
        if self.tag.repetitions < 2 {
            return Err(Error::param("a trial needs at least 2 frame repetitions"));
        }
        if !(self.tag.ts > 0.0 && self.tag.ts.is_finite()) {
            return Err(Error::param("tag ts must be positive"));
        }
        if (self.image.rows(), self.image.cols()) != (self.detector.rows, self.detector.cols) {
            return Err(Error::param("image dimensions differ from the detector's"));
        }
        Ok(())
    }
}

/// A transmission laid out in time, ready to pass through the channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagPlan {
    pub waveform: SwitchWaveform,
    pub duration: f64,
    /// Start time of every transmitted sync word.
    pub sync_starts: Vec<f64>,
}

/// Places the tag's repetitions inside a buffer with a random lead-in.
pub fn plan_transmission(link: &Link, seed: u64) -> Result<TagPlan> {
    let ts = link.tag.ts;
    let frame = FrameBits::from_image(&link.image, link.detector.sync)?;
    let levels = fm0_encode_repeated(&frame, link.tag.repetitions, link.tag.initial_level);
    let mut rng = rng_for(seed, STREAM_TRIAL);
    let lead = 2.0 * ts + rng.random_range(0.0..2.0 * ts);
    let tail = (link.detector.ta / 2.0).max(4.0 * ts) + 4.0 * ts;
    let waveform = SwitchWaveform::new(levels, ts, lead)?;
    let duration = waveform.end() + tail;
    let frame_levels = 2 * frame.bits().len();
    let payload_levels = 2 * frame.payload().len();
    let sync_starts = (0..link.tag.repetitions)
        .map(|r| lead + ((r * frame_levels + payload_levels) as f64) * ts)
        .collect();
    Ok(TagPlan {
        waveform,
        duration,
        sync_starts,
    })
}

/// Source plus channel for one trial; the received buffer the reader sees.
pub fn simulate<T: Sample>(link: &Link, seed: u64) -> Result<(crate::capture::IqBuffer<T>, TagPlan)> {
    link.validate()?;
    let plan = plan_transmission(link, seed)?;
    let mut source = link.source.clone();
    source.rng_seed = derive_seed(seed, STREAM_SOURCE, 0);
    let ambient = generate::<T>(&source, plan.duration, link.detector.f1())?;
    let rx = apply(&ambient, &plan.waveform, &link.channel, derive_seed(seed, STREAM_CHANNEL, 0))?;
    Ok((rx, plan))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub detected: bool,
    /// Payload bit errors of the first decoded frame; 0 when missed.
    pub bit_errors: usize,
    /// Wrong pixels counting a missed frame as entirely wrong.
    pub pixel_errors: usize,
    pub payload_bits: usize,
    pub score: f64,
}

pub fn score_report(link: &Link, report: &DecodeReport) -> TrialOutcome {
    let payload_bits = link.detector.payload_bits();
    match report.first_image() {
        Some(img) => {
            let errors = img.pixel_errors(&link.image);
            TrialOutcome {
                detected: true,
                bit_errors: errors,
                pixel_errors: errors,
                payload_bits,
                score: report.frames[0].score,
            }
        }
        None => TrialOutcome {
            detected: false,
            bit_errors: 0,
            pixel_errors: payload_bits,
            payload_bits,
            score: 0.0,
        },
    }
}

/// One full simulated transmission, decoded and scored. Deterministic per seed.
pub fn run_trial<T: Sample>(link: &Link, seed: u64) -> Result<TrialOutcome> {
    let (rx, _) = simulate::<T>(link, seed)?;
    let report = decode(&rx, &link.detector)?;
    Ok(score_report(link, &report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SnrDb,
    ContrastDb,
    DopplerHz,
    /// Tag switching period in seconds (tag and reader together).
    Ts,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::ContrastDb => "contrast_db",
            SweepAxis::DopplerHz => "doppler_hz",
            SweepAxis::Ts => "ts",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub trials_per_point: usize,
    pub base: Link,
    pub rng_seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::param("sweep grid is empty"));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("sweep grid has non-finite values"));
        }
        let up = self.grid.windows(2).all(|w| w[1] > w[0]);
        let down = self.grid.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) {
            return Err(Error::param("sweep grid must be strictly monotonic"));
        }
        if self.trials_per_point == 0 {
            return Err(Error::param("trials_per_point must be at least 1"));
        }
        self.base.validate()
    }

    /// The base link with the swept parameter set to `value`.
    pub fn link_at(&self, value: f64) -> Result<Link> {
        let mut link = self.base.clone();
        match self.axis {
            SweepAxis::SnrDb => link = link.with_snr_db(value),
            SweepAxis::ContrastDb => link.channel = link.channel.with_contrast(10f64.powf(value / 10.0))?,
            SweepAxis::DopplerHz => link.channel.doppler_hz = value,
            SweepAxis::Ts => link = link.with_ts(value),
        }
        Ok(link)
    }
}

/// Exact counts for one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub trials: usize,
    pub detected: usize,
    pub missed: usize,
    pub bit_errors: usize,
    /// Payload bits compared over detected trials.
    pub bits_compared: usize,
    pub pixel_errors: usize,
    pub pixels_total: usize,
    pub score_sum: f64,
}

impl SweepPoint {
    fn new(value: f64) -> Self {
        Self {
            value,
            trials: 0,
            detected: 0,
            missed: 0,
            bit_errors: 0,
            bits_compared: 0,
            pixel_errors: 0,
            pixels_total: 0,
            score_sum: 0.0,
        }
    }

    fn add(&mut self, t: &TrialOutcome) {
        self.trials += 1;
        if t.detected {
            self.detected += 1;
            self.bit_errors += t.bit_errors;
            self.bits_compared += t.payload_bits;
            self.score_sum += t.score;
        } else {
            self.missed += 1;
        }
        self.pixel_errors += t.pixel_errors;
        self.pixels_total += t.payload_bits;
    }

    /// Bit error rate over detected frames (0 when nothing was detected).
    pub fn bit_error_rate(&self) -> f64 {
        ratio(self.bit_errors, self.bits_compared)
    }

    /// Pixel error rate over all trials; a missed frame counts every pixel wrong.
    pub fn pixel_error_rate(&self) -> f64 {
        ratio(self.pixel_errors, self.pixels_total)
    }

    pub fn frame_detection_rate(&self) -> f64 {
        ratio(self.detected, self.trials)
    }

    pub fn mean_score(&self) -> f64 {
        if self.detected == 0 {
            0.0
        } else {
            self.score_sum / self.detected as f64
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub trials_per_point: usize,
    pub rng_seed: u64,
    pub snr_definition: String,
    pub points: Vec<SweepPoint>,
    pub base: Link,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},ber,per,fdr,mean_score,trials\n", self.axis.name());
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                p.value,
                p.bit_error_rate(),
                p.pixel_error_rate(),
                p.frame_detection_rate(),
                p.mean_score(),
                p.trials
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs every trial of the sweep (in parallel) and aggregates in grid/trial
/// order, so the result is identical to a sequential run.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let links: Vec<Link> = spec.grid.iter().map(|&v| spec.link_at(v)).collect::<Result<_>>()?;
    let n = spec.trials_per_point;
    let outcomes: Vec<TrialOutcome> = (0..links.len() * n)
        .into_par_iter()
        .map(|job| {
            let (point, trial) = (job / n, job % n);
            run_trial::<f64>(&links[point], derive_seed(spec.rng_seed, point as u64, trial as u64))
        })
        .collect::<Result<_>>()?;
    let points = spec
        .grid
        .iter()
        .zip(outcomes.chunks(n))
        .map(|(&value, trials)| {
            let mut p = SweepPoint::new(value);
            trials.iter().for_each(|t| p.add(t));
            p
        })
        .collect();
    Ok(SweepResult {
        axis: spec.axis,
        trials_per_point: n,
        rng_seed: spec.rng_seed,
        snr_definition: SNR_DEFINITION.to_string(),
        points,
        base: spec.base.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub samples: usize,
    pub seconds: f64,
    pub samples_per_sec: f64,
    pub realtime_factor: f64,
}

/// Times `decode` over a pre-generated TV-link buffer of `duration` seconds.
pub fn bench_throughput<T: Sample>(duration: f64) -> Result<BenchReport> {
    if !(duration >= 1.0) {
        return Err(Error::param("benchmark duration must be at least 1 s"));
    }
    let mut link = Link::tv(PixelImage::checkerboard());
    let frame_time = link.detector.frame_duration();
    link.tag.repetitions = ((duration / frame_time).floor() as usize).saturating_sub(1).max(2);
    link.channel = link.channel.with_snr_db(10.0, 1.0);
    let plan = plan_transmission(&link, 1)?;
    let mut source = link.source.clone();
    source.rng_seed = 1;
    let ambient = generate::<T>(&source, duration.max(plan.duration), link.detector.f1())?;
    let rx = apply(&ambient, &plan.waveform, &link.channel, 2)?;
    bench_decode(&rx, &link.detector)
}

/// Times one decode of an existing buffer.
pub fn bench_decode<T: Sample>(rx: &crate::capture::IqBuffer<T>, cfg: &DetectorConfig) -> Result<BenchReport> {
    let start = Instant::now();
    let report = decode(rx, cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    std::hint::black_box(report);
    let samples_per_sec = rx.len() as f64 / seconds;
    Ok(BenchReport {
        samples: rx.len(),
        seconds,
        samples_per_sec,
        realtime_factor: samples_per_sec / rx.sample_rate,
    })
}
