use num_complex::Complex;

use super::filters::{DcBlocker, LowPass4};
use super::sync::StageTraces;
use super::{DetectorConfig, ThresholdMode};
use crate::capture::IqBuffer;
use crate::error::{Error, Result};
use crate::scalar::Sample;

/// |x|² per sample.
pub fn power_detect<T: Sample>(iq: &IqBuffer<T>) -> Vec<T> {
    iq.samples.iter().map(|s| s.norm_sqr()).collect()
}

/// Low-pass filter followed by nearest-sample decimation: output `m` is the
/// filtered input at index `round(m · t2 · F1)`. Keeps state across calls.
#[derive(Debug, Clone)]
pub struct Decimator<T> {
    lpf: LowPass4<T>,
    ratio: f64,
    seen: u64,
    emitted: u64,
    next_pick: u64,
}

impl<T: Sample> Decimator<T> {
    pub fn new(f1: f64, f3: f64, t2: f64) -> Result<Self> {
        let ratio = t2 * f1;
        if !(ratio >= 1.0 && ratio.is_finite()) {
            return Err(Error::param(format!(
                "decimation period t2 = {t2} s is shorter than one input sample at {f1} Hz"
            )));
        }
        Ok(Self {
            lpf: LowPass4::new(f3, f1)?,
            ratio,
            seen: 0,
            emitted: 0,
            next_pick: 0,
        })
    }

    /// Filters one input sample; returns the filtered value when this sample
    /// is a decimation instant.
    #[inline]
    pub fn step(&mut self, x: T) -> Option<T> {
        if self.seen == 0 {
            self.lpf.settle(x);
        }
        let y = self.lpf.process(x);
        let picked = if self.seen == self.next_pick {
            self.emitted += 1;
            self.next_pick = (self.emitted as f64 * self.ratio).round() as u64;
            Some(y)
        } else {
            None
        };
        self.seen += 1;
        picked
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }
}

/// Low-pass at `f3` then decimate to period `t2`.
pub fn lpf_downsample<T: Sample>(power: &[T], f1: f64, f3: f64, t2: f64) -> Result<Vec<T>> {
    let mut dec = Decimator::new(f1, f3, t2)?;
    Ok(power.iter().filter_map(|&x| dec.step(x)).collect())
}

/// First-order high-pass at `f4` on a stream sampled at `f2`. The filter
/// starts settled on the first sample, so a constant input yields zeros.
pub fn hpf<T: Sample>(stream: &[T], f2: f64, f4: f64) -> Result<Vec<T>> {
    let mut hp = DcBlocker::new(f4, f2)?;
    if let Some(&first) = stream.first() {
        hp.settle(first);
    }
    Ok(stream.iter().map(|&x| hp.process(x)).collect())
}

/// `out[n] = stream[n] > moving average around n`.
///
/// The window spans `round(ta · f2)` samples. Values within a relative
/// 1e-9 of the local mean count as ties and binarize to 0, so a constant
/// stream gives all zeros despite prefix-sum rounding.
pub fn threshold_binarize<T: Sample>(stream: &[T], f2: f64, ta: f64, mode: ThresholdMode) -> Vec<bool> {
    let n = stream.len();
    let window = ((ta * f2).round() as usize).max(1);
    let half = window / 2;
    let mut sum = Vec::with_capacity(n + 1);
    let mut abs_sum = Vec::with_capacity(n + 1);
    sum.push(0.0f64);
    abs_sum.push(0.0f64);
    for &x in stream {
        let v = x.to_f64_lossy();
        sum.push(sum.last().unwrap() + v);
        abs_sum.push(abs_sum.last().unwrap() + v.abs());
    }
    (0..n)
        .map(|i| {
            let (lo, hi) = match mode {
                ThresholdMode::Centered => {
                    let h = half.min(i).min(n - 1 - i);
                    (i - h, i + h + 1)
                }
                ThresholdMode::Causal => (i + 1 - window.min(i + 1), i + 1),
            };
            let count = (hi - lo) as f64;
            let mean = (sum[hi] - sum[lo]) / count;
            let scale = (abs_sum[hi] - abs_sum[lo]) / count;
            stream[i].to_f64_lossy() - mean > 1e-9 * scale
        })
        .collect()
}

/// Symbol-rate level sequences for every candidate timing offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolCandidates {
    /// Decimated samples per tag symbol (ts / t2), possibly fractional.
    pub ratio: f64,
    pub t2: f64,
    /// `levels[o][k] = binary[round(o + k · ratio)]`.
    pub levels: Vec<Vec<bool>>,
    /// Set when the stream cannot hold a single frame.
    pub too_short: bool,
}

/// Samples the binary stream once per tag symbol at every offset on the
/// `t2` grid across `[0, 2·ts)`. Indices are rounded from exact real-valued
/// positions, so fractional `ts / t2` ratios never accumulate drift.
pub fn recover_symbols(binary: &[bool], t2: f64, ts: f64, frame_bits: usize) -> SymbolCandidates {
    let ratio = ts / t2;
    let needed = 2.0 * frame_bits as f64 * ratio;
    if (binary.len() as f64) < needed || binary.is_empty() {
        return SymbolCandidates {
            ratio,
            t2,
            levels: Vec::new(),
            too_short: true,
        };
    }
    let offsets = (2.0 * ratio - 1e-9).ceil() as usize;
    let levels = (0..offsets)
        .map(|o| {
            (0..)
                .map(|k| (o as f64 + k as f64 * ratio).round() as usize)
                .take_while(|&i| i < binary.len())
                .map(|i| binary[i])
                .collect()
        })
        .collect();
    SymbolCandidates {
        ratio,
        t2,
        levels,
        too_short: false,
    }
}

/// Sample-by-sample part of the reader: power, LPF, decimation and HPF.
pub(super) struct FrontEnd<T> {
    decim: Decimator<T>,
    hpf: DcBlocker<T>,
    hp_out: Vec<T>,
    traces: Option<StageTraces>,
}

impl<T: Sample> FrontEnd<T> {
    pub(super) fn new(cfg: &DetectorConfig) -> Result<Self> {
        Ok(Self {
            decim: Decimator::new(cfg.f1(), cfg.f3, cfg.t2)?,
            hpf: DcBlocker::new(cfg.f4, cfg.f2())?,
            hp_out: Vec::new(),
            traces: cfg.keep_traces.then(|| StageTraces::new(cfg.t2)),
        })
    }

    pub(super) fn push(&mut self, samples: &[Complex<T>]) {
        for s in samples {
            let p = s.norm_sqr();
            if let Some(lp) = self.decim.step(p) {
                if self.hp_out.is_empty() {
                    self.hpf.settle(lp);
                }
                let hp = self.hpf.process(lp);
                self.hp_out.push(hp);
                if let Some(t) = self.traces.as_mut() {
                    t.power.push(p.to_f64_lossy());
                    t.lpf.push(lp.to_f64_lossy());
                    t.hpf.push(hp.to_f64_lossy());
                }
            }
        }
    }

    pub(super) fn samples_seen(&self) -> u64 {
        self.decim.seen()
    }

    pub(super) fn finish(self) -> (Vec<T>, Option<StageTraces>) {
        (self.hp_out, self.traces)
    }
}
