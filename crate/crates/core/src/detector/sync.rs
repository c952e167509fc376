//! Frame synchronization and the decode report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stages::SymbolCandidates;
use super::DetectorConfig;
use crate::frame::{bits_to_image, fm0_decode, PixelImage, SyncWord, SYNC_BITS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeStatus {
    Decoded,
    NoSyncFound,
    /// Sync located, but no complete frame follows it.
    NoCompleteFrame,
    /// The stream cannot hold a single frame.
    TooShort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedFrame {
    pub image: PixelImage,
    /// Fraction of sync bits matched, in [0, 1].
    pub score: f64,
    /// Estimated start of the sync word in the input, seconds.
    pub timing_offset_s: f64,
    /// FM0 boundary violations inside this frame's window.
    pub fm0_violations: usize,
    /// Index of the sync's first bit in `symbol_stream`.
    pub bit_index: usize,
}

/// Per-stage samples at the decimated rate. The power column holds the raw
/// |x|² value at each decimation instant.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTraces {
    pub t2: f64,
    pub power: Vec<f64>,
    pub lpf: Vec<f64>,
    pub hpf: Vec<f64>,
    pub binary: Vec<bool>,
}

impl StageTraces {
    pub(super) fn new(t2: f64) -> Self {
        Self {
            t2,
            ..Default::default()
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,power,lpf,hpf,binary\n");
        for i in 0..self.lpf.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                i as f64 * self.t2,
                self.power[i],
                self.lpf[i],
                self.hpf[i],
                self.binary.get(i).map_or(0, |&b| b as u8)
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeReport {
    pub status: DecodeStatus,
    pub sync: SyncWord,
    pub frames: Vec<DecodedFrame>,
    /// Best sync score among frame windows that passed the FM0 gate.
    pub best_score: f64,
    /// Chosen symbol timing offset, seconds from the start of the input.
    pub chosen_offset_s: Option<f64>,
    /// Demodulated bits at the chosen timing offset.
    pub symbol_stream: Vec<bool>,
    /// FM0 boundary violations across `symbol_stream`.
    pub fm0_violations: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub stage_traces: Option<StageTraces>,
}

impl DecodeReport {
    fn empty(status: DecodeStatus, sync: SyncWord) -> Self {
        Self {
            status,
            sync,
            frames: Vec::new(),
            best_score: 0.0,
            chosen_offset_s: None,
            symbol_stream: Vec::new(),
            fm0_violations: 0,
            stage_traces: None,
        }
    }

    pub fn is_decoded(&self) -> bool {
        self.status == DecodeStatus::Decoded
    }

    pub fn first_image(&self) -> Option<&PixelImage> {
        self.frames.first().map(|f| &f.image)
    }

    /// Equality ignoring stage traces.
    pub fn same_decode(&self, other: &Self) -> bool {
        let strip = |r: &Self| Self {
            stage_traces: None,
            ..r.clone()
        };
        strip(self) == strip(other)
    }
}

/// One timing candidate after FM0 demodulation.
struct Demodulated {
    bits: Vec<bool>,
    /// `violation_before[k]`: missing transition between bit k−1 and bit k.
    violation_prefix: Vec<usize>,
    total_violations: usize,
}

impl Demodulated {
    fn new(levels: &[bool]) -> Self {
        let even = &levels[..levels.len() & !1];
        let decoded = fm0_decode(even).expect("even length");
        let mut violation_prefix = Vec::with_capacity(decoded.bits.len() + 1);
        violation_prefix.push(0);
        for k in 0..decoded.bits.len() {
            let v = k > 0 && even[2 * k - 1] == even[2 * k];
            violation_prefix.push(violation_prefix[k] + v as usize);
        }
        Self {
            bits: decoded.bits,
            violation_prefix,
            total_violations: decoded.violations,
        }
    }

    /// Violations at every boundary entering bits `start..start+len`,
    /// including the one before `start` when it exists.
    fn window_violations(&self, start: usize, len: usize) -> usize {
        self.violation_prefix[start + len] - self.violation_prefix[start]
    }
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    offset: usize,
    bit: usize,
    matches: usize,
    violations: usize,
    /// End of the sync word, seconds.
    end_time: f64,
}

/// Locates the sync word across all timing candidates and extracts every
/// complete frame that follows one.
///
/// A sync occurrence is eligible only if the frame it terminates (the 88
/// payload bits before it) or the frame it starts (the 88 bits after it)
/// passes the FM0 gate of `cfg.max_frame_violations`. A correct alignment of
/// a real tag signal has almost no violations while random bits violate half
/// the boundaries, which is what keeps noise from producing frames.
///
/// The best sync score wins. Among equally good occurrences the latest one
/// fixes the frame phase: a transmission always ends with a sync word,
/// whereas a payload that happens to contain the sync pattern can only do so
/// before the final sync. Neighbouring timing offsets that see the same sync
/// resolve to the fewest violations, then the middle offset.
pub fn sync_search(candidates: &SymbolCandidates, cfg: &DetectorConfig) -> DecodeReport {
    if candidates.too_short || candidates.levels.is_empty() {
        return DecodeReport::empty(DecodeStatus::TooShort, cfg.sync);
    }
    let frame_bits = cfg.frame_bits();
    let payload_bits = cfg.payload_bits();
    let demod: Vec<Demodulated> = candidates.levels.iter().map(|l| Demodulated::new(l)).collect();

    let level_time = |offset: usize, level: usize| {
        (offset as f64 + level as f64 * candidates.ratio).round() * candidates.t2
    };

    let mut hits: Vec<Hit> = Vec::new();
    for (offset, d) in demod.iter().enumerate() {
        let n = d.bits.len();
        if n < frame_bits {
            continue;
        }
        for bit in 0..=n - SYNC_BITS {
            let following = (bit + frame_bits <= n).then(|| d.window_violations(bit, frame_bits));
            let preceding = (bit >= payload_bits).then(|| d.window_violations(bit - payload_bits, frame_bits));
            let Some(violations) = following.into_iter().chain(preceding).min() else {
                continue;
            };
            if violations > cfg.max_frame_violations {
                continue;
            }
            hits.push(Hit {
                offset,
                bit,
                matches: cfg.sync.match_count(&d.bits[bit..bit + SYNC_BITS]),
                violations,
                end_time: level_time(offset, 2 * (bit + SYNC_BITS)),
            });
        }
    }

    let Some(top) = hits.iter().map(|h| h.matches).max() else {
        return DecodeReport::empty(DecodeStatus::NoSyncFound, cfg.sync);
    };
    let mut report = DecodeReport::empty(DecodeStatus::NoSyncFound, cfg.sync);
    report.best_score = top as f64 / SYNC_BITS as f64;
    if report.best_score < cfg.min_sync_score {
        return report;
    }

    let mut tied: Vec<Hit> = hits.into_iter().filter(|h| h.matches == top).collect();
    tied.sort_by(|a, b| b.end_time.total_cmp(&a.end_time));
    let last = tied[0].end_time;
    let mut cluster: Vec<Hit> = tied
        .into_iter()
        .take_while(|h| last - h.end_time < cfg.ts)
        .collect();
    let fewest = cluster.iter().map(|h| h.violations).min().expect("nonempty");
    cluster.retain(|h| h.violations == fewest);
    cluster.sort_by_key(|h| h.offset);
    let chosen = cluster[cluster.len() / 2];

    let d = &demod[chosen.offset];
    let mut bit = chosen.bit % frame_bits;
    while bit + frame_bits <= d.bits.len() {
        let score = cfg.sync.match_score(&d.bits[bit..bit + SYNC_BITS]);
        let violations = d.window_violations(bit, frame_bits);
        if score >= cfg.min_sync_score && violations <= cfg.max_frame_violations {
            let payload = &d.bits[bit + SYNC_BITS..bit + SYNC_BITS + payload_bits];
            let image = bits_to_image(payload, cfg.rows, cfg.cols).expect("payload length");
            report.frames.push(DecodedFrame {
                image,
                score,
                timing_offset_s: level_time(chosen.offset, 2 * bit) - cfg.ts / 2.0,
                fm0_violations: violations,
                bit_index: bit,
            });
        }
        bit += frame_bits;
    }

    report.chosen_offset_s = Some(chosen.offset as f64 * candidates.t2);
    report.symbol_stream = d.bits.clone();
    report.fm0_violations = d.total_violations;
    report.status = if report.frames.is_empty() {
        DecodeStatus::NoCompleteFrame
    } else {
        DecodeStatus::Decoded
    };
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::{fm0_encode_repeated, FrameBits, DEFAULT_SYNC};

    fn candidates_from_levels(levels: Vec<bool>) -> SymbolCandidates {
        SymbolCandidates {
            ratio: 5.4,
            t2: 0.5e-3,
            levels: vec![levels],
            too_short: false,
        }
    }

    #[test]
    fn finds_frames_in_clean_level_stream() {
        let img = PixelImage::checkerboard();
        let frame = FrameBits::from_image(&img, DEFAULT_SYNC).unwrap();
        let levels = fm0_encode_repeated(&frame, 3, false).levels;
        let report = sync_search(&candidates_from_levels(levels), &DetectorConfig::tv_4g());
        assert!(report.is_decoded());
        assert_eq!(report.frames.len(), 2);
        for f in &report.frames {
            assert_eq!(f.image, img);
            assert_eq!(f.score, 1.0);
            assert_eq!(f.fm0_violations, 0);
        }
        assert_eq!(report.frames[0].bit_index, 88);
    }

    #[test]
    fn polarity_flip_decodes_identically() {
        let img = PixelImage::checkerboard();
        let frame = FrameBits::from_image(&img, DEFAULT_SYNC).unwrap();
        let levels = fm0_encode_repeated(&frame, 2, true).levels;
        let flipped: Vec<bool> = levels.iter().map(|b| !b).collect();
        let a = sync_search(&candidates_from_levels(levels), &DetectorConfig::tv_4g());
        let b = sync_search(&candidates_from_levels(flipped), &DetectorConfig::tv_4g());
        assert!(a.is_decoded());
        assert_eq!(a.symbol_stream, b.symbol_stream);
        assert_eq!(a.frames, b.frames);
    }

    #[test]
    fn random_levels_find_no_sync() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut false_alarms = 0;
        for _ in 0..100 {
            let levels: Vec<Vec<bool>> = (0..11).map(|_| (0..600).map(|_| rng.random()).collect()).collect();
            let c = SymbolCandidates {
                ratio: 5.4,
                t2: 0.5e-3,
                levels,
                too_short: false,
            };
            if sync_search(&c, &DetectorConfig::tv_4g()).is_decoded() {
                false_alarms += 1;
            }
        }
        assert_eq!(false_alarms, 0);
    }

    #[test]
    fn too_short_input() {
        let c = SymbolCandidates {
            ratio: 5.4,
            t2: 0.5e-3,
            levels: vec![],
            too_short: true,
        };
        assert_eq!(sync_search(&c, &DetectorConfig::tv_4g()).status, DecodeStatus::TooShort);
    }

    #[test]
    fn one_sync_bit_error_is_tolerated() {
        let img = PixelImage::checkerboard();
        let frame = FrameBits::from_image(&img, DEFAULT_SYNC).unwrap();
        let mut bits = frame.bits();
        bits.extend(frame.bits());
        bits[88 + 3] = !bits[88 + 3];
        let levels = crate::frame::fm0_encode(&bits, false).levels;
        let report = sync_search(&candidates_from_levels(levels), &DetectorConfig::tv_4g());
        assert!(report.is_decoded());
        assert_eq!(report.frames[0].score, 7.0 / 8.0);
        assert_eq!(report.frames[0].image, img);
    }

    #[test]
    fn traces_csv_has_header_and_rows() {
        let t = StageTraces {
            t2: 0.5e-3,
            power: vec![1.0, 2.0],
            lpf: vec![1.0, 1.5],
            hpf: vec![0.0, 0.5],
            binary: vec![false, true],
        };
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "time_s,power,lpf,hpf,binary");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].ends_with(",1"));
    }
}
