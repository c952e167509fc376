//! End-to-end simulate → decode checks.

use backscatter::capture::{read_capture, write_capture, CaptureFormat};
use backscatter::detector::{decode, DecodeStatus, Decoder};
use backscatter::eval::{run_trial, simulate, Link};
use backscatter::frame::PixelImage;
use backscatter::{Complex, DetectorConfig};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_image(seed: u64) -> PixelImage {
    PixelImage::random(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn strong_tv(image: PixelImage) -> Link {
    let mut link = Link::tv(image);
    link.channel = link.channel.with_contrast(2.0).unwrap();
    link
}

#[test]
fn tv_noiseless_strong_contrast_is_exact() {
    for seed in 0..8 {
        let link = strong_tv(random_image(seed));
        let (rx, _) = simulate::<f64>(&link, seed).unwrap();
        let report = decode(&rx, &link.detector).unwrap();
        assert_eq!(report.status, DecodeStatus::Decoded, "seed {seed}");
        assert_eq!(report.first_image(), Some(&link.image), "seed {seed}");
        assert_eq!(report.frames[0].score, 1.0);
    }
}

#[test]
fn single_precision_decodes_like_double() {
    for seed in 0..4 {
        let link = strong_tv(random_image(100 + seed));
        let (rx, _) = simulate::<f32>(&link, seed).unwrap();
        let report = decode(&rx, &link.detector).unwrap();
        assert_eq!(report.first_image(), Some(&link.image), "seed {seed}");
    }
}

#[test]
fn five_g_with_noise_decodes() {
    for seed in 0..3 {
        let mut link = Link::five_g(random_image(200 + seed));
        link.channel = link.channel.with_contrast(1.2).unwrap();
        let link = link.with_snr_db(10.0);
        let t = run_trial::<f64>(&link, seed).unwrap();
        assert!(t.detected, "seed {seed}");
        assert_eq!(t.bit_errors, 0, "seed {seed}");
    }
}

#[test]
fn three_repetitions_give_identical_frames() {
    let mut link = strong_tv(random_image(7));
    link.tag.repetitions = 3;
    let (rx, plan) = simulate::<f64>(&link, 7).unwrap();
    let report = decode(&rx, &link.detector).unwrap();
    assert!((2..=3).contains(&report.frames.len()), "{}", report.frames.len());
    for f in &report.frames {
        assert_eq!(f.image, link.image);
    }
    // Each emitted frame starts at a transmitted sync word.
    for (f, t) in report.frames.iter().zip(&plan.sync_starts) {
        assert!((f.timing_offset_s - t).abs() < link.tag.ts, "{} vs {t}", f.timing_offset_s);
    }
}

#[test]
fn streaming_in_chunks_matches_whole_buffer() {
    let link = strong_tv(random_image(11));
    let (rx, _) = simulate::<f32>(&link, 11).unwrap();
    let whole = decode(&rx, &link.detector).unwrap();
    let mut dec = Decoder::<f32>::new(&link.detector).unwrap();
    for chunk in rx.samples.chunks(7919) {
        dec.push(chunk);
    }
    assert_eq!(dec.samples_seen(), rx.len() as u64);
    assert_eq!(dec.finish().unwrap(), whole);
}

#[test]
fn decoding_is_deterministic() {
    let link = Link::tv(random_image(12)).with_snr_db(0.0);
    let (rx, _) = simulate::<f64>(&link, 12).unwrap();
    let mut cfg = link.detector.clone();
    cfg.keep_traces = true;
    let a = decode(&rx, &cfg).unwrap();
    let b = decode(&rx, &cfg).unwrap();
    assert_eq!(a, b);
    cfg.keep_traces = false;
    let c = decode(&rx, &cfg).unwrap();
    assert!(a.same_decode(&c));
    assert!(c.stage_traces.is_none());
}

#[test]
fn scaling_and_state_swap_keep_bits() {
    let link = strong_tv(random_image(13)).with_snr_db(5.0);
    let (rx, _) = simulate::<f64>(&link, 13).unwrap();
    let base = decode(&rx, &link.detector).unwrap();
    for g in [Complex64::new(1e-3, 0.0), Complex64::new(-2.0, 3.0), Complex64::new(0.0, 50.0)] {
        let scaled = decode(&rx.scaled(g), &link.detector).unwrap();
        assert_eq!(scaled.symbol_stream, base.symbol_stream);
        assert_eq!(scaled.first_image(), base.first_image());
    }
    let mut swapped = link.clone();
    swapped.channel = link.channel.with_swapped_states();
    let (rx2, _) = simulate::<f64>(&swapped, 13).unwrap();
    let flipped = decode(&rx2, &link.detector).unwrap();
    assert_eq!(flipped.first_image(), base.first_image());
}

#[test]
fn ambient_only_rarely_false_alarms() {
    let mut link = Link::tv(PixelImage::blank());
    link.channel.g_cascade = Complex::new(0.0, 0.0);
    let link = link.with_snr_db(0.0);
    let alarms = (0..100)
        .filter(|&seed| run_trial::<f32>(&link, seed).unwrap().detected)
        .count();
    assert!(alarms <= 1, "{alarms} false alarms in 100");
}

#[test]
fn short_buffer_is_flagged() {
    let link = strong_tv(PixelImage::checkerboard());
    let (rx, _) = simulate::<f64>(&link, 1).unwrap();
    let mut short = rx.clone();
    short.samples.truncate(400_000);
    let report = decode(&short, &link.detector).unwrap();
    assert_eq!(report.status, DecodeStatus::TooShort);
    assert!(report.frames.is_empty());
}

#[test]
fn wrong_sample_rate_rejected() {
    let link = strong_tv(PixelImage::checkerboard());
    let (mut rx, _) = simulate::<f32>(&link, 1).unwrap();
    rx.sample_rate = 2e6;
    assert!(decode(&rx, &DetectorConfig::tv_4g()).is_err());
}

#[test]
fn capture_file_loopback() {
    let dir = tempfile::tempdir().unwrap();
    let link = strong_tv(random_image(21));
    let (rx, _) = simulate::<f32>(&link, 21).unwrap();
    let path = dir.path().join("rx.cf32");
    write_capture(&rx, &path, CaptureFormat::Cf32le).unwrap();
    let back = read_capture::<f32>(&path, CaptureFormat::Cf32le, rx.sample_rate).unwrap();
    assert_eq!(back.samples, rx.samples);
    assert_eq!(decode(&back, &link.detector).unwrap().first_image(), Some(&link.image));

    let quiet = rx.scaled(Complex64::new(0.25 / rx.mean_power().sqrt(), 0.0));
    let path = dir.path().join("rx.cu8");
    write_capture(&quiet, &path, CaptureFormat::Cu8).unwrap();
    let back = read_capture::<f32>(&path, CaptureFormat::Cu8, rx.sample_rate).unwrap();
    assert_eq!(decode(&back, &link.detector).unwrap().first_image(), Some(&link.image));
}
