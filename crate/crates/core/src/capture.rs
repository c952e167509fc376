//! IQ buffers and raw SDR capture files.
//!
//! Two interleaved I/Q layouts are supported, bit-exact:
//!
//! - `cf32le`: little-endian IEEE-754 `f32` pairs, 8 bytes per sample.
//! - `cu8`: offset-binary unsigned bytes, 2 bytes per sample. Byte `v` maps
//!   to `(v - 127.5) / 127.5`; writing quantizes with
//!   `floor(x * 127.5 + 127.5 + 0.5)` clamped to `[0, 255]`.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Sample;

const CU8_ZERO: f64 = 127.5;

/// Complex baseband samples plus the metadata needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer<T> {
    pub samples: Vec<Complex<T>>,
    pub sample_rate: f64,
    /// RF centre frequency; informational only.
    pub center_freq: f64,
    pub capture_time: Option<String>,
}

impl<T: Sample> IqBuffer<T> {
    pub fn new(samples: Vec<Complex<T>>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::param(format!("sample rate must be positive, got {sample_rate}")));
        }
        Ok(Self {
            samples,
            sample_rate,
            center_freq: 0.0,
            capture_time: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Mean of |x|² in double precision.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|s| s.norm_sqr().to_f64_lossy()).sum();
        sum / self.samples.len() as f64
    }

    pub fn scaled(&self, factor: Complex<f64>) -> Self {
        let k = Complex::new(T::from_f64_lossy(factor.re), T::from_f64_lossy(factor.im));
        Self {
            samples: self.samples.iter().map(|&s| s * k).collect(),
            ..self.clone()
        }
    }

    /// Converts the sample scalar type.
    pub fn cast<U: Sample>(&self) -> IqBuffer<U> {
        IqBuffer {
            samples: self
                .samples
                .iter()
                .map(|s| {
                    Complex::new(
                        U::from_f64_lossy(s.re.to_f64_lossy()),
                        U::from_f64_lossy(s.im.to_f64_lossy()),
                    )
                })
                .collect(),
            sample_rate: self.sample_rate,
            center_freq: self.center_freq,
            capture_time: self.capture_time.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptureFormat {
    Cf32le,
    Cu8,
}

impl CaptureFormat {
    /// Bytes per complex sample.
    pub fn stride(self) -> usize {
        match self {
            CaptureFormat::Cf32le => 8,
            CaptureFormat::Cu8 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CaptureFormat::Cf32le => "cf32le",
            CaptureFormat::Cu8 => "cu8",
        }
    }
}

impl FromStr for CaptureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cf32le" | "cf32" => Ok(CaptureFormat::Cf32le),
            "cu8" => Ok(CaptureFormat::Cu8),
            other => Err(Error::Config(format!("unknown capture format {other:?}"))),
        }
    }
}

fn cu8_to_unit(b: u8) -> f64 {
    (b as f64 - CU8_ZERO) / CU8_ZERO
}

/// Quantizes one component to cu8; the flag reports clamping.
fn unit_to_cu8(v: f64) -> (u8, bool) {
    let clipped = !(-1.0..=1.0).contains(&v);
    let q = (v * CU8_ZERO + CU8_ZERO + 0.5).floor();
    (q.clamp(0.0, 255.0) as u8, clipped)
}

fn decode_chunk<T: Sample>(bytes: &[u8], format: CaptureFormat, out: &mut Vec<Complex<T>>) {
    match format {
        CaptureFormat::Cf32le => out.extend(bytes.chunks_exact(8).map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex::new(T::from_f64_lossy(re as f64), T::from_f64_lossy(im as f64))
        })),
        CaptureFormat::Cu8 => out.extend(bytes.chunks_exact(2).map(|c| {
            Complex::new(
                T::from_f64_lossy(cu8_to_unit(c[0])),
                T::from_f64_lossy(cu8_to_unit(c[1])),
            )
        })),
    }
}

/// Reads an entire capture file into memory.
pub fn read_capture<T: Sample>(
    path: impl AsRef<Path>,
    format: CaptureFormat,
    sample_rate: f64,
) -> Result<IqBuffer<T>> {
    let mut reader = CaptureReader::open(path, format)?;
    let mut samples = Vec::new();
    while reader.read_chunk(1 << 16, &mut samples)? > 0 {}
    IqBuffer::new(samples, sample_rate)
}

/// Chunked capture reader for decoding files larger than memory.
pub struct CaptureReader<R> {
    inner: R,
    path: PathBuf,
    format: CaptureFormat,
    consumed: u64,
    scratch: Vec<u8>,
}

impl CaptureReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>, format: CaptureFormat) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(BufReader::new(file), path, format))
    }
}

impl<R: Read> CaptureReader<R> {
    pub fn new(inner: R, path: impl Into<PathBuf>, format: CaptureFormat) -> Self {
        Self {
            inner,
            path: path.into(),
            format,
            consumed: 0,
            scratch: Vec::new(),
        }
    }

    /// Appends up to `max_samples` samples to `out`; returns how many were
    /// read, 0 at end of file. A trailing partial sample is an error.
    pub fn read_chunk<T: Sample>(&mut self, max_samples: usize, out: &mut Vec<Complex<T>>) -> Result<usize> {
        let stride = self.format.stride();
        self.scratch.resize(max_samples * stride, 0);
        let mut filled = 0;
        while filled < self.scratch.len() {
            match self.inner.read(&mut self.scratch[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => return Err(Error::io(&self.path, e)),
            }
        }
        let whole = filled - filled % stride;
        if whole != filled {
            let len = self.consumed + filled as u64;
            return Err(Error::TruncatedCapture {
                path: self.path.clone(),
                len,
                stride,
                offset: self.consumed + whole as u64,
            });
        }
        decode_chunk(&self.scratch[..filled], self.format, out);
        self.consumed += filled as u64;
        Ok(filled / stride)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WriteStats {
    pub samples: usize,
    /// Components clamped by cu8 quantization.
    pub clipped: usize,
}

pub fn write_capture<T: Sample>(
    buf: &IqBuffer<T>,
    path: impl AsRef<Path>,
    format: CaptureFormat,
) -> Result<WriteStats> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let stats = write_samples(&buf.samples, &mut w, format).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(stats)
}

pub fn write_samples<T: Sample, W: Write>(
    samples: &[Complex<T>],
    w: &mut W,
    format: CaptureFormat,
) -> std::io::Result<WriteStats> {
    let mut stats = WriteStats {
        samples: samples.len(),
        clipped: 0,
    };
    for s in samples {
        match format {
            CaptureFormat::Cf32le => {
                w.write_all(&(s.re.to_f64_lossy() as f32).to_le_bytes())?;
                w.write_all(&(s.im.to_f64_lossy() as f32).to_le_bytes())?;
            }
            CaptureFormat::Cu8 => {
                let (i, ci) = unit_to_cu8(s.re.to_f64_lossy());
                let (q, cq) = unit_to_cu8(s.im.to_f64_lossy());
                stats.clipped += ci as usize + cq as usize;
                w.write_all(&[i, q])?;
            }
        }
    }
    Ok(stats)
}
