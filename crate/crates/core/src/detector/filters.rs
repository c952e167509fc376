//! Recursive filters used by the reader.
//!
//! Coefficients are designed with the bilinear transform (pre-warped so the
//! −3 dB point lands exactly on the requested cutoff). Coefficients and
//! state stay in `f64` for every sample type: the low-pass poles sit within
//! ~1e-3 of the unit circle, where single-precision coefficients shift the
//! DC gain by several percent.

use crate::error::{Error, Result};
use crate::scalar::Sample;

use std::f64::consts::PI;
use std::marker::PhantomData;

/// Transposed direct-form II second-order section.
#[derive(Debug, Clone)]
pub struct Biquad<T> {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    z1: f64,
    z2: f64,
    _sample: PhantomData<T>,
}

impl<T: Sample> Biquad<T> {
    fn from_f64(b: [f64; 3], a: [f64; 2]) -> Self {
        Self {
            b0: b[0],
            b1: b[1],
            b2: b[2],
            a1: a[0],
            a2: a[1],
            z1: 0.0,
            z2: 0.0,
            _sample: PhantomData,
        }
    }

    /// Bilinear low-pass section with quality factor `q`; unity DC gain.
    pub fn lowpass(cutoff: f64, rate: f64, q: f64) -> Self {
        let k = (PI * cutoff / rate).tan();
        let norm = 1.0 / (1.0 + k / q + k * k);
        let b0 = k * k * norm;
        Self::from_f64(
            [b0, 2.0 * b0, b0],
            [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
        )
    }

    #[inline]
    pub fn process(&mut self, x: T) -> T {
        T::from_f64_lossy(self.process_f64(x.to_f64_lossy()))
    }

    #[inline]
    fn process_f64(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.z1;
        self.z1 = self.b1 * x - self.a1 * y + self.z2;
        self.z2 = self.b2 * x - self.a2 * y;
        y
    }

    /// Loads the steady state for a constant input `x` (unity DC gain).
    pub fn settle(&mut self, x: T) {
        let x = x.to_f64_lossy();
        self.z2 = (self.b2 - self.a2) * x;
        self.z1 = (1.0 - self.b0) * x;
    }
}

/// Fourth-order Butterworth low-pass as two cascaded sections.
#[derive(Debug, Clone)]
pub struct LowPass4<T> {
    sections: [Biquad<T>; 2],
}

impl<T: Sample> LowPass4<T> {
    pub fn new(cutoff: f64, rate: f64) -> Result<Self> {
        check_cutoff(cutoff, rate)?;
        let q1 = 1.0 / (2.0 * (PI / 8.0).cos());
        let q2 = 1.0 / (2.0 * (3.0 * PI / 8.0).cos());
        Ok(Self {
            sections: [
                Biquad::lowpass(cutoff, rate, q1),
                Biquad::lowpass(cutoff, rate, q2),
            ],
        })
    }

    #[inline]
    pub fn process(&mut self, x: T) -> T {
        let y = self.sections[0].process_f64(x.to_f64_lossy());
        T::from_f64_lossy(self.sections[1].process_f64(y))
    }

    pub fn settle(&mut self, x: T) {
        self.sections.iter_mut().for_each(|s| s.settle(x));
    }
}

/// First-order high-pass (DC blocker): `y = b0·(x − x₁) − a1·y₁`.
#[derive(Debug, Clone)]
pub struct DcBlocker<T> {
    b0: f64,
    a1: f64,
    x1: f64,
    y1: f64,
    _sample: PhantomData<T>,
}

impl<T: Sample> DcBlocker<T> {
    pub fn new(cutoff: f64, rate: f64) -> Result<Self> {
        check_cutoff(cutoff, rate)?;
        let k = (PI * cutoff / rate).tan();
        Ok(Self {
            b0: 1.0 / (1.0 + k),
            a1: (k - 1.0) / (k + 1.0),
            x1: 0.0,
            y1: 0.0,
            _sample: PhantomData,
        })
    }

    #[inline]
    pub fn process(&mut self, x: T) -> T {
        let x = x.to_f64_lossy();
        let y = self.b0 * (x - self.x1) - self.a1 * self.y1;
        self.x1 = x;
        self.y1 = y;
        T::from_f64_lossy(y)
    }

    /// Steady state for a constant input: zero output.
    pub fn settle(&mut self, x: T) {
        self.x1 = x.to_f64_lossy();
        self.y1 = 0.0;
    }
}

fn check_cutoff(cutoff: f64, rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::param(format!("sample rate must be > 0, got {rate}")));
    }
    if !(cutoff > 0.0) {
        return Err(Error::param(format!("cutoff must be > 0, got {cutoff}")));
    }
    if cutoff >= rate / 2.0 {
        return Err(Error::AboveNyquist {
            cutoff_hz: cutoff,
            rate_hz: rate,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Steady-state RMS gain for a sine at `freq`, measured after settling.
    fn tone_gain(mut f: impl FnMut(f64) -> f64, freq: f64, rate: f64, settle: usize, n: usize) -> f64 {
        let w = 2.0 * PI * freq / rate;
        let mut acc_in = 0.0;
        let mut acc_out = 0.0;
        for i in 0..settle + n {
            let x = (w * i as f64).sin();
            let y = f(x);
            if i >= settle {
                acc_in += x * x;
                acc_out += y * y;
            }
        }
        (acc_out / acc_in).sqrt()
    }

    // Analytic bilinear-Butterworth magnitudes, written independently of the
    // difference equations above.
    fn butterworth4_mag(f: f64, fc: f64, rate: f64) -> f64 {
        let r = (PI * f / rate).tan() / (PI * fc / rate).tan();
        1.0 / (1.0 + r.powi(8)).sqrt()
    }

    fn highpass1_mag(f: f64, fc: f64, rate: f64) -> f64 {
        let r = (PI * fc / rate).tan() / (PI * f / rate).tan();
        1.0 / (1.0 + r * r).sqrt()
    }

    #[test]
    fn lowpass_minus_3db_at_cutoff() {
        let rate = 20_000.0;
        let mut lp = LowPass4::<f64>::new(500.0, rate).unwrap();
        let g = tone_gain(|x| lp.process(x), 500.0, rate, 20_000, 40_000);
        assert!((20.0 * g.log10() + 3.0103).abs() < 0.02, "{g}");
    }

    #[test]
    fn lowpass_matches_analytic_response() {
        let rate = 10_000.0;
        for f in [50.0, 200.0, 400.0, 800.0, 2000.0] {
            let mut lp = LowPass4::<f64>::new(400.0, rate).unwrap();
            let g = tone_gain(|x| lp.process(x), f, rate, 20_000, 50_000);
            let want = butterworth4_mag(f, 400.0, rate);
            assert!((g - want).abs() < 2e-3 * want.max(1e-3) + 1e-6, "{f}: {g} vs {want}");
        }
    }

    #[test]
    fn lowpass_unity_dc_gain() {
        let mut lp = LowPass4::<f64>::new(500.0, 1e6).unwrap();
        let mut y = 0.0;
        for _ in 0..200_000 {
            y = lp.process(0.37);
        }
        assert!((y - 0.37).abs() < 1e-9);
        // Settled filter starts exactly on the DC value.
        let mut lp = LowPass4::<f64>::new(500.0, 1e6).unwrap();
        lp.settle(2.5);
        assert!((lp.process(2.5) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn lowpass_tenfold_cutoff_attenuates_20db() {
        let rate = 1e6;
        let f3 = 500.0;
        let mut lp = LowPass4::<f64>::new(f3, rate).unwrap();
        let g = tone_gain(|x| lp.process(x), 10.0 * f3, rate, 200_000, 200_000);
        let db = 20.0 * g.log10();
        assert!(db <= -20.0, "{db}");
        // Fourth-order roll-off: about −80 dB a decade.
        assert!(db < -75.0, "{db}");
    }

    #[test]
    fn highpass_minus_3db_and_passband() {
        let rate = 2000.0;
        let mut hp = DcBlocker::<f64>::new(50.0, rate).unwrap();
        let g = tone_gain(|x| hp.process(x), 50.0, rate, 4000, 20_000);
        assert!((20.0 * g.log10() + 3.0103).abs() < 0.02);

        let mut hp = DcBlocker::<f64>::new(50.0, rate).unwrap();
        let fb = 1.0 / 5.4e-3;
        let g = tone_gain(|x| hp.process(x), fb, rate, 4000, 20_000);
        let want = highpass1_mag(fb, 50.0, rate);
        assert!((g - want).abs() < 1e-3);
        assert!(20.0 * g.log10() > -1.0);
    }

    #[test]
    fn highpass_square_wave_at_bit_rate_loses_under_1db() {
        // Oracle: sum the analytic response over the square wave's odd
        // harmonics (amplitudes 4/(πk)) below Nyquist.
        let rate = 2000.0;
        let fb = 1.0 / 5.4e-3;
        let period = rate / fb;
        let mut hp = DcBlocker::<f64>::new(50.0, rate).unwrap();
        let (mut e_in, mut e_out) = (0.0, 0.0);
        for i in 0..200_000 {
            let phase = (i as f64 / period).fract();
            let x = if phase < 0.5 { 1.0 } else { -1.0 };
            let y = hp.process(x);
            if i > 2000 {
                e_in += x * x;
                e_out += y * y;
            }
        }
        let measured_db = 10.0 * (e_out / e_in).log10();
        assert!(measured_db > -1.0, "{measured_db}");
        let fundamental_db = 20.0 * highpass1_mag(fb, 50.0, rate).log10();
        // Higher harmonics pass almost untouched, so the square wave loses
        // less than its fundamental does.
        assert!(measured_db > fundamental_db - 0.05, "{measured_db} vs {fundamental_db}");
    }

    #[test]
    fn highpass_rejects_dc() {
        let mut hp = DcBlocker::<f64>::new(50.0, 2000.0).unwrap();
        let mut y = 1.0;
        for _ in 0..2000 {
            y = hp.process(4.0);
        }
        assert!(y.abs() < 1e-9);
        let mut hp = DcBlocker::<f64>::new(50.0, 2000.0).unwrap();
        assert!((0..100).all(|_| hp.process(0.0) == 0.0));
    }

    #[test]
    fn cutoffs_at_or_above_nyquist_rejected() {
        assert!(matches!(LowPass4::<f64>::new(500.0, 1000.0), Err(Error::AboveNyquist { .. })));
        assert!(matches!(DcBlocker::<f32>::new(1500.0, 2000.0), Err(Error::AboveNyquist { .. })));
        assert!(LowPass4::<f64>::new(0.0, 1000.0).is_err());
    }

    #[test]
    fn single_precision_lowpass_tracks_double() {
        let mut a = LowPass4::<f32>::new(500.0, 1e6).unwrap();
        let mut b = LowPass4::<f64>::new(500.0, 1e6).unwrap();
        a.settle(1.0);
        b.settle(1.0);
        let mut worst = 0.0f64;
        for i in 0..400_000 {
            let x = 1.0 + if (i / 2700) % 2 == 0 { 0.2 } else { 0.0 };
            let ya = a.process(x as f32) as f64;
            let yb = b.process(x);
            worst = worst.max((ya - yb).abs());
        }
        assert!(worst < 1e-3, "{worst}");
    }
}
