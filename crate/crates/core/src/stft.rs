//! Forward/inverse STFT with square-root Hann windows on both sides.
//!
//! Analysis frames lie fully inside the signal (no padding), so the frame
//! count is `(len - window_len) / hop + 1`. With sqrt-Hann on analysis and
//! synthesis and hop <= window/2 the normalized overlap-add reconstruction
//! is exact in the interior.

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::Waveform;
use crate::error::{Error, Result};

/// Complex STFT matrix, T frames by F = window_len/2 + 1 bins.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    frames: Array2<Complex64>,
    window_len: usize,
    hop: usize,
    sample_rate_hz: u32,
}

impl Spectrogram {
    /// Wrap an existing matrix, validating the bin count and finiteness.
    pub fn new(
        frames: Array2<Complex64>,
        window_len: usize,
        hop: usize,
        sample_rate_hz: u32,
    ) -> Result<Self> {
        check_geometry(window_len, hop)?;
        if frames.ncols() != window_len / 2 + 1 {
            return Err(Error::Geometry(format!(
                "expected {} bins for window {}, got {}",
                window_len / 2 + 1,
                window_len,
                frames.ncols()
            )));
        }
        if frames.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::DegenerateInput("non-finite STFT entry".into()));
        }
        Ok(Self {
            frames,
            window_len,
            hop,
            sample_rate_hz,
        })
    }

    pub fn frames(&self) -> &Array2<Complex64> {
        &self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.frames.ncols()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    /// Natural synthesis length: the samples covered by the analysis frames.
    pub fn natural_len(&self) -> usize {
        if self.num_frames() == 0 {
            0
        } else {
            (self.num_frames() - 1) * self.hop + self.window_len
        }
    }

    /// Elementwise complex modulus.
    pub fn magnitude(&self) -> Array2<f64> {
        self.frames.mapv(|c| c.norm())
    }

    /// Same geometry, entries multiplied elementwise by a real matrix.
    pub fn scale_by(&self, weights: &Array2<f64>) -> Result<Spectrogram> {
        if weights.dim() != self.frames.dim() {
            return Err(Error::Geometry(format!(
                "weight matrix {:?} does not match spectrogram {:?}",
                weights.dim(),
                self.frames.dim()
            )));
        }
        let mut frames = self.frames.clone();
        frames.zip_mut_with(weights, |c, &w| *c *= w);
        Ok(Spectrogram {
            frames,
            window_len: self.window_len,
            hop: self.hop,
            sample_rate_hz: self.sample_rate_hz,
        })
    }
}

fn check_geometry(window_len: usize, hop: usize) -> Result<()> {
    if window_len == 0 || !window_len.is_power_of_two() {
        return Err(Error::Config(format!(
            "window length {window_len} must be a power of two"
        )));
    }
    if hop == 0 || window_len % hop != 0 {
        return Err(Error::Config(format!(
            "hop {hop} must divide window length {window_len}"
        )));
    }
    Ok(())
}

/// sqrt of the periodic Hann window: w[n] = sin(pi n / N).
pub fn sqrt_hann(window_len: usize) -> Vec<f64> {
    (0..window_len)
        .map(|n| (std::f64::consts::PI * n as f64 / window_len as f64).sin())
        .collect()
}

/// Forward STFT. Frames lie fully inside the signal.
pub fn stft(w: &Waveform, window_len: usize, hop: usize) -> Result<Spectrogram> {
    check_geometry(window_len, hop)?;
    if w.len() < window_len {
        return Err(Error::TooShort {
            len: w.len(),
            min: window_len,
        });
    }
    let num_frames = (w.len() - window_len) / hop + 1;
    let num_bins = window_len / 2 + 1;
    let window = sqrt_hann(window_len);

    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(window_len);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); window_len];

    let mut frames = Array2::default((num_frames, num_bins));
    let x = w.samples();
    for t in 0..num_frames {
        let start = t * hop;
        for n in 0..window_len {
            buf[n] = Complex64::new(x[start + n] * window[n], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for f in 0..num_bins {
            frames[(t, f)] = buf[f];
        }
    }
    Spectrogram::new(frames, window_len, hop, w.sample_rate_hz())
}

/// Inverse STFT by windowed overlap-add, normalized by the accumulated
/// window product. `out_len` must be within one window of
/// `num_frames * hop + window_len`; samples past the covered range are zero.
pub fn istft(s: &Spectrogram, out_len: usize) -> Result<Waveform> {
    if s.hop > s.window_len / 2 {
        return Err(Error::Geometry(format!(
            "synthesis requires hop <= window/2, got hop {} window {}",
            s.hop, s.window_len
        )));
    }
    let covered = s.num_frames() * s.hop + s.window_len;
    if out_len.abs_diff(covered) > s.window_len {
        return Err(Error::Geometry(format!(
            "out_len {out_len} not within one window of covered length {covered}"
        )));
    }

    let n = s.window_len;
    let window = sqrt_hann(n);
    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(n);
    let mut scratch = vec![Complex64::default(); ifft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); n];

    let natural = s.natural_len();
    let mut acc = vec![0.0f64; natural.max(out_len)];
    let mut norm = vec![0.0f64; natural.max(out_len)];

    for t in 0..s.num_frames() {
        // Rebuild the full conjugate-symmetric spectrum for a real frame.
        buf[..s.num_bins()]
            .iter_mut()
            .enumerate()
            .for_each(|(f, b)| *b = s.frames[(t, f)]);
        for f in 1..n / 2 {
            buf[n - f] = s.frames[(t, f)].conj();
        }
        ifft.process_with_scratch(&mut buf, &mut scratch);

        let start = t * s.hop;
        for i in 0..n {
            // 1/N inverse scaling folded in here.
            acc[start + i] += buf[i].re / n as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }

    let mut out = vec![0.0f64; out_len];
    for i in 0..out_len.min(natural) {
        if norm[i] > 1e-9 {
            out[i] = acc[i] / norm[i];
        }
    }
    Ok(Waveform::from_finite(out, s.sample_rate_hz))
}

/// Elementwise magnitude of an STFT matrix.
pub fn magnitude(s: &Spectrogram) -> Array2<f64> {
    s.magnitude()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn noise(len: usize, rate: u32, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.random_range(-0.9..0.9)).collect(), rate).unwrap()
    }

    fn sine(freq: f64, rate: u32, len: usize, amp: f64, phase: f64) -> Waveform {
        let s = (0..len)
            .map(|n| amp * (2.0 * PI * freq * n as f64 / rate as f64 + phase).sin())
            .collect();
        Waveform::new(s, rate).unwrap()
    }

    /// O(N^2) reference DFT of one windowed frame, independent of rustfft.
    fn naive_frame_dft(x: &[f64], start: usize, window_len: usize) -> Vec<Complex64> {
        let w = sqrt_hann(window_len);
        let mut out = Vec::with_capacity(window_len / 2 + 1);
        for f in 0..=window_len / 2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..window_len {
                let ang = -2.0 * PI * (f * n) as f64 / window_len as f64;
                acc += Complex64::new(ang.cos(), ang.sin()) * (x[start + n] * w[n]);
            }
            out.push(acc);
        }
        out
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let w = Waveform::new(vec![0.0; 2048], 8000).unwrap();
        let s = stft(&w, 512, 128).unwrap();
        assert!(s.frames().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn frame_count_formula() {
        let w = Waveform::new(vec![0.0; 8000], 8000).unwrap();
        let s = stft(&w, 512, 128).unwrap();
        assert_eq!(s.num_frames(), 59);
        assert_eq!(s.num_bins(), 257);
    }

    #[test]
    fn matches_naive_dft() {
        let w = noise(1500, 8000, 3);
        let s = stft(&w, 256, 64).unwrap();
        for t in [0usize, 7, s.num_frames() - 1] {
            let reference = naive_frame_dft(w.samples(), t * 64, 256);
            for (f, r) in reference.iter().enumerate().take(s.num_bins()) {
                let d = (s.frames()[(t, f)] - r).norm();
                assert!(d < 1e-9, "frame {t} bin {f}: diff {d}");
            }
        }
    }

    #[test]
    fn bin_center_sine_concentrates_in_mainlobe() {
        // With sqrt-Hann analysis, a bin-center sine puts ~81% of frame
        // energy in bin k and ~99.1% in bins k-1..k+1 (values computed from
        // the windowed DFT directly).
        let k = 16;
        let freq = k as f64 * 8000.0 / 512.0;
        let w = sine(freq, 8000, 4096, 0.7, 0.3);
        let s = stft(&w, 512, 128).unwrap();
        let t = s.num_frames() / 2;
        let energy: Vec<f64> = (0..s.num_bins())
            .map(|f| s.frames()[(t, f)].norm_sqr())
            .collect();
        let total: f64 = energy.iter().sum();
        let share_k = energy[k] / total;
        let share_lobe = (energy[k - 1] + energy[k] + energy[k + 1]) / total;
        assert!(share_k > 0.80, "bin share {share_k}");
        assert!(share_lobe > 0.99, "mainlobe share {share_lobe}");
    }

    #[test]
    fn round_trip_interior_exact() {
        let w = noise(4 * 512 + 300, 8000, 9);
        let s = stft(&w, 512, 128).unwrap();
        let back = istft(&s, w.len()).unwrap();
        let peak = w.peak();
        let trim = 512;
        for i in trim..w.len() - trim {
            let rel = (w.samples()[i] - back.samples()[i]).abs() / peak;
            assert!(rel <= 1e-6, "sample {i}: relative error {rel}");
        }
    }

    #[test]
    fn istft_zero_is_zero() {
        let frames = Array2::default((10, 257));
        let s = Spectrogram::new(frames, 512, 128, 8000).unwrap();
        let w = istft(&s, 1500).unwrap();
        assert_eq!(w.len(), 1500);
        assert!(w.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn istft_is_linear_in_the_spectrogram() {
        let w = noise(3000, 8000, 21);
        let s = stft(&w, 512, 128).unwrap();
        let doubled = Spectrogram::new(s.frames().mapv(|c| c * 2.0), 512, 128, 8000).unwrap();
        let y1 = istft(&s, w.len()).unwrap();
        let y2 = istft(&doubled, w.len()).unwrap();
        for i in 0..w.len() {
            assert!((y2.samples()[i] - 2.0 * y1.samples()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn stft_is_linear() {
        let x = noise(2000, 8000, 31);
        let y = noise(2000, 8000, 32);
        let (a, b) = (0.37, -1.2);
        let combined = Waveform::new(
            x.samples()
                .iter()
                .zip(y.samples())
                .map(|(xi, yi)| a * xi + b * yi)
                .collect(),
            8000,
        )
        .unwrap();
        let sx = stft(&x, 512, 128).unwrap();
        let sy = stft(&y, 512, 128).unwrap();
        let sc = stft(&combined, 512, 128).unwrap();
        for (c, (xv, yv)) in sc.frames().iter().zip(sx.frames().iter().zip(sy.frames())) {
            assert!((c - (xv * a + yv * b)).norm() < 1e-9);
        }
    }

    #[test]
    fn magnitude_values() {
        let mut frames = Array2::default((1, 257));
        frames[(0, 5)] = Complex64::new(3.0, 4.0);
        let s = Spectrogram::new(frames, 512, 128, 8000).unwrap();
        let m = magnitude(&s);
        assert_eq!(m[(0, 5)], 5.0);
        assert_eq!(m[(0, 0)], 0.0);
    }

    #[test]
    fn sine_peak_magnitude_matches_window_sum() {
        let amp = 0.3;
        let freq = 16.0 * 8000.0 / 512.0;
        let w = sine(freq, 8000, 4096, amp, 0.4);
        let s = stft(&w, 512, 128).unwrap();
        let peak = s.magnitude().iter().cloned().fold(0.0f64, f64::max);
        let expect = amp * sqrt_hann(512).iter().sum::<f64>() / 2.0;
        assert!(
            (peak - expect).abs() / expect < 0.01,
            "peak {peak}, expect {expect}"
        );
    }

    #[test]
    fn too_short_signal_rejected() {
        let w = Waveform::new(vec![0.0; 100], 8000).unwrap();
        assert!(matches!(
            stft(&w, 512, 128),
            Err(Error::TooShort { len: 100, min: 512 })
        ));
    }

    #[test]
    fn bad_geometry_rejected() {
        let w = Waveform::new(vec![0.0; 2048], 8000).unwrap();
        assert!(stft(&w, 500, 125).is_err()); // not a power of two
        assert!(stft(&w, 512, 100).is_err()); // hop does not divide
        assert!(stft(&w, 512, 0).is_err());

        let s = stft(&w, 512, 128).unwrap();
        assert!(istft(&s, 100_000).is_err()); // far from covered length
        let bad = Spectrogram::new(Array2::default((4, 100)), 512, 128, 8000);
        assert!(bad.is_err()); // wrong bin count
    }
}
