//! PCM audio I/O and resampling.
//!
//! All processing in this crate runs on [`Waveform`]: mono f64 samples at a
//! known rate. Files are RIFF/WAVE, 16-bit PCM or 32-bit IEEE float; writing
//! defaults to 16-bit PCM.

use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono sampled audio. Samples are finite amplitudes nominally in [-1, 1];
/// intermediate processing may exceed that range, file writes clamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    /// Build a waveform, validating the rate is positive and samples finite.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if let Some(pos) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::DegenerateInput(format!(
                "non-finite sample at index {pos}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// Internal constructor for samples already known to be finite.
    pub(crate) fn from_finite(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Root-mean-square amplitude over all samples.
    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum_sq: f64 = self.samples.iter().map(|s| s * s).sum();
        (sum_sq / self.samples.len() as f64).sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |p, s| p.max(s.abs()))
    }

    /// Copy out the sample range `[start, end)`, clipped to the waveform.
    pub fn slice(&self, start: usize, end: usize) -> Waveform {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        Waveform::from_finite(self.samples[start..end].to_vec(), self.sample_rate_hz)
    }

    /// Resample to `target_hz` with a polyphase windowed-sinc filter
    /// (Kaiser beta 8.6, 64 taps per phase, cutoff at the lower Nyquist).
    /// Output length is `round(len * target / source)`.
    pub fn resample_to(&self, target_hz: u32) -> Result<Waveform> {
        if target_hz == 0 {
            return Err(Error::Config("target sample rate must be positive".into()));
        }
        if target_hz == self.sample_rate_hz {
            return Ok(self.clone());
        }
        Ok(resample(self, target_hz))
    }
}

/// Sample encoding for WAV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleFormat {
    #[default]
    Int16,
    Float32,
}

/// Read a WAV file into a mono waveform. Multi-channel files require an
/// explicit `channel` index; there is no implicit downmix.
pub fn read_wav(path: &Path, channel: Option<usize>) -> Result<Waveform> {
    let reader = hound::WavReader::open(path).map_err(|e| map_hound_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::format(path, "zero channels"));
    }
    let ch = match (channels, channel) {
        (1, None) => 0,
        (1, Some(0)) => 0,
        (_, Some(c)) if c < channels => c,
        (_, Some(c)) => {
            return Err(Error::Config(format!(
                "channel {c} out of range for {channels}-channel file {}",
                path.display()
            )))
        }
        (_, None) => {
            return Err(Error::Config(format!(
                "{} has {channels} channels; a channel index is required",
                path.display()
            )))
        }
    };

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound_err(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound_err(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: format!("{bits}-bit {fmt:?} samples (supported: 16-bit PCM, 32-bit float)"),
            })
        }
    };

    let samples: Vec<f64> = interleaved
        .iter()
        .skip(ch)
        .step_by(channels)
        .copied()
        .collect();
    if let Some(pos) = samples.iter().position(|s| !s.is_finite()) {
        return Err(Error::format(
            path,
            format!("non-finite sample at index {pos}"),
        ));
    }
    Waveform::new(samples, spec.sample_rate)
}

/// Write a mono WAV file. Samples are clamped to [-1, 1]. The file is
/// written to a temporary sibling and renamed on success.
pub fn write_wav(path: &Path, w: &Waveform, format: SampleFormat) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate_hz(),
        bits_per_sample: match format {
            SampleFormat::Int16 => 16,
            SampleFormat::Float32 => 32,
        },
        sample_format: match format {
            SampleFormat::Int16 => hound::SampleFormat::Int,
            SampleFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d),
        None => tempfile::NamedTempFile::new(),
    }
    .map_err(|e| Error::io(path, e))?;

    {
        let mut writer = hound::WavWriter::new(BufWriter::new(tmp.as_file()), spec)
            .map_err(|e| map_hound_err(path, e))?;
        match format {
            SampleFormat::Int16 => {
                for &s in w.samples() {
                    let q = (s.clamp(-1.0, 1.0) * 32768.0).round();
                    writer
                        .write_sample(q.clamp(-32768.0, 32767.0) as i16)
                        .map_err(|e| map_hound_err(path, e))?;
                }
            }
            SampleFormat::Float32 => {
                for &s in w.samples() {
                    writer
                        .write_sample(s.clamp(-1.0, 1.0) as f32)
                        .map_err(|e| map_hound_err(path, e))?;
                }
            }
        }
        writer.finalize().map_err(|e| map_hound_err(path, e))?;
    }
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn map_hound_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::Unsupported => Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: "unsupported WAVE encoding".into(),
        },
        other => Error::format(path, other.to_string()),
    }
}

const TAPS_PER_PHASE: usize = 64;
const KAISER_BETA: f64 = 8.6;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind, by power series.
fn bessel_i0(x: f64) -> f64 {
    let half_sq = (x / 2.0) * (x / 2.0);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= half_sq / ((k * k) as f64);
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    sum
}

fn kaiser(t: f64, beta: f64) -> f64 {
    if t.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - t * t).sqrt()) / bessel_i0(beta)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    }
}

/// Precomputed polyphase filter bank for a rational rate change of upsample/downsample.
struct PolyphaseBank {
    /// `phases[p][k]` weights input sample `i - half + 1 + k` for fractional
    /// offset `p / upsample`. Each phase is normalized to unit DC gain.
    phases: Vec<Vec<f64>>,
    upsample: u64,
    downsample: u64,
}

impl PolyphaseBank {
    fn new(source_hz: u32, target_hz: u32) -> Self {
        let g = gcd(source_hz as u64, target_hz as u64);
        let upsample = target_hz as u64 / g;
        let downsample = source_hz as u64 / g;
        let half = (TAPS_PER_PHASE / 2) as f64;
        // Cutoff relative to the input Nyquist: pass everything on upsample,
        // limit to the new Nyquist on downsample.
        let cutoff = (target_hz as f64 / source_hz as f64).min(1.0);

        let mut phases = Vec::with_capacity(upsample as usize);
        for p in 0..upsample {
            let frac = p as f64 / upsample as f64;
            let mut taps = Vec::with_capacity(TAPS_PER_PHASE);
            for k in 0..TAPS_PER_PHASE {
                let u = frac + half - 1.0 - k as f64;
                taps.push(cutoff * sinc(cutoff * u) * kaiser(u / half, KAISER_BETA));
            }
            let sum: f64 = taps.iter().sum();
            for t in &mut taps {
                *t /= sum;
            }
            phases.push(taps);
        }
        Self {
            phases,
            upsample,
            downsample,
        }
    }
}

fn resample(w: &Waveform, target_hz: u32) -> Waveform {
    let bank = PolyphaseBank::new(w.sample_rate_hz(), target_hz);
    let x = w.samples();
    let out_len =
        (x.len() as f64 * target_hz as f64 / w.sample_rate_hz() as f64).round() as usize;
    let half = (TAPS_PER_PHASE / 2) as isize;

    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len as u64 {
        let t_up = m * bank.downsample;
        let i = (t_up / bank.upsample) as isize;
        let phase = &bank.phases[(t_up % bank.upsample) as usize];
        let mut acc = 0.0;
        for (k, tap) in phase.iter().enumerate() {
            let j = i - half + 1 + k as isize;
            if j >= 0 && (j as usize) < x.len() {
                acc += tap * x[j as usize];
            }
        }
        out.push(acc);
    }
    Waveform::from_finite(out, target_hz)
}
