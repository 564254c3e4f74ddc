//! Mixture rendering: resolve utterance references to audio, gain-stage to
//! the requested SNRs, reconcile lengths, and emit clipping-safe mixture
//! plus ground-truth stems.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::audio::{read_wav, write_wav, SampleFormat, Waveform};
use crate::error::{Error, Result};
use crate::pair::MixtureSpec;
use crate::segment::{energy_sad_labels, CandidateSegment, SadLabels, SadParams};

/// How to reconcile the two source lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LengthMode {
    /// Truncate the longer source at the tail (start-aligned).
    #[default]
    Min,
    /// Zero-pad the shorter source at the tail.
    Max,
}

impl LengthMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Self::Min),
            "max" => Ok(Self::Max),
            other => Err(Error::Config(format!(
                "unknown length mode {other:?}, expected min or max"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Min => "min",
            Self::Max => "max",
        }
    }
}

/// Maps an utterance reference from a mixture list to its audio.
pub trait AudioResolver: Sync {
    fn resolve(&self, utt_ref: &str) -> Result<Waveform>;
}

/// Resolves references as WAV files under a directory: `<dir>/<ref>` or
/// `<dir>/<ref>.wav`.
pub struct DirResolver {
    dir: PathBuf,
    channel: Option<usize>,
    target_hz: Option<u32>,
}

impl DirResolver {
    pub fn new(dir: impl Into<PathBuf>, channel: Option<usize>, target_hz: Option<u32>) -> Self {
        Self {
            dir: dir.into(),
            channel,
            target_hz,
        }
    }
}

impl AudioResolver for DirResolver {
    fn resolve(&self, utt_ref: &str) -> Result<Waveform> {
        let direct = self.dir.join(utt_ref);
        let with_ext = self.dir.join(format!("{utt_ref}.wav"));
        let path = if direct.is_file() {
            direct
        } else if with_ext.is_file() {
            with_ext
        } else {
            return Err(Error::MissingAudio(format!(
                "{utt_ref} not found under {}",
                self.dir.display()
            )));
        };
        let w = read_wav(&path, self.channel)?;
        match self.target_hz {
            Some(hz) if hz != w.sample_rate_hz() => w.resample_to(hz),
            _ => Ok(w),
        }
    }
}

/// Resolves utt_ids by slicing segment time bounds out of their recording
/// (`<recordings_dir>/<recording>.wav`). Recordings are cached after the
/// first read, already resampled.
pub struct SegmentResolver {
    recordings_dir: PathBuf,
    channel: Option<usize>,
    target_hz: Option<u32>,
    segments: BTreeMap<String, CandidateSegment>,
    cache: Mutex<BTreeMap<String, Arc<Waveform>>>,
}

impl SegmentResolver {
    pub fn new(
        recordings_dir: impl Into<PathBuf>,
        segments: &[CandidateSegment],
        channel: Option<usize>,
        target_hz: Option<u32>,
    ) -> Self {
        Self {
            recordings_dir: recordings_dir.into(),
            channel,
            target_hz,
            segments: segments
                .iter()
                .map(|s| (s.utt_id(), s.clone()))
                .collect(),
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    fn recording(&self, name: &str) -> Result<Arc<Waveform>> {
        if let Some(w) = self.cache.lock().unwrap().get(name) {
            return Ok(Arc::clone(w));
        }
        let path = self.recordings_dir.join(format!("{name}.wav"));
        if !path.is_file() {
            return Err(Error::MissingAudio(format!(
                "recording {name} not found under {}",
                self.recordings_dir.display()
            )));
        }
        let mut w = read_wav(&path, self.channel)?;
        if let Some(hz) = self.target_hz {
            if hz != w.sample_rate_hz() {
                w = w.resample_to(hz)?;
            }
        }
        let w = Arc::new(w);
        self.cache
            .lock()
            .unwrap()
            .insert(name.to_string(), Arc::clone(&w));
        Ok(w)
    }
}

impl AudioResolver for SegmentResolver {
    fn resolve(&self, utt_ref: &str) -> Result<Waveform> {
        let seg = self.segments.get(utt_ref).ok_or_else(|| {
            Error::MissingAudio(format!("{utt_ref} not present in the segment table"))
        })?;
        let rec = self.recording(&seg.recording)?;
        let rate = rec.sample_rate_hz() as f64;
        let start = (seg.start_s * rate).round() as usize;
        let end = (seg.end_s * rate).round() as usize;
        Ok(rec.slice(start, end))
    }
}

/// Rendering knobs beyond the length mode.
#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub mode: LengthMode,
    /// When set, speech-level power is measured over SAD-active samples
    /// (reference energy SAD with these parameters); otherwise over the
    /// whole source.
    pub sad: Option<SadParams>,
    /// Joint scale-down target: output peak never exceeds this.
    pub clip_guard: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            mode: LengthMode::Min,
            sad: None,
            clip_guard: 0.9,
        }
    }
}

/// A rendered mixture with its ground-truth stems.
///
/// `mixture` is the elementwise sum of `sources`, exactly: the stems are
/// scaled first and the mixture is summed from them. Emitted source i =
/// raw source · `applied_gains[i]` · `output_scale`.
#[derive(Debug, Clone)]
pub struct RenderedMixture {
    pub mixture: Waveform,
    pub sources: Vec<Waveform>,
    pub applied_gains: Vec<f64>,
    pub output_scale: f64,
}

/// Mean-square power over SAD-active samples when labels are given (whole
/// signal when no label overlaps), otherwise over all samples.
pub fn speech_power(w: &Waveform, labels: Option<&SadLabels>) -> f64 {
    let rate = w.sample_rate_hz() as f64;
    if let Some(labels) = labels {
        let (mut sum, mut n) = (0.0f64, 0usize);
        for &(lo, hi) in labels.intervals() {
            let a = ((lo * rate).round() as usize).min(w.len());
            let b = ((hi * rate).round() as usize).min(w.len());
            for s in &w.samples()[a..b] {
                sum += s * s;
                n += 1;
            }
        }
        if n > 0 {
            return sum / n as f64;
        }
    }
    if w.is_empty() {
        return 0.0;
    }
    w.samples().iter().map(|s| s * s).sum::<f64>() / w.len() as f64
}

/// Render one mixture with default options (min mode, full-RMS speech
/// power, 0.9 clip guard).
pub fn render(
    spec: &MixtureSpec,
    audio: &dyn AudioResolver,
    mode: LengthMode,
) -> Result<RenderedMixture> {
    render_with_options(
        spec,
        audio,
        &RenderOptions {
            mode,
            ..RenderOptions::default()
        },
    )
}

pub fn render_with_options(
    spec: &MixtureSpec,
    audio: &dyn AudioResolver,
    opts: &RenderOptions,
) -> Result<RenderedMixture> {
    let w1 = audio.resolve(&spec.utt1)?;
    let w2 = audio.resolve(&spec.utt2)?;
    if w1.sample_rate_hz() != w2.sample_rate_hz() {
        return Err(Error::Config(format!(
            "source sample rates differ: {} vs {}",
            w1.sample_rate_hz(),
            w2.sample_rate_hz()
        )));
    }

    // Reconcile lengths first so gains derive from the audio that is
    // actually mixed.
    let out_len = match opts.mode {
        LengthMode::Min => w1.len().min(w2.len()),
        LengthMode::Max => w1.len().max(w2.len()),
    };
    if out_len == 0 {
        return Err(Error::DegenerateInput("empty source audio".into()));
    }
    let reconcile = |w: &Waveform| -> Vec<f64> {
        let mut x = w.samples()[..w.len().min(out_len)].to_vec();
        x.resize(out_len, 0.0);
        x
    };
    let x1 = reconcile(&w1);
    let x2 = reconcile(&w2);

    // Speech-level power over the source's own (unpadded) extent.
    let rate = w1.sample_rate_hz();
    let power = |x: &[f64], orig_len: usize, utt: &str| -> Result<f64> {
        let own = Waveform::from_finite(x[..orig_len.min(out_len)].to_vec(), rate);
        let labels = opts
            .sad
            .as_ref()
            .map(|params| energy_sad_labels(&own, params));
        let p = speech_power(&own, labels.as_ref());
        if p <= 0.0 {
            return Err(Error::DegenerateInput(format!(
                "{utt} has no signal energy after length reconciliation"
            )));
        }
        Ok(p)
    };
    let p1 = power(&x1, w1.len(), &spec.utt1)?;
    let p2 = power(&x2, w2.len(), &spec.utt2)?;

    // g_i puts scaled speech power at 10^(snr_i/10), so the pairwise ratio
    // meets snr1 - snr2 exactly.
    let g1 = 10f64.powf(spec.snr1_db / 20.0) / p1.sqrt();
    let g2 = 10f64.powf(spec.snr2_db / 20.0) / p2.sqrt();

    let s1_raw: Vec<f64> = x1.iter().map(|s| s * g1).collect();
    let s2_raw: Vec<f64> = x2.iter().map(|s| s * g2).collect();
    let raw_peak = s1_raw
        .iter()
        .zip(&s2_raw)
        .fold(0.0f64, |p, (a, b)| p.max((a + b).abs()).max(a.abs()).max(b.abs()));
    let mut scale = if raw_peak > 0.0 {
        (opts.clip_guard / raw_peak).min(1.0)
    } else {
        1.0
    };

    // Rounding in the per-sample products can leave the final peak a hair
    // above the guard; nudge the scale down until it holds.
    let (s1, s2, mixture) = loop {
        let s1: Vec<f64> = s1_raw.iter().map(|s| s * scale).collect();
        let s2: Vec<f64> = s2_raw.iter().map(|s| s * scale).collect();
        let mix: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + b).collect();
        let peak = mix
            .iter()
            .chain(&s1)
            .chain(&s2)
            .fold(0.0f64, |p, s| p.max(s.abs()));
        if peak <= opts.clip_guard || scale == 0.0 {
            break (s1, s2, mix);
        }
        scale *= 1.0 - 1e-12;
    };

    Ok(RenderedMixture {
        mixture: Waveform::from_finite(mixture, rate),
        sources: vec![
            Waveform::from_finite(s1, rate),
            Waveform::from_finite(s2, rate),
        ],
        applied_gains: vec![g1, g2],
        output_scale: scale,
    })
}

fn ref_stem(utt_ref: &str) -> &str {
    let base = utt_ref.rsplit(['/', '\\']).next().unwrap_or(utt_ref);
    base.strip_suffix(".wav").unwrap_or(base)
}

/// `<utt1_id>_<snr1>_<utt2_id>_<snr2>`, SNRs with the same 6 decimals as
/// the mixture list.
pub fn mixture_name(spec: &MixtureSpec) -> String {
    format!(
        "{}_{:.6}_{}_{:.6}",
        ref_stem(&spec.utt1),
        spec.snr1_db,
        ref_stem(&spec.utt2),
        spec.snr2_db
    )
}

/// Write `<outdir>/{mix,s1,s2}/<mixname>.wav`.
pub fn write_rendered(
    outdir: &Path,
    mixname: &str,
    rendered: &RenderedMixture,
    format: SampleFormat,
) -> Result<()> {
    for (sub, w) in [
        ("mix", &rendered.mixture),
        ("s1", &rendered.sources[0]),
        ("s2", &rendered.sources[1]),
    ] {
        let dir = outdir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_wav(&dir.join(format!("{mixname}.wav")), w, format)?;
    }
    Ok(())
}

pub const METADATA_HEADER: &str =
    "mixname\tutt1\tutt2\tsnr1_db\tsnr2_db\tgain1\tgain2\toutput_scale\tmode\tlen_samples\n";

/// One metadata TSV row for a rendered mixture.
pub fn metadata_row(spec: &MixtureSpec, rendered: &RenderedMixture, mode: LengthMode) -> String {
    format!(
        "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.12e}\t{:.12e}\t{:.12e}\t{}\t{}\n",
        mixture_name(spec),
        spec.utt1,
        spec.utt2,
        spec.snr1_db,
        spec.snr2_db,
        rendered.applied_gains[0],
        rendered.applied_gains[1],
        rendered.output_scale,
        mode.as_str(),
        rendered.mixture.len()
    )
}
