//! Mask-based separation: oracle masks, mask application with mixture
//! phase, and the permutation-invariant training loss with exhaustive
//! permutation search.

use std::io::{Read, Write};
use std::path::Path;

use itertools::Itertools;
use ndarray::Array2;

use crate::audio::{write_wav, SampleFormat, Waveform};
use crate::error::{Error, Result};
use crate::stft::{istft, Spectrogram};

/// Largest source count for which S! permutations are searched.
pub const MAX_PERMUTATION_SOURCES: usize = 8;

const IRM_EPSILON: f64 = 1e-8;

/// Reference magnitudes for one mixture: the mixture magnitude and each
/// source's magnitude, all T × F and nonnegative.
#[derive(Debug, Clone)]
pub struct SourceMagnitudes {
    a_mix: Array2<f64>,
    a_srcs: Vec<Array2<f64>>,
}

impl SourceMagnitudes {
    pub fn new(a_mix: Array2<f64>, a_srcs: Vec<Array2<f64>>) -> Result<Self> {
        if a_srcs.is_empty() {
            return Err(Error::Geometry("no reference sources".into()));
        }
        for a in std::iter::once(&a_mix).chain(&a_srcs) {
            if a.dim() != a_mix.dim() {
                return Err(Error::Geometry(format!(
                    "magnitude geometry {:?} does not match mixture {:?}",
                    a.dim(),
                    a_mix.dim()
                )));
            }
            if a.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Geometry(
                    "magnitudes must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(Self { a_mix, a_srcs })
    }

    pub fn num_sources(&self) -> usize {
        self.a_srcs.len()
    }

    pub fn mixture(&self) -> &Array2<f64> {
        &self.a_mix
    }

    pub fn sources(&self) -> &[Array2<f64>] {
        &self.a_srcs
    }

    pub fn dim(&self) -> (usize, usize) {
        self.a_mix.dim()
    }
}

/// Per-source T × F masks with entries in [0, 1].
#[derive(Debug, Clone)]
pub struct MaskSet {
    masks: Vec<Array2<f64>>,
}

impl MaskSet {
    pub fn new(masks: Vec<Array2<f64>>) -> Result<Self> {
        let dim = masks
            .first()
            .ok_or_else(|| Error::Geometry("empty mask set".into()))?
            .dim();
        for m in &masks {
            if m.dim() != dim {
                return Err(Error::Geometry(format!(
                    "mask geometry {:?} does not match {:?}",
                    m.dim(),
                    dim
                )));
            }
            if m.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Geometry("mask entries must lie in [0, 1]".into()));
            }
        }
        Ok(Self { masks })
    }

    pub fn num_sources(&self) -> usize {
        self.masks.len()
    }

    pub fn masks(&self) -> &[Array2<f64>] {
        &self.masks
    }

    pub fn dim(&self) -> (usize, usize) {
        self.masks[0].dim()
    }
}

/// Oracle mask kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Ideal binary mask: 1 for the per-bin argmax source, ties to the
    /// lower source index.
    Ibm,
    /// Ideal ratio mask: A_s / (Σ A_s + ε); all-zero bins get 1/S each.
    Irm,
}

impl MaskKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ibm" => Ok(Self::Ibm),
            "irm" => Ok(Self::Irm),
            other => Err(Error::Config(format!(
                "unknown mask kind {other:?}, expected ibm or irm"
            ))),
        }
    }
}

/// Build oracle masks from reference magnitudes. Needs at least two
/// sources.
pub fn ideal_masks(refs: &SourceMagnitudes, kind: MaskKind) -> MaskSet {
    let s = refs.num_sources();
    assert!(s >= 2, "oracle masks need at least 2 sources");
    let (t, f) = refs.dim();
    let mut masks = vec![Array2::<f64>::zeros((t, f)); s];
    for ti in 0..t {
        for fi in 0..f {
            match kind {
                MaskKind::Irm => {
                    let sum: f64 = refs.a_srcs.iter().map(|a| a[[ti, fi]]).sum();
                    for (m, a) in masks.iter_mut().zip(&refs.a_srcs) {
                        m[[ti, fi]] = if sum == 0.0 {
                            1.0 / s as f64
                        } else {
                            a[[ti, fi]] / (sum + IRM_EPSILON)
                        };
                    }
                }
                MaskKind::Ibm => {
                    let mut best = 0usize;
                    for (si, a) in refs.a_srcs.iter().enumerate().skip(1) {
                        if a[[ti, fi]] > refs.a_srcs[best][[ti, fi]] {
                            best = si;
                        }
                    }
                    masks[best][[ti, fi]] = 1.0;
                }
            }
        }
    }
    MaskSet { masks }
}

/// Apply each mask to the mixture spectrogram (mixture phase kept) and
/// invert to time domain at the spectrogram's natural length.
pub fn apply_masks(mix: &Spectrogram, masks: &MaskSet) -> Result<Vec<Waveform>> {
    apply_masks_len(mix, masks, mix.natural_len())
}

/// [`apply_masks`] with an explicit output length. Samples past the frame
/// coverage are zero, so passing the original mixture length keeps estimates
/// aligned with the reference stems.
pub fn apply_masks_len(
    mix: &Spectrogram,
    masks: &MaskSet,
    out_len: usize,
) -> Result<Vec<Waveform>> {
    if masks.dim() != (mix.num_frames(), mix.num_bins()) {
        return Err(Error::Geometry(format!(
            "mask geometry {:?} does not match spectrogram ({}, {})",
            masks.dim(),
            mix.num_frames(),
            mix.num_bins()
        )));
    }
    masks
        .masks()
        .iter()
        .map(|m| istft(&mix.scale_by(m)?, out_len))
        .collect()
}

/// uPIT loss under a fixed permutation:
/// (1/B)·Σ_s ‖masks[perm[s]] ∘ A_mix − A_s‖²_F with B = S·T·F.
pub fn upit_loss(masks: &MaskSet, refs: &SourceMagnitudes, perm: &[usize]) -> f64 {
    let s = refs.num_sources();
    assert_eq!(masks.num_sources(), s, "mask and reference counts differ");
    assert_eq!(masks.dim(), refs.dim(), "mask and reference geometry differ");
    assert_eq!(perm.len(), s, "permutation length");
    assert!(
        (0..s).all(|i| perm.contains(&i)),
        "not a permutation of 0..{s}"
    );

    let (t, f) = refs.dim();
    let b = (s * t * f) as f64;
    let mut total = 0.0;
    for (si, a_ref) in refs.a_srcs.iter().enumerate() {
        let mask = &masks.masks[perm[si]];
        for ti in 0..t {
            for fi in 0..f {
                let d = mask[[ti, fi]] * refs.a_mix[[ti, fi]] - a_ref[[ti, fi]];
                total += d * d;
            }
        }
    }
    total / b
}

/// Exhaustive search over all S! permutations; returns the first minimizer
/// in lexicographic order and its loss.
pub fn best_permutation(masks: &MaskSet, refs: &SourceMagnitudes) -> Result<(Vec<usize>, f64)> {
    let s = refs.num_sources();
    if s > MAX_PERMUTATION_SOURCES {
        return Err(Error::SizeLimit(s, MAX_PERMUTATION_SOURCES));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for perm in (0..s).permutations(s) {
        let loss = upit_loss(masks, refs, &perm);
        if best.as_ref().map_or(true, |(_, l)| loss < *l) {
            best = Some((perm, loss));
        }
    }
    Ok(best.expect("at least one permutation"))
}

/// Write a mask tensor: header of three u32 (S, T, F) then S·T·F f32
/// values, all little-endian, row-major per source.
pub fn write_mask_tensor(path: &Path, masks: &MaskSet) -> Result<()> {
    let (t, f) = masks.dim();
    let mut buf =
        Vec::with_capacity(12 + masks.num_sources() * t * f * 4);
    for v in [masks.num_sources() as u32, t as u32, f as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for m in masks.masks() {
        for v in m.iter() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let mut file = tempfile::NamedTempFile::new_in(
        path.parent().unwrap_or_else(|| Path::new(".")),
    )
    .map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    file.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Read a mask tensor written by [`write_mask_tensor`] (or an external
/// estimator following the same layout).
pub fn read_mask_tensor(path: &Path) -> Result<MaskSet> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 {
        return Err(Error::format(path, "missing S,T,F header"));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let (s, t, f) = (dim(0), dim(1), dim(2));
    if s == 0 || t == 0 || f == 0 {
        return Err(Error::format(path, format!("degenerate dims {s}x{t}x{f}")));
    }
    let expect = 12 + 4 * s * t * f;
    if bytes.len() != expect {
        return Err(Error::format(
            path,
            format!("expected {expect} bytes for {s}x{t}x{f}, found {}", bytes.len()),
        ));
    }
    let mut masks = Vec::with_capacity(s);
    let mut off = 12;
    for _ in 0..s {
        let mut m = Array2::<f64>::zeros((t, f));
        for v in m.iter_mut() {
            *v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
            off += 4;
        }
        masks.push(m);
    }
    MaskSet::new(masks).map_err(|e| Error::format(path, e.to_string()))
}

/// Write separated estimates to `<outdir>/est1/`, `<outdir>/est2/`, ...
pub fn write_estimates(
    outdir: &Path,
    name: &str,
    estimates: &[Waveform],
    format: SampleFormat,
) -> Result<()> {
    for (i, w) in estimates.iter().enumerate() {
        let dir = outdir.join(format!("est{}", i + 1));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_wav(&dir.join(format!("{name}.wav")), w, format)?;
    }
    Ok(())
}
