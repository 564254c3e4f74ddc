//! Permutation-resolved separation metrics: scale-invariant SDR per source
//! and improvement over the unprocessed mixture, with dataset aggregation.
//!
//! The scale-invariant variant projects the estimate onto the reference
//! (gain only, no distortion filter), so values are close to but not
//! numerically interchangeable with BSS-eval SDR.

use itertools::Itertools;

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::separate::MAX_PERMUTATION_SOURCES;

/// Cap applied to all SDR values to keep reports finite.
pub const SDR_CAP_DB: f64 = 100.0;

/// Scale-invariant SDR in dB: project `est` onto `ref`, compare projected
/// energy to residual energy. Capped to ±100 dB.
pub fn si_sdr(reference: &Waveform, est: &Waveform) -> Result<f64> {
    if reference.len() != est.len() {
        return Err(Error::Geometry(format!(
            "length mismatch: reference {} vs estimate {}",
            reference.len(),
            est.len()
        )));
    }
    let r = reference.samples();
    let e = est.samples();
    let ref_energy: f64 = r.iter().map(|v| v * v).sum();
    if ref_energy == 0.0 {
        return Err(Error::DegenerateInput("zero reference signal".into()));
    }
    if e.iter().all(|&v| v == 0.0) {
        return Ok(-SDR_CAP_DB);
    }
    let dot: f64 = e.iter().zip(r).map(|(a, b)| a * b).sum();
    let alpha = dot / ref_energy;
    let signal: f64 = alpha * alpha * ref_energy;
    let noise: f64 = e
        .iter()
        .zip(r)
        .map(|(a, b)| {
            let d = a - alpha * b;
            d * d
        })
        .sum();
    if noise == 0.0 {
        return Ok(SDR_CAP_DB);
    }
    if signal == 0.0 {
        return Ok(-SDR_CAP_DB);
    }
    Ok((10.0 * (signal / noise).log10()).clamp(-SDR_CAP_DB, SDR_CAP_DB))
}

/// Per-mixture evaluation result.
#[derive(Debug, Clone)]
pub struct EvalRow {
    pub mix_id: String,
    /// perm[s] is the estimate index assigned to reference s.
    pub perm: Vec<usize>,
    pub sdr_per_source: Vec<f64>,
    pub sdr_mean: f64,
    pub sdri_mean: f64,
}

/// Evaluate one mixture: choose the estimate permutation that maximizes
/// mean SI-SDR, then report per-source SDR and improvement over the
/// mixture itself.
///
/// All signals are truncated to the shortest length; a mismatch beyond 1%
/// of that length is an error.
pub fn eval_separation(
    mix_id: &str,
    refs: &[Waveform],
    ests: &[Waveform],
    mix: &Waveform,
) -> Result<EvalRow> {
    if refs.len() != ests.len() {
        return Err(Error::Config(format!(
            "{} references but {} estimates",
            refs.len(),
            ests.len()
        )));
    }
    let s = refs.len();
    if s == 0 {
        return Err(Error::Config("no sources to evaluate".into()));
    }
    if s > MAX_PERMUTATION_SOURCES {
        return Err(Error::SizeLimit(s, MAX_PERMUTATION_SOURCES));
    }

    let min_len = refs
        .iter()
        .chain(ests)
        .chain(std::iter::once(mix))
        .map(Waveform::len)
        .min()
        .unwrap();
    let max_len = refs
        .iter()
        .chain(ests)
        .chain(std::iter::once(mix))
        .map(Waveform::len)
        .max()
        .unwrap();
    if min_len == 0 {
        return Err(Error::DegenerateInput("empty signal in evaluation".into()));
    }
    if (max_len - min_len) as f64 > 0.01 * min_len as f64 {
        return Err(Error::Geometry(format!(
            "length mismatch beyond 1%: {min_len} vs {max_len} samples"
        )));
    }
    let cut = |w: &Waveform| w.slice(0, min_len);
    let refs: Vec<Waveform> = refs.iter().map(&cut).collect();
    let ests: Vec<Waveform> = ests.iter().map(&cut).collect();
    let mix = cut(mix);

    // SDR for every (ref, est) pairing, then exhaustive permutation search.
    let mut table = vec![vec![0.0f64; s]; s];
    for (ri, r) in refs.iter().enumerate() {
        for (ei, e) in ests.iter().enumerate() {
            table[ri][ei] = si_sdr(r, e)?;
        }
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for perm in (0..s).permutations(s) {
        let mean = (0..s).map(|ri| table[ri][perm[ri]]).sum::<f64>() / s as f64;
        if best.as_ref().map_or(true, |(_, m)| mean > *m) {
            best = Some((perm, mean));
        }
    }
    let (perm, sdr_mean) = best.unwrap();

    let sdr_per_source: Vec<f64> = (0..s).map(|ri| table[ri][perm[ri]]).collect();
    let mut sdri_sum = 0.0;
    for (ri, r) in refs.iter().enumerate() {
        sdri_sum += sdr_per_source[ri] - si_sdr(r, &mix)?;
    }
    Ok(EvalRow {
        mix_id: mix_id.to_string(),
        perm,
        sdr_per_source,
        sdr_mean,
        sdri_mean: sdri_sum / s as f64,
    })
}

/// Aggregate statistics over per-mixture SDR improvements.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

/// Mean, median, and population standard deviation of `sdri_mean`.
pub fn aggregate(rows: &[EvalRow]) -> Aggregate {
    if rows.is_empty() {
        return Aggregate {
            count: 0,
            mean: 0.0,
            median: 0.0,
            std: 0.0,
        };
    }
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r.sdri_mean).sum::<f64>() / n;
    let var = rows
        .iter()
        .map(|r| (r.sdri_mean - mean).powi(2))
        .sum::<f64>()
        / n;
    let mut sorted: Vec<f64> = rows.iter().map(|r| r.sdri_mean).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    Aggregate {
        count: rows.len(),
        mean,
        median,
        std: var.sqrt(),
    }
}

fn render_report(rows: &[EvalRow], sep: char) -> String {
    let mut out = String::new();
    let join = |parts: &[String]| parts.join(&sep.to_string());
    out.push_str(&join(&[
        "mix_id".into(),
        "perm".into(),
        "sdr_per_source".into(),
        "sdr_mean".into(),
        "sdri_mean".into(),
    ]));
    out.push('\n');
    for r in rows {
        out.push_str(&join(&[
            r.mix_id.clone(),
            r.perm.iter().map(|p| p.to_string()).join(","),
            r.sdr_per_source.iter().map(|v| format!("{v:.4}")).join(","),
            format!("{:.4}", r.sdr_mean),
            format!("{:.4}", r.sdri_mean),
        ]));
        out.push('\n');
    }
    let agg = aggregate(rows);
    out.push_str(&format!(
        "# aggregate{sep}count={}{sep}mean={:.4}{sep}median={:.4}{sep}std={:.4}\n",
        agg.count, agg.mean, agg.median, agg.std
    ));
    out
}

/// Per-mixture rows plus a trailing `#`-prefixed summary line.
pub fn report_to_tsv(rows: &[EvalRow]) -> String {
    render_report(rows, '\t')
}

pub fn report_to_csv(rows: &[EvalRow]) -> String {
    render_report(rows, ';')
}
