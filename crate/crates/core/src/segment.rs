//! Single-speaker segmentation: transcript-intersection and dual-channel
//! energy variants, refined by energy-based speech activity detection and a
//! minimum-length filter.
//!
//! The reference SAD is frame-energy hysteresis; an external SAD can supply
//! decisions instead through [`SadLabels`], loaded from a TSV of
//! `start_s <TAB> end_s` speech intervals.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::audio::Waveform;
use crate::error::{Error, Result};

/// One transcript annotation: a speaker marked active on a recording.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSegment {
    pub speaker: String,
    pub recording: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl AnnotationSegment {
    fn validate(&self) -> Result<()> {
        if !(self.start_s >= 0.0 && self.start_s < self.end_s) {
            return Err(Error::Config(format!(
                "annotation for {}/{} has invalid bounds [{}, {}]",
                self.recording, self.speaker, self.start_s, self.end_s
            )));
        }
        Ok(())
    }
}

/// Which pipeline produced a candidate segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentSource {
    Transcript,
    Energy,
}

impl fmt::Display for SegmentSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentSource::Transcript => write!(f, "transcript"),
            SegmentSource::Energy => write!(f, "energy"),
        }
    }
}

/// A candidate single-speaker segment.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSegment {
    pub recording: String,
    pub speaker: String,
    pub start_s: f64,
    pub end_s: f64,
    pub source: SegmentSource,
}

impl CandidateSegment {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    /// `<speaker>_<recording>_<start-ms>_<end-ms>`
    pub fn utt_id(&self) -> String {
        format!(
            "{}_{}_{}_{}",
            self.speaker,
            self.recording,
            (self.start_s * 1000.0).round() as i64,
            (self.end_s * 1000.0).round() as i64
        )
    }
}

/// Maximal intervals covered by exactly one speaker's annotations and no
/// other speaker's. Output is sorted by start time and disjoint.
pub fn single_speaker_regions(
    annotations: &[AnnotationSegment],
    recording: &str,
) -> Result<Vec<CandidateSegment>> {
    for a in annotations {
        a.validate()?;
        if a.recording != recording {
            return Err(Error::Config(format!(
                "annotation for recording {} passed while segmenting {}",
                a.recording, recording
            )));
        }
    }

    // Sweep over elementary intervals between annotation boundaries.
    let mut bounds: Vec<f64> = annotations
        .iter()
        .flat_map(|a| [a.start_s, a.end_s])
        .collect();
    bounds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    bounds.dedup();

    let mut regions: Vec<CandidateSegment> = Vec::new();
    for win in bounds.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        let mid = 0.5 * (lo + hi);
        let speakers: BTreeSet<&str> = annotations
            .iter()
            .filter(|a| a.start_s <= mid && mid < a.end_s)
            .map(|a| a.speaker.as_str())
            .collect();
        if speakers.len() != 1 {
            continue;
        }
        let speaker = *speakers.iter().next().unwrap();
        match regions.last_mut() {
            Some(last) if last.speaker == speaker && last.end_s == lo => last.end_s = hi,
            _ => regions.push(CandidateSegment {
                recording: recording.to_string(),
                speaker: speaker.to_string(),
                start_s: lo,
                end_s: hi,
                source: SegmentSource::Transcript,
            }),
        }
    }
    Ok(regions)
}

/// Dual-channel energy segmentation: frames where the target channel is
/// above `energy_floor_db` (relative to the target channel's peak) and the
/// target/other energy ratio exceeds `ratio_min_db`, merged into intervals.
#[allow(clippy::too_many_arguments)]
pub fn energy_regions(
    target_ch: &Waveform,
    other_ch: &Waveform,
    recording: &str,
    speaker: &str,
    energy_floor_db: f64,
    ratio_min_db: f64,
    frame_s: f64,
) -> Result<Vec<CandidateSegment>> {
    if target_ch.sample_rate_hz() != other_ch.sample_rate_hz() {
        return Err(Error::Config(format!(
            "channel sample rates differ: {} vs {}",
            target_ch.sample_rate_hz(),
            other_ch.sample_rate_hz()
        )));
    }
    let rate = target_ch.sample_rate_hz() as f64;
    let frame_len = (frame_s * rate).round() as usize;
    if frame_len == 0 {
        return Err(Error::Config(format!("frame of {frame_s} s is empty")));
    }
    if target_ch.len().abs_diff(other_ch.len()) > frame_len {
        return Err(Error::Config(format!(
            "channel lengths differ by more than one frame: {} vs {}",
            target_ch.len(),
            other_ch.len()
        )));
    }

    let peak = target_ch.peak();
    if peak == 0.0 {
        return Ok(Vec::new());
    }
    let floor_power = peak * peak * 10f64.powf(energy_floor_db / 10.0);
    let ratio_min = 10f64.powf(ratio_min_db / 10.0);

    let num_frames = target_ch.len().min(other_ch.len()) / frame_len;
    let mut active = vec![false; num_frames];
    for (t, flag) in active.iter_mut().enumerate() {
        let lo = t * frame_len;
        let e_t = mean_square(&target_ch.samples()[lo..lo + frame_len]);
        let e_o = mean_square(&other_ch.samples()[lo..lo + frame_len]);
        *flag = e_t > floor_power && e_t > e_o * ratio_min;
    }

    let mut out = Vec::new();
    for (lo, hi) in flag_runs(&active) {
        out.push(CandidateSegment {
            recording: recording.to_string(),
            speaker: speaker.to_string(),
            start_s: lo as f64 * frame_len as f64 / rate,
            end_s: hi as f64 * frame_len as f64 / rate,
            source: SegmentSource::Energy,
        });
    }
    Ok(out)
}

fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64
}

/// Half-open index runs of `true` flags.
fn flag_runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, flags.len()));
    }
    runs
}

/// Parameters for the reference energy SAD.
#[derive(Debug, Clone)]
pub struct SadParams {
    /// Analysis frame length in seconds.
    pub frame_s: f64,
    /// Frame step in seconds.
    pub step_s: f64,
    /// Speech-on threshold, dB relative to the waveform peak.
    pub on_db: f64,
    /// Speech-off threshold, dB relative to the waveform peak.
    pub off_db: f64,
    /// Non-speech gaps shorter than this are bridged into the surrounding
    /// speech rather than ending it.
    pub hangover_s: f64,
    /// Pauses at least this long split a region into separate utterances.
    pub min_pause_s: f64,
}

impl Default for SadParams {
    fn default() -> Self {
        Self {
            frame_s: 0.025,
            step_s: 0.010,
            on_db: -35.0,
            off_db: -45.0,
            hangover_s: 0.2,
            min_pause_s: 0.3,
        }
    }
}

/// Speech-active intervals on a recording's timeline, sorted and disjoint.
#[derive(Debug, Clone, Default)]
pub struct SadLabels {
    intervals: Vec<(f64, f64)>,
}

impl SadLabels {
    pub fn from_intervals(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        intervals.retain(|(lo, hi)| hi > lo);
        intervals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
        for (lo, hi) in intervals {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0) {
                return Err(Error::Config(format!("invalid SAD interval [{lo}, {hi}]")));
            }
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        Ok(Self { intervals: merged })
    }

    /// Load from a TSV of `start_s <TAB> end_s` lines.
    pub fn from_tsv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut intervals = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split('\t');
            let parse = |s: Option<&str>, what: &str| -> Result<f64> {
                s.and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse {
                        path: path.to_path_buf(),
                        line: idx + 1,
                        reason: format!("expected {what}"),
                    })
            };
            let lo = parse(it.next(), "start_s")?;
            let hi = parse(it.next(), "end_s")?;
            intervals.push((lo, hi));
        }
        Self::from_intervals(intervals)
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Active intervals clipped to `[lo, hi]`.
    fn clipped(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        self.intervals
            .iter()
            .filter_map(|&(a, b)| {
                let (a, b) = (a.max(lo), b.min(hi));
                (b > a).then_some((a, b))
            })
            .collect()
    }
}

/// Frame-energy hysteresis SAD over a whole waveform.
///
/// A frame turns speech-on at `on_db` and off below `off_db`, both relative
/// to the waveform peak; gaps shorter than `hangover_s` are bridged.
pub fn energy_sad_labels(w: &Waveform, params: &SadParams) -> SadLabels {
    let rate = w.sample_rate_hz() as f64;
    let frame_len = ((params.frame_s * rate).round() as usize).max(1);
    let step = ((params.step_s * rate).round() as usize).max(1);
    let peak = w.peak();
    if peak == 0.0 || w.len() < frame_len {
        return SadLabels::default();
    }
    let on_power = peak * peak * 10f64.powf(params.on_db / 10.0);
    let off_power = peak * peak * 10f64.powf(params.off_db / 10.0);

    let num_frames = (w.len() - frame_len) / step + 1;
    let mut flags = vec![false; num_frames];
    let mut active = false;
    for (t, flag) in flags.iter_mut().enumerate() {
        let lo = t * step;
        let e = mean_square(&w.samples()[lo..lo + frame_len]);
        if e >= on_power {
            active = true;
        } else if e < off_power {
            active = false;
        }
        *flag = active;
    }

    // Bridge short gaps.
    let max_gap = (params.hangover_s / params.step_s).round() as usize;
    let runs = flag_runs(&flags);
    for win in runs.windows(2) {
        let gap = win[1].0 - win[0].1;
        if gap > 0 && gap < max_gap {
            flags[win[0].1..win[1].0].fill(true);
        }
    }

    let intervals = flag_runs(&flags)
        .into_iter()
        .map(|(lo, hi)| (lo as f64 * step as f64 / rate, hi as f64 * step as f64 / rate))
        .collect();
    SadLabels::from_intervals(intervals).expect("frame times are finite")
}

/// Refine regions with the reference energy SAD: silent stretches are
/// removed and pauses of at least `params.min_pause_s` split a region.
pub fn sad_refine(
    w: &Waveform,
    regions: &[CandidateSegment],
    params: &SadParams,
) -> Vec<CandidateSegment> {
    let labels = energy_sad_labels(w, params);
    sad_refine_with_labels(regions, &labels, params.min_pause_s)
}

/// Same refinement driven by externally supplied speech labels.
pub fn sad_refine_with_labels(
    regions: &[CandidateSegment],
    labels: &SadLabels,
    min_pause_s: f64,
) -> Vec<CandidateSegment> {
    let mut out = Vec::new();
    for region in regions {
        let speech = labels.clipped(region.start_s, region.end_s);
        let mut current: Option<(f64, f64)> = None;
        for (lo, hi) in speech {
            match current {
                Some((s, e)) if lo - e < min_pause_s => current = Some((s, hi)),
                Some((s, e)) => {
                    out.push(region_part(region, s, e));
                    current = Some((lo, hi));
                }
                None => current = Some((lo, hi)),
            }
        }
        if let Some((s, e)) = current {
            out.push(region_part(region, s, e));
        }
    }
    out
}

fn region_part(region: &CandidateSegment, start_s: f64, end_s: f64) -> CandidateSegment {
    CandidateSegment {
        recording: region.recording.clone(),
        speaker: region.speaker.clone(),
        start_s,
        end_s,
        source: region.source,
    }
}

/// Keep only segments of at least `min_s` seconds (inclusive).
pub fn length_filter(segments: &[CandidateSegment], min_s: f64) -> Vec<CandidateSegment> {
    segments
        .iter()
        .filter(|s| s.duration_s() >= min_s)
        .cloned()
        .collect()
}

/// Default minimum utterance length in seconds.
pub const DEFAULT_MIN_SEGMENT_S: f64 = 1.3;

#[derive(Debug, Deserialize)]
struct JsonAnnotation {
    speaker: String,
    start_s: f64,
    end_s: f64,
}

/// Read a per-recording JSON annotation file: an array of
/// `{"speaker", "start_s", "end_s"}` objects.
pub fn read_annotations_json(path: &Path, recording: &str) -> Result<Vec<AnnotationSegment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: Vec<JsonAnnotation> =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    let anns: Vec<AnnotationSegment> = raw
        .into_iter()
        .map(|a| AnnotationSegment {
            speaker: a.speaker,
            recording: recording.to_string(),
            start_s: a.start_s,
            end_s: a.end_s,
        })
        .collect();
    for a in &anns {
        a.validate()?;
    }
    Ok(anns)
}

/// Read a multi-recording TSV annotation file:
/// `recording <TAB> speaker <TAB> start_s <TAB> end_s`.
pub fn read_annotations_tsv(path: &Path) -> Result<Vec<AnnotationSegment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut anns = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: format!("bad {what}: {s:?}"),
            })
        };
        let ann = AnnotationSegment {
            recording: fields[0].trim().to_string(),
            speaker: fields[1].trim().to_string(),
            start_s: num(fields[2], "start_s")?,
            end_s: num(fields[3], "end_s")?,
        };
        ann.validate()?;
        anns.push(ann);
    }
    Ok(anns)
}

/// Render segments as `utt_id \t recording \t speaker \t start_s \t end_s`.
pub fn segments_to_tsv(segments: &[CandidateSegment]) -> String {
    let mut out = String::new();
    for s in segments {
        out.push_str(&format!(
            "{}\t{}\t{}\t{:.3}\t{:.3}\n",
            s.utt_id(),
            s.recording,
            s.speaker,
            s.start_s,
            s.end_s
        ));
    }
    out
}

/// Parse the segment TSV written by [`segments_to_tsv`]. The `source` of
/// parsed segments is reported as `Transcript`.
pub fn read_segments_tsv(path: &Path) -> Result<Vec<CandidateSegment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut segments = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: format!("expected 5 tab-separated fields, got {}", fields.len()),
            });
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: format!("bad {what}: {s:?}"),
            })
        };
        segments.push(CandidateSegment {
            recording: fields[1].trim().to_string(),
            speaker: fields[2].trim().to_string(),
            start_s: num(fields[3], "start_s")?,
            end_s: num(fields[4], "end_s")?,
            source: SegmentSource::Transcript,
        });
    }
    Ok(segments)
}
