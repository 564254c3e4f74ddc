//! Segment verification: score segments against enrolled speaker profiles
//! and reject low scorers.
//!
//! The reference scorer embeds audio as per-bin mean and standard deviation
//! of the log-magnitude STFT (length 2F) and compares by cosine similarity.
//! Precomputed scores from an external system can be used instead via
//! [`verify_with_scores`].

use std::collections::BTreeMap;
use std::path::Path;

use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::segment::CandidateSegment;
use crate::stft::stft;

/// Minimum enrollment audio per speaker in seconds.
pub const DEFAULT_MIN_ENROLL_S: f64 = 10.0;

/// STFT geometry for the reference embedding.
#[derive(Debug, Clone)]
pub struct EmbeddingParams {
    pub window_len: usize,
    pub hop: usize,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        Self {
            window_len: 512,
            hop: 128,
        }
    }
}

/// An enrolled speaker voice profile.
#[derive(Debug, Clone)]
pub struct SpeakerProfile {
    pub speaker: String,
    pub embedding: Vec<f64>,
    pub n_frames: usize,
}

const LOG_FLOOR: f64 = 1e-10;

/// Log-spectral statistics embedding: per-bin mean then per-bin standard
/// deviation of ln|X|, concatenated (length 2F).
pub fn embedding(w: &Waveform, params: &EmbeddingParams) -> Result<Vec<f64>> {
    if w.peak() == 0.0 {
        return Err(Error::DegenerateInput(
            "zero-energy audio has no spectral embedding".into(),
        ));
    }
    let spec = stft(w, params.window_len, params.hop)?;
    let mag = spec.magnitude();
    let (t, f) = (spec.num_frames(), spec.num_bins());
    let mut means = vec![0.0f64; f];
    let mut sq = vec![0.0f64; f];
    for ti in 0..t {
        for fi in 0..f {
            let v = mag[[ti, fi]].max(LOG_FLOOR).ln();
            means[fi] += v;
            sq[fi] += v * v;
        }
    }
    let tn = t as f64;
    let mut out = Vec::with_capacity(2 * f);
    for m in means.iter_mut() {
        *m /= tn;
        out.push(*m);
    }
    for fi in 0..f {
        let var = (sq[fi] / tn - means[fi] * means[fi]).max(0.0);
        out.push(var.sqrt());
    }
    Ok(out)
}

/// Build a speaker profile as the frame-weighted mean of per-segment
/// embeddings. Requires at least `min_total_s` seconds of audio.
pub fn enroll(
    speaker: &str,
    segments: &[(CandidateSegment, Waveform)],
    min_total_s: f64,
    params: &EmbeddingParams,
) -> Result<SpeakerProfile> {
    let total_s: f64 = segments.iter().map(|(_, w)| w.duration_s()).sum();
    if total_s < min_total_s {
        return Err(Error::Enrollment {
            speaker: speaker.to_string(),
            have_s: total_s,
            need_s: min_total_s,
        });
    }
    let dim = 2 * (params.window_len / 2 + 1);
    let mut acc = vec![0.0f64; dim];
    let mut n_frames = 0usize;
    for (_, w) in segments {
        let e = embedding(w, params)?;
        let frames = (w.len() - params.window_len) / params.hop + 1;
        for (a, v) in acc.iter_mut().zip(&e) {
            *a += v * frames as f64;
        }
        n_frames += frames;
    }
    for a in &mut acc {
        *a /= n_frames as f64;
    }
    Ok(SpeakerProfile {
        speaker: speaker.to_string(),
        embedding: acc,
        n_frames,
    })
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput("zero-norm embedding".into()));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Cosine similarity between the profile and the segment embedding.
pub fn score(profile: &SpeakerProfile, segment_audio: &Waveform, params: &EmbeddingParams) -> Result<f64> {
    let e = embedding(segment_audio, params)?;
    if e.len() != profile.embedding.len() {
        return Err(Error::Config(format!(
            "embedding length {} does not match profile length {}",
            e.len(),
            profile.embedding.len()
        )));
    }
    cosine(&profile.embedding, &e)
}

/// A segment with its verification score and decision.
#[derive(Debug, Clone)]
pub struct ScoredSegment {
    pub segment: CandidateSegment,
    pub score: f64,
    pub kept: bool,
}

/// Score every segment against its speaker's profile and partition by
/// `score >= threshold`. Returns (kept, rejected) in input order.
pub fn verify(
    profiles: &[SpeakerProfile],
    segments: &[(CandidateSegment, Waveform)],
    threshold: f64,
    params: &EmbeddingParams,
) -> Result<(Vec<ScoredSegment>, Vec<ScoredSegment>)> {
    let by_speaker: BTreeMap<&str, &SpeakerProfile> =
        profiles.iter().map(|p| (p.speaker.as_str(), p)).collect();
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for (seg, audio) in segments {
        let profile = by_speaker.get(seg.speaker.as_str()).ok_or_else(|| {
            Error::Config(format!("no enrolled profile for speaker {}", seg.speaker))
        })?;
        let s = score(profile, audio, params)?;
        push_decision(&mut kept, &mut rejected, seg.clone(), s, threshold);
    }
    Ok((kept, rejected))
}

/// Partition segments using externally computed scores keyed by utt_id.
pub fn verify_with_scores(
    segments: &[CandidateSegment],
    scores: &BTreeMap<String, f64>,
    threshold: f64,
) -> Result<(Vec<ScoredSegment>, Vec<ScoredSegment>)> {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for seg in segments {
        let id = seg.utt_id();
        let s = *scores
            .get(&id)
            .ok_or_else(|| Error::Mapping(format!("no external score for {id}")))?;
        push_decision(&mut kept, &mut rejected, seg.clone(), s, threshold);
    }
    Ok((kept, rejected))
}

fn push_decision(
    kept: &mut Vec<ScoredSegment>,
    rejected: &mut Vec<ScoredSegment>,
    segment: CandidateSegment,
    score: f64,
    threshold: f64,
) {
    let keep = score >= threshold;
    let scored = ScoredSegment {
        segment,
        score,
        kept: keep,
    };
    if keep {
        kept.push(scored);
    } else {
        rejected.push(scored);
    }
}

/// Read external scores: TSV of `utt_id <TAB> score`.
pub fn read_scores_tsv(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut scores = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: format!("expected 2 tab-separated fields, got {}", fields.len()),
            });
        }
        let value = fields[1].trim().parse::<f64>().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: format!("bad score: {:?}", fields[1]),
        })?;
        scores.insert(fields[0].trim().to_string(), value);
    }
    Ok(scores)
}

/// Render the verification report: `utt_id \t score \t kept|rejected`,
/// sorted by utt_id.
pub fn report_to_tsv(kept: &[ScoredSegment], rejected: &[ScoredSegment]) -> String {
    let mut rows: Vec<&ScoredSegment> = kept.iter().chain(rejected).collect();
    rows.sort_by_key(|s| s.segment.utt_id());
    let mut out = String::new();
    for s in rows {
        out.push_str(&format!(
            "{}\t{:.6}\t{}\n",
            s.segment.utt_id(),
            s.score,
            if s.kept { "kept" } else { "rejected" }
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::SegmentSource;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const RATE: u32 = 8000;

    /// Deterministic synthetic "speaker": a fixed set of partials plus a
    /// little seeded noise so the std statistics are informative.
    fn voice(freqs: &[(f64, f64)], dur_s: f64, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = (dur_s * RATE as f64) as usize;
        let x: Vec<f64> = (0..len)
            .map(|n| {
                let t = n as f64 / RATE as f64;
                let mut v: f64 = freqs
                    .iter()
                    .map(|&(f, a)| a * (2.0 * PI * f * t).sin())
                    .sum();
                v += rng.random_range(-1e-3..1e-3);
                v * 0.3
            })
            .collect();
        Waveform::new(x, RATE).unwrap()
    }

    const LOW_VOICE: &[(f64, f64)] = &[(200.0, 1.0), (400.0, 0.6), (600.0, 0.3)];
    const HIGH_VOICE: &[(f64, f64)] = &[(1500.0, 1.0), (2500.0, 0.6), (3300.0, 0.3)];

    fn seg(speaker: &str, idx: usize, dur_s: f64) -> CandidateSegment {
        CandidateSegment {
            recording: "rec1".into(),
            speaker: speaker.into(),
            start_s: idx as f64 * 20.0,
            end_s: idx as f64 * 20.0 + dur_s,
            source: SegmentSource::Transcript,
        }
    }

    #[test]
    fn self_score_is_near_one() {
        let params = EmbeddingParams::default();
        let audio = voice(LOW_VOICE, 12.0, 1);
        let profile = enroll(
            "low",
            &[(seg("low", 0, 12.0), audio.clone())],
            DEFAULT_MIN_ENROLL_S,
            &params,
        )
        .unwrap();
        let s = score(&profile, &audio, &params).unwrap();
        assert!(s >= 0.999, "self-score {s}");
    }

    #[test]
    fn silence_is_degenerate() {
        let params = EmbeddingParams::default();
        let profile = enroll(
            "low",
            &[(seg("low", 0, 12.0), voice(LOW_VOICE, 12.0, 1))],
            DEFAULT_MIN_ENROLL_S,
            &params,
        )
        .unwrap();
        let silence = Waveform::new(vec![0.0; 16000], RATE).unwrap();
        assert!(matches!(
            score(&profile, &silence, &params),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn insufficient_enrollment_rejected() {
        let params = EmbeddingParams::default();
        let err = enroll(
            "low",
            &[(seg("low", 0, 3.0), voice(LOW_VOICE, 3.0, 1))],
            DEFAULT_MIN_ENROLL_S,
            &params,
        )
        .unwrap_err();
        match err {
            Error::Enrollment { speaker, have_s, need_s } => {
                assert_eq!(speaker, "low");
                assert!((have_s - 3.0).abs() < 1e-9);
                assert_eq!(need_s, DEFAULT_MIN_ENROLL_S);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn profile_is_mean_of_equal_length_embeddings() {
        let params = EmbeddingParams::default();
        let a = voice(LOW_VOICE, 6.0, 1);
        let b = voice(LOW_VOICE, 6.0, 2);
        let e1 = embedding(&a, &params).unwrap();
        let e2 = embedding(&b, &params).unwrap();
        let profile = enroll(
            "low",
            &[(seg("low", 0, 6.0), a), (seg("low", 1, 6.0), b)],
            DEFAULT_MIN_ENROLL_S,
            &params,
        )
        .unwrap();
        for (p, (x, y)) in profile.embedding.iter().zip(e1.iter().zip(&e2)) {
            assert!((p - 0.5 * (x + y)).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_score_below_self_score_under_gain() {
        let params = EmbeddingParams::default();
        let low = enroll(
            "low",
            &[(seg("low", 0, 12.0), voice(LOW_VOICE, 12.0, 1))],
            DEFAULT_MIN_ENROLL_S,
            &params,
        )
        .unwrap();
        let high = enroll(
            "high",
            &[(seg("high", 0, 12.0), voice(HIGH_VOICE, 12.0, 2))],
            DEFAULT_MIN_ENROLL_S,
            &params,
        )
        .unwrap();
        for gain in [0.5, 1.0, 2.0] {
            let probe_raw = voice(LOW_VOICE, 2.0, 3);
            let probe = Waveform::new(
                probe_raw.samples().iter().map(|s| s * gain).collect(),
                RATE,
            )
            .unwrap();
            let self_s = score(&low, &probe, &params).unwrap();
            let cross_s = score(&high, &probe, &params).unwrap();
            assert!(
                self_s > cross_s,
                "gain {gain}: self {self_s} vs cross {cross_s}"
            );
        }
    }

    #[test]
    fn tonal_and_noise_embeddings_differ_in_low_bins() {
        let params = EmbeddingParams::default();
        let tone = voice(&[(300.0, 1.0)], 4.0, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Waveform::new(
            (0..32000).map(|_| rng.random_range(-0.3..0.3)).collect(),
            RATE,
        )
        .unwrap();
        let e_tone = embedding(&tone, &params).unwrap();
        let e_noise = embedding(&noise, &params).unwrap();

        // Mean-statistics prominence of the 300 Hz bin relative to each
        // signal's own spectral average.
        let f = params.window_len / 2 + 1;
        let bin = (300.0 / (RATE as f64 / params.window_len as f64)).round() as usize;
        let rel = |e: &[f64]| e[bin] - e[..f].iter().sum::<f64>() / f as f64;
        assert!(
            rel(&e_tone) > rel(&e_noise) + 1.0,
            "tone {} vs noise {}",
            rel(&e_tone),
            rel(&e_noise)
        );
    }

    #[test]
    fn verify_partitions_and_flags_mislabels() {
        let params = EmbeddingParams::default();
        let profiles = vec![
            enroll(
                "low",
                &[(seg("low", 0, 12.0), voice(LOW_VOICE, 12.0, 1))],
                DEFAULT_MIN_ENROLL_S,
                &params,
            )
            .unwrap(),
            enroll(
                "high",
                &[(seg("high", 0, 12.0), voice(HIGH_VOICE, 12.0, 2))],
                DEFAULT_MIN_ENROLL_S,
                &params,
            )
            .unwrap(),
        ];
        // Segment 1 is labeled "low" but carries the high voice.
        let segments = vec![
            (seg("low", 1, 2.0), voice(LOW_VOICE, 2.0, 5)),
            (seg("low", 2, 2.0), voice(HIGH_VOICE, 2.0, 6)),
            (seg("high", 3, 2.0), voice(HIGH_VOICE, 2.0, 7)),
        ];

        let (all, none) = verify(&profiles, &segments, -1.0, &params).unwrap();
        assert_eq!((all.len(), none.len()), (3, 0));
        let (none_kept, all_rejected) = verify(&profiles, &segments, 1.5, &params).unwrap();
        assert_eq!((none_kept.len(), all_rejected.len()), (0, 3));

        // Place the threshold between the observed cross- and self-scores.
        let scores: Vec<f64> = segments
            .iter()
            .map(|(s, w)| {
                let p = profiles.iter().find(|p| p.speaker == s.speaker).unwrap();
                score(p, w, &params).unwrap()
            })
            .collect();
        let threshold = 0.5 * (scores[1] + scores[0].min(scores[2]));
        let (kept, rejected) = verify(&profiles, &segments, threshold, &params).unwrap();
        assert_eq!(kept.len() + rejected.len(), segments.len());
        assert_eq!(rejected.len(), 1);
        assert_eq!(rejected[0].segment.utt_id(), segments[1].0.utt_id());
    }

    #[test]
    fn missing_profile_is_config_error() {
        let params = EmbeddingParams::default();
        let segments = vec![(seg("ghost", 0, 2.0), voice(LOW_VOICE, 2.0, 1))];
        assert!(matches!(
            verify(&[], &segments, 0.0, &params),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn external_scores_and_report_round_trip() {
        let segments = vec![seg("a", 0, 2.0), seg("b", 1, 2.0)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.tsv");
        std::fs::write(
            &path,
            format!(
                "{}\t0.9\n{}\t0.1\n",
                segments[0].utt_id(),
                segments[1].utt_id()
            ),
        )
        .unwrap();
        let scores = read_scores_tsv(&path).unwrap();
        let (kept, rejected) = verify_with_scores(&segments, &scores, 0.5).unwrap();
        assert_eq!((kept.len(), rejected.len()), (1, 1));
        assert_eq!(kept[0].segment.utt_id(), segments[0].utt_id());

        let report = report_to_tsv(&kept, &rejected);
        let lines: Vec<&str> = report.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().any(|l| l.ends_with("\tkept")));
        assert!(lines.iter().any(|l| l.ends_with("\trejected")));

        // A segment with no score is a mapping error.
        let missing = vec![seg("c", 2, 2.0)];
        assert!(matches!(
            verify_with_scores(&missing, &scores, 0.5),
            Err(Error::Mapping(_))
        ));
    }
}
