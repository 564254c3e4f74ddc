//! Subcommand implementations.
//!
//! Every subcommand resolves its parameters as: built-in default, then config
//! file value, then command-line flag (flags win). Randomized stages draw
//! their seeds from the single run seed via named sub-streams, so one seed
//! reproduces the whole pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;

use overmix::audio::SampleFormat;
use overmix::metrics;
use overmix::mix::{
    metadata_row, mixture_name, render_with_options, write_rendered, AudioResolver, DirResolver,
    LengthMode, RenderOptions, SegmentResolver, METADATA_HEADER,
};
use overmix::pair::{
    assign_snrs, generate_with_trace, mixture_list_to_string, read_mixture_list, retarget_channel,
    split_speakers, trace_to_tsv, ChannelMap, MixtureSpec, SplitSizes, UtteranceRecord,
    DEFAULT_CV_MIXES, DEFAULT_TEST_MIXES, DEFAULT_TRAIN_MIXES,
};
use overmix::segment::{
    energy_regions, energy_sad_labels, length_filter, read_annotations_json, read_annotations_tsv,
    read_segments_tsv, sad_refine_with_labels, segments_to_tsv, single_speaker_regions,
    AnnotationSegment, CandidateSegment, SadLabels, SadParams, DEFAULT_MIN_SEGMENT_S,
};
use overmix::separate::{
    apply_masks_len, ideal_masks, read_mask_tensor, write_estimates, MaskKind, SourceMagnitudes,
};
use overmix::stats::{corpus_stats, corpus_table, corpus_tsv, usage_stats, usage_table, usage_tsv};
use overmix::stft::stft;
use overmix::verify::{
    enroll, read_scores_tsv, report_to_tsv, score, verify_with_scores, EmbeddingParams,
    ScoredSegment, DEFAULT_MIN_ENROLL_S,
};
use overmix::{read_wav, seed::substream, Error, Result, Waveform};

use crate::config::Config;
use crate::util::{manifest_for_dir, manifest_for_file, wav_stems, write_text_atomic, Manifest};

/// Options resolved once for the whole run.
pub struct Globals {
    pub seed: u64,
    pub jobs: Option<usize>,
    pub sample_rate_hz: Option<u32>,
}

fn parse_format(s: &str) -> Result<SampleFormat> {
    match s {
        "int16" => Ok(SampleFormat::Int16),
        "float32" => Ok(SampleFormat::Float32),
        other => Err(Error::Config(format!(
            "unknown sample format {other:?} (expected int16 or float32)"
        ))),
    }
}

fn resolve_f64(flag: Option<f64>, cfg: &Config, section: &str, key: &str, default: f64) -> Result<f64> {
    Ok(flag.or(cfg.f64(section, key)?).unwrap_or(default))
}

// ---------------------------------------------------------------------------
// segment

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Directory of recording WAV files.
    #[arg(long)]
    pub recordings: PathBuf,
    /// Annotations: a TSV file (recording, speaker, start_s, end_s) or a
    /// directory of per-recording `<recording>.json` files.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Segmentation mode: `transcript` or `energy`.
    #[arg(long)]
    pub mode: Option<String>,
    /// Output segments TSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Minimum segment length in seconds.
    #[arg(long)]
    pub min_len: Option<f64>,
    /// Directory of external SAD label TSVs (`<recording>.tsv`); reference
    /// energy SAD is used when absent.
    #[arg(long)]
    pub sad_labels: Option<PathBuf>,
    /// Channel index to read from multi-channel recordings.
    #[arg(long)]
    pub channel: Option<usize>,
    /// Energy mode: channel carrying the target speaker.
    #[arg(long)]
    pub target_channel: Option<usize>,
    /// Energy mode: reference channel for the energy ratio.
    #[arg(long)]
    pub other_channel: Option<usize>,
    /// Energy mode: speaker label (defaults to the recording name).
    #[arg(long)]
    pub speaker: Option<String>,
}

fn sad_from_config(cfg: &Config) -> Result<SadParams> {
    let d = SadParams::default();
    Ok(SadParams {
        frame_s: resolve_f64(None, cfg, "segment", "frame_s", d.frame_s)?,
        step_s: resolve_f64(None, cfg, "segment", "step_s", d.step_s)?,
        on_db: resolve_f64(None, cfg, "segment", "on_db", d.on_db)?,
        off_db: resolve_f64(None, cfg, "segment", "off_db", d.off_db)?,
        hangover_s: resolve_f64(None, cfg, "segment", "hangover_s", d.hangover_s)?,
        min_pause_s: resolve_f64(None, cfg, "segment", "min_pause_s", d.min_pause_s)?,
    })
}

fn load_annotations(path: &Path) -> Result<BTreeMap<String, Vec<AnnotationSegment>>> {
    let mut by_rec: BTreeMap<String, Vec<AnnotationSegment>> = BTreeMap::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(path, e))?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("json"))
            .collect();
        entries.sort();
        for p in entries {
            let rec = p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::Config(format!("bad annotation file name {}", p.display())))?
                .to_string();
            by_rec.insert(rec.clone(), read_annotations_json(&p, &rec)?);
        }
    } else {
        for a in read_annotations_tsv(path)? {
            by_rec.entry(a.recording.clone()).or_default().push(a);
        }
    }
    Ok(by_rec)
}

fn labels_for(
    audio: &Waveform,
    recording: &str,
    sad_labels_dir: Option<&Path>,
    sad: &SadParams,
) -> Result<SadLabels> {
    match sad_labels_dir {
        Some(dir) => SadLabels::from_tsv(&dir.join(format!("{recording}.tsv"))),
        None => Ok(energy_sad_labels(audio, sad)),
    }
}

pub fn run_segment(args: &SegmentArgs, g: &Globals, cfg: &Config) -> Result<()> {
    let mode = args
        .mode
        .clone()
        .or_else(|| cfg.str("segment", "mode").map(String::from))
        .unwrap_or_else(|| "transcript".into());
    let min_len = resolve_f64(args.min_len, cfg, "segment", "min_len_s", DEFAULT_MIN_SEGMENT_S)?;
    let sad = sad_from_config(cfg)?;
    let channel = args.channel.or(cfg.usize("segment", "channel")?);

    let segments: Vec<CandidateSegment> = match mode.as_str() {
        "transcript" => {
            let ann_path = args.annotations.as_deref().ok_or_else(|| {
                Error::Config("transcript mode requires --annotations".into())
            })?;
            let by_rec = load_annotations(ann_path)?;
            let recs: Vec<(&String, &Vec<AnnotationSegment>)> = by_rec.iter().collect();
            let per_rec: Vec<Vec<CandidateSegment>> = recs
                .par_iter()
                .map(|(rec, anns)| {
                    let wav = args.recordings.join(format!("{rec}.wav"));
                    let audio = read_wav(&wav, channel)?;
                    let regions = single_speaker_regions(anns, rec)?;
                    let labels = labels_for(&audio, rec, args.sad_labels.as_deref(), &sad)?;
                    let refined = sad_refine_with_labels(&regions, &labels, sad.min_pause_s);
                    Ok(length_filter(&refined, min_len))
                })
                .collect::<Result<_>>()?;
            per_rec.into_iter().flatten().collect()
        }
        "energy" => {
            let target_ch = args
                .target_channel
                .or(cfg.usize("segment", "target_channel")?)
                .ok_or_else(|| Error::Config("energy mode requires --target-channel".into()))?;
            let other_ch = args
                .other_channel
                .or(cfg.usize("segment", "other_channel")?)
                .ok_or_else(|| Error::Config("energy mode requires --other-channel".into()))?;
            let floor_db = resolve_f64(None, cfg, "segment", "energy_floor_db", -40.0)?;
            let ratio_db = resolve_f64(None, cfg, "segment", "ratio_min_db", 6.0)?;
            let recs = wav_stems(&args.recordings)?;
            let per_rec: Vec<Vec<CandidateSegment>> = recs
                .par_iter()
                .map(|rec| {
                    let wav = args.recordings.join(format!("{rec}.wav"));
                    let target = read_wav(&wav, Some(target_ch))?;
                    let other = read_wav(&wav, Some(other_ch))?;
                    let speaker = args
                        .speaker
                        .clone()
                        .or_else(|| cfg.str("segment", "speaker").map(String::from))
                        .unwrap_or_else(|| rec.clone());
                    let regions = energy_regions(
                        &target, &other, rec, &speaker, floor_db, ratio_db, sad.frame_s,
                    )?;
                    let labels = labels_for(&target, rec, args.sad_labels.as_deref(), &sad)?;
                    let refined = sad_refine_with_labels(&regions, &labels, sad.min_pause_s);
                    Ok(length_filter(&refined, min_len))
                })
                .collect::<Result<_>>()?;
            per_rec.into_iter().flatten().collect()
        }
        other => {
            return Err(Error::Config(format!(
                "unknown segmentation mode {other:?} (expected transcript or energy)"
            )))
        }
    };

    write_text_atomic(&args.out, &segments_to_tsv(&segments))?;

    let mut m = Manifest::new("segment");
    m.put_path("recordings", &args.recordings);
    m.put_opt("annotations", args.annotations.as_deref().map(Path::display));
    m.put("mode", &mode);
    m.put("min_len_s", min_len);
    m.put("frame_s", sad.frame_s);
    m.put("step_s", sad.step_s);
    m.put("on_db", sad.on_db);
    m.put("off_db", sad.off_db);
    m.put("hangover_s", sad.hangover_s);
    m.put("min_pause_s", sad.min_pause_s);
    m.put_opt("sad_labels", args.sad_labels.as_deref().map(Path::display));
    m.put_opt("channel", channel);
    m.put("seed", g.seed);
    m.put("num_segments", segments.len());
    m.put_path("out", &args.out);
    m.write(&manifest_for_file(&args.out))
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Candidate segments TSV.
    #[arg(long)]
    pub segments: PathBuf,
    /// Directory of recording WAV files (unused with --scores).
    #[arg(long)]
    pub recordings: Option<PathBuf>,
    /// Cosine score threshold; segments scoring below it are rejected.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Minimum total enrollment speech per speaker, seconds.
    #[arg(long)]
    pub min_enroll: Option<f64>,
    /// External scores TSV (utt_id, score); skips embedding computation.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Output directory (report.tsv, kept.tsv).
    #[arg(long)]
    pub out: PathBuf,
    /// Channel index to read from multi-channel recordings.
    #[arg(long)]
    pub channel: Option<usize>,
}

pub fn run_verify(args: &VerifyArgs, g: &Globals, cfg: &Config) -> Result<()> {
    let threshold = args
        .threshold
        .or(cfg.f64("verify", "threshold")?)
        .ok_or_else(|| Error::Config("verify requires --threshold".into()))?;
    let min_enroll = resolve_f64(args.min_enroll, cfg, "verify", "min_enroll_s", DEFAULT_MIN_ENROLL_S)?;
    let params = EmbeddingParams {
        window_len: cfg.usize("verify", "window")?.unwrap_or(512),
        hop: cfg.usize("verify", "hop")?.unwrap_or(128),
    };
    let channel = args.channel.or(cfg.usize("verify", "channel")?);
    let segments = read_segments_tsv(&args.segments)?;

    let (kept, rejected) = if let Some(scores_path) = &args.scores {
        let scores = read_scores_tsv(scores_path)?;
        verify_with_scores(&segments, &scores, threshold)?
    } else {
        let recordings = args.recordings.as_deref().ok_or_else(|| {
            Error::Config("verify requires --recordings (or --scores)".into())
        })?;
        let resolver = SegmentResolver::new(recordings, &segments, channel, g.sample_rate_hz);
        let audio: Vec<(CandidateSegment, Waveform)> = segments
            .par_iter()
            .map(|s| Ok((s.clone(), resolver.resolve(&s.utt_id())?)))
            .collect::<Result<_>>()?;

        let mut by_speaker: BTreeMap<&str, Vec<(CandidateSegment, Waveform)>> = BTreeMap::new();
        for (s, w) in &audio {
            by_speaker
                .entry(s.speaker.as_str())
                .or_default()
                .push((s.clone(), w.clone()));
        }
        let speakers: Vec<(&str, Vec<(CandidateSegment, Waveform)>)> =
            by_speaker.into_iter().collect();
        let profiles = speakers
            .par_iter()
            .map(|(spk, segs)| enroll(spk, segs, min_enroll, &params))
            .collect::<Result<Vec<_>>>()?;
        let by_name: BTreeMap<&str, _> = profiles.iter().map(|p| (p.speaker.as_str(), p)).collect();

        let scored: Vec<ScoredSegment> = audio
            .par_iter()
            .map(|(seg, w)| {
                let profile = by_name.get(seg.speaker.as_str()).ok_or_else(|| {
                    Error::Config(format!("no enrolled profile for speaker {}", seg.speaker))
                })?;
                let s = score(profile, w, &params)?;
                Ok(ScoredSegment {
                    segment: seg.clone(),
                    score: s,
                    kept: s >= threshold,
                })
            })
            .collect::<Result<_>>()?;
        let (kept, rejected): (Vec<_>, Vec<_>) = scored.into_iter().partition(|s| s.kept);
        (kept, rejected)
    };

    let kept_segments: Vec<CandidateSegment> =
        kept.iter().map(|s| s.segment.clone()).collect();
    write_text_atomic(&args.out.join("report.tsv"), &report_to_tsv(&kept, &rejected))?;
    write_text_atomic(&args.out.join("kept.tsv"), &segments_to_tsv(&kept_segments))?;

    let mut m = Manifest::new("verify");
    m.put_path("segments", &args.segments);
    m.put_opt("recordings", args.recordings.as_deref().map(Path::display));
    m.put_opt("scores", args.scores.as_deref().map(Path::display));
    m.put("threshold", threshold);
    m.put("min_enroll_s", min_enroll);
    m.put("window", params.window_len);
    m.put("hop", params.hop);
    m.put_opt("channel", channel);
    m.put_opt("sample_rate_hz", g.sample_rate_hz);
    m.put("seed", g.seed);
    m.put("num_kept", kept.len());
    m.put("num_rejected", rejected.len());
    m.put_path("out", &args.out);
    m.write(&manifest_for_dir(&args.out))
}

// ---------------------------------------------------------------------------
// pair

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Verified segments TSV.
    #[arg(long)]
    pub segments: PathBuf,
    /// Output list file, or output directory with --split-cv/--split-test.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of mixtures (single-list mode).
    #[arg(long)]
    pub target: Option<usize>,
    /// Lower edge of the SNR spread, dB.
    #[arg(long)]
    pub snr_low: Option<f64>,
    /// Upper edge of the SNR spread, dB.
    #[arg(long)]
    pub snr_high: Option<f64>,
    /// Also write a pairing trace TSV next to each list.
    #[arg(long)]
    pub trace: bool,
    /// Speaker count for the validation split (enables split mode).
    #[arg(long)]
    pub split_cv: Option<usize>,
    /// Speaker count for the test split (enables split mode).
    #[arg(long)]
    pub split_test: Option<usize>,
    /// Mixture count for the train split.
    #[arg(long)]
    pub target_train: Option<usize>,
    /// Mixture count for the validation split.
    #[arg(long)]
    pub target_cv: Option<usize>,
    /// Mixture count for the test split.
    #[arg(long)]
    pub target_test: Option<usize>,
}

fn utterances_from_segments(segments: &[CandidateSegment]) -> Vec<UtteranceRecord> {
    segments
        .iter()
        .map(|s| UtteranceRecord::new(s.utt_id(), s.speaker.clone(), s.duration_s()))
        .collect()
}

fn paired_list(
    utts: &[UtteranceRecord],
    target: usize,
    snr_range: (f64, f64),
    pair_seed: u64,
    snr_seed: u64,
) -> Result<(Vec<MixtureSpec>, String)> {
    let (mixes, traces) = generate_with_trace(utts, target, pair_seed)?;
    let with_snrs = assign_snrs(&mixes, snr_seed, snr_range)?;
    Ok((with_snrs, trace_to_tsv(&traces)))
}

pub fn run_pair(args: &PairArgs, g: &Globals, cfg: &Config) -> Result<()> {
    let snr_low = resolve_f64(args.snr_low, cfg, "pair", "snr_low_db", 0.0)?;
    let snr_high = resolve_f64(args.snr_high, cfg, "pair", "snr_high_db", 5.0)?;
    let trace = args.trace || cfg.bool("pair", "trace")?.unwrap_or(false);
    let segments = read_segments_tsv(&args.segments)?;
    let utts = utterances_from_segments(&segments);

    let split_cv = args.split_cv.or(cfg.usize("pair", "cv_speakers")?);
    let split_test = args.split_test.or(cfg.usize("pair", "test_speakers")?);

    let mut m = Manifest::new("pair");
    m.put_path("segments", &args.segments);
    m.put("snr_low_db", snr_low);
    m.put("snr_high_db", snr_high);
    m.put("trace", trace);
    m.put("seed", g.seed);
    m.put("num_utterances", utts.len());
    m.put_path("out", &args.out);

    match (split_cv, split_test) {
        (None, None) => {
            let target = args
                .target
                .or(cfg.usize("pair", "target")?)
                .unwrap_or(DEFAULT_TRAIN_MIXES);
            let (list, trace_tsv) = paired_list(
                &utts,
                target,
                (snr_low, snr_high),
                substream(g.seed, "pair"),
                substream(g.seed, "snr"),
            )?;
            write_text_atomic(&args.out, &mixture_list_to_string(&list))?;
            if trace {
                let mut name = args.out.file_name().unwrap_or_default().to_os_string();
                name.push(".trace.tsv");
                write_text_atomic(&args.out.with_file_name(name), &trace_tsv)?;
            }
            m.put("target", target);
            m.write(&manifest_for_file(&args.out))
        }
        (Some(cv), Some(test)) => {
            if args.target.is_some() {
                return Err(Error::Config(
                    "split mode takes --target-train/--target-cv/--target-test, not --target"
                        .into(),
                ));
            }
            let speakers: Vec<String> = utts
                .iter()
                .map(|u| u.speaker.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let sizes = SplitSizes::with_train_remainder(speakers.len(), cv, test)?;
            let plan = split_speakers(&speakers, &sizes, substream(g.seed, "split"))?;

            let targets = [
                ("train", &plan.train, args.target_train
                    .or(cfg.usize("pair", "target_train")?)
                    .unwrap_or(DEFAULT_TRAIN_MIXES)),
                ("cv", &plan.cv, args.target_cv
                    .or(cfg.usize("pair", "target_cv")?)
                    .unwrap_or(DEFAULT_CV_MIXES)),
                ("test", &plan.test, args.target_test
                    .or(cfg.usize("pair", "target_test")?)
                    .unwrap_or(DEFAULT_TEST_MIXES)),
            ];
            for (name, members, target) in &targets {
                let set: BTreeSet<&str> = members.iter().map(String::as_str).collect();
                let subset: Vec<UtteranceRecord> = utts
                    .iter()
                    .filter(|u| set.contains(u.speaker.as_str()))
                    .cloned()
                    .collect();
                let (list, trace_tsv) = paired_list(
                    &subset,
                    *target,
                    (snr_low, snr_high),
                    substream(g.seed, &format!("pair.{name}")),
                    substream(g.seed, &format!("snr.{name}")),
                )?;
                write_text_atomic(&args.out.join(format!("{name}.lst")), &mixture_list_to_string(&list))?;
                if trace {
                    write_text_atomic(&args.out.join(format!("{name}.trace.tsv")), &trace_tsv)?;
                }
                m.put(&format!("target_{name}"), target);
                m.put(&format!("speakers_{name}"), members.len());
            }

            let mut splits = String::from("speaker\tsplit\n");
            let mut rows: Vec<(String, &str)> = Vec::new();
            for (name, members) in [("train", &plan.train), ("cv", &plan.cv), ("test", &plan.test)]
            {
                rows.extend(members.iter().map(|s| (s.clone(), name)));
            }
            rows.sort();
            for (speaker, split) in rows {
                splits.push_str(&format!("{speaker}\t{split}\n"));
            }
            write_text_atomic(&args.out.join("splits.tsv"), &splits)?;

            m.put("cv_speakers", cv);
            m.put("test_speakers", test);
            m.write(&manifest_for_dir(&args.out))
        }
        _ => Err(Error::Config(
            "split mode requires both --split-cv and --split-test".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// mix

#[derive(Debug, Args)]
pub struct MixArgs {
    /// Mixture list file.
    #[arg(long)]
    pub list: PathBuf,
    /// Output dataset directory (mix/, s1/, s2/).
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of per-utterance WAV files named by list reference.
    #[arg(long)]
    pub audio_dir: Option<PathBuf>,
    /// Segments TSV for cutting utterances out of recordings.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Directory of recording WAV files (with --segments).
    #[arg(long)]
    pub recordings: Option<PathBuf>,
    /// Length reconciliation: `min` truncates, `max` zero-pads.
    #[arg(long)]
    pub mode: Option<String>,
    /// Measure source power over SAD-active speech rather than all samples.
    #[arg(long)]
    pub sad: bool,
    /// Output sample encoding: `int16` or `float32`.
    #[arg(long)]
    pub format: Option<String>,
    /// Channel index to read from multi-channel source audio.
    #[arg(long)]
    pub channel: Option<usize>,
}

pub fn run_mix(args: &MixArgs, g: &Globals, cfg: &Config) -> Result<()> {
    let mode = LengthMode::parse(
        args.mode
            .as_deref()
            .or(cfg.str("mix", "mode"))
            .unwrap_or("min"),
    )?;
    let format = parse_format(
        args.format
            .as_deref()
            .or(cfg.str("mix", "format"))
            .unwrap_or("int16"),
    )?;
    let sad = args.sad || cfg.bool("mix", "sad")?.unwrap_or(false);
    let clip_guard = resolve_f64(None, cfg, "mix", "clip_guard", 0.9)?;
    let channel = args.channel.or(cfg.usize("mix", "channel")?);

    let resolver: Box<dyn AudioResolver> = match (&args.audio_dir, &args.segments) {
        (Some(dir), None) => Box::new(DirResolver::new(dir, channel, g.sample_rate_hz)),
        (None, Some(segments)) => {
            let recordings = args.recordings.as_deref().ok_or_else(|| {
                Error::Config("--segments requires --recordings".into())
            })?;
            let segs = read_segments_tsv(segments)?;
            Box::new(SegmentResolver::new(recordings, &segs, channel, g.sample_rate_hz))
        }
        _ => {
            return Err(Error::Config(
                "mix requires exactly one of --audio-dir or --segments".into(),
            ))
        }
    };

    let mixes = read_mixture_list(&args.list)?;
    let opts = RenderOptions {
        mode,
        sad: sad.then(SadParams::default),
        clip_guard,
    };
    let rows: Vec<String> = mixes
        .par_iter()
        .map(|spec| {
            let rendered = render_with_options(spec, resolver.as_ref(), &opts)?;
            write_rendered(&args.out, &mixture_name(spec), &rendered, format)?;
            Ok(metadata_row(spec, &rendered, mode))
        })
        .collect::<Result<_>>()?;

    let mut metadata = String::from(METADATA_HEADER);
    metadata.extend(rows);
    write_text_atomic(&args.out.join("metadata.tsv"), &metadata)?;

    let mut m = Manifest::new("mix");
    m.put_path("list", &args.list);
    m.put_opt("audio_dir", args.audio_dir.as_deref().map(Path::display));
    m.put_opt("segments", args.segments.as_deref().map(Path::display));
    m.put_opt("recordings", args.recordings.as_deref().map(Path::display));
    m.put("mode", mode.as_str());
    m.put("format", format_name(format));
    m.put("sad", sad);
    m.put("clip_guard", clip_guard);
    m.put_opt("channel", channel);
    m.put_opt("sample_rate_hz", g.sample_rate_hz);
    m.put("seed", g.seed);
    m.put("num_mixtures", mixes.len());
    m.put_path("out", &args.out);
    m.write(&manifest_for_dir(&args.out))
}

fn format_name(f: SampleFormat) -> &'static str {
    match f {
        SampleFormat::Int16 => "int16",
        SampleFormat::Float32 => "float32",
    }
}

// ---------------------------------------------------------------------------
// separate

#[derive(Debug, Args)]
pub struct SeparateArgs {
    /// Dataset directory with mix/, s1/, s2/.
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory (est1/, est2/).
    #[arg(long)]
    pub out: PathBuf,
    /// Oracle mask kind: `irm` or `ibm`.
    #[arg(long)]
    pub mask: Option<String>,
    /// Directory of externally computed mask tensors (`<mixname>.mask`).
    #[arg(long)]
    pub mask_dir: Option<PathBuf>,
    /// STFT window length in samples.
    #[arg(long)]
    pub window: Option<usize>,
    /// STFT hop in samples.
    #[arg(long)]
    pub hop: Option<usize>,
    /// Output sample encoding: `int16` or `float32`.
    #[arg(long)]
    pub format: Option<String>,
}

pub fn run_separate(args: &SeparateArgs, g: &Globals, cfg: &Config) -> Result<()> {
    let kind = MaskKind::parse(
        args.mask
            .as_deref()
            .or(cfg.str("separate", "mask"))
            .unwrap_or("irm"),
    )?;
    let window = args.window.or(cfg.usize("separate", "window")?).unwrap_or(512);
    let hop = args.hop.or(cfg.usize("separate", "hop")?).unwrap_or(128);
    let format = parse_format(
        args.format
            .as_deref()
            .or(cfg.str("separate", "format"))
            .unwrap_or("float32"),
    )?;

    let stems = wav_stems(&args.data.join("mix"))?;
    stems
        .par_iter()
        .map(|stem| {
            let mix = read_wav(&args.data.join("mix").join(format!("{stem}.wav")), None)?;
            let spec_mix = stft(&mix, window, hop)?;
            let masks = match &args.mask_dir {
                Some(dir) => read_mask_tensor(&dir.join(format!("{stem}.mask")))?,
                None => {
                    let mut mags = Vec::new();
                    for sub in ["s1", "s2"] {
                        let s = read_wav(&args.data.join(sub).join(format!("{stem}.wav")), None)?;
                        mags.push(stft(&s, window, hop)?.magnitude());
                    }
                    let refs = SourceMagnitudes::new(spec_mix.magnitude(), mags)?;
                    ideal_masks(&refs, kind)
                }
            };
            let ests = apply_masks_len(&spec_mix, &masks, mix.len())?;
            write_estimates(&args.out, stem, &ests, format)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut m = Manifest::new("separate");
    m.put_path("data", &args.data);
    m.put("mask", kind_name(kind));
    m.put_opt("mask_dir", args.mask_dir.as_deref().map(Path::display));
    m.put("window", window);
    m.put("hop", hop);
    m.put("format", format_name(format));
    m.put("seed", g.seed);
    m.put("num_mixtures", stems.len());
    m.put_path("out", &args.out);
    m.write(&manifest_for_dir(&args.out))
}

fn kind_name(k: MaskKind) -> &'static str {
    match k {
        MaskKind::Irm => "irm",
        MaskKind::Ibm => "ibm",
    }
}

// ---------------------------------------------------------------------------
// eval

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset directory with mix/, s1/, s2/.
    #[arg(long)]
    pub data: PathBuf,
    /// Estimates directory with est1/, est2/.
    #[arg(long)]
    pub ests: PathBuf,
    /// Output report path.
    #[arg(long)]
    pub out: PathBuf,
    /// Write CSV instead of TSV.
    #[arg(long)]
    pub csv: bool,
}

pub fn run_eval(args: &EvalArgs, g: &Globals, cfg: &Config) -> Result<()> {
    let csv = args.csv || cfg.bool("eval", "csv")?.unwrap_or(false);
    let stems = wav_stems(&args.data.join("mix"))?;
    let rows: Vec<metrics::EvalRow> = stems
        .par_iter()
        .map(|stem| {
            let file = format!("{stem}.wav");
            let mix = read_wav(&args.data.join("mix").join(&file), None)?;
            let refs = vec![
                read_wav(&args.data.join("s1").join(&file), None)?,
                read_wav(&args.data.join("s2").join(&file), None)?,
            ];
            let ests = vec![
                read_wav(&args.ests.join("est1").join(&file), None)?,
                read_wav(&args.ests.join("est2").join(&file), None)?,
            ];
            metrics::eval_separation(stem, &refs, &ests, &mix)
        })
        .collect::<Result<_>>()?;

    let report = if csv {
        metrics::report_to_csv(&rows)
    } else {
        metrics::report_to_tsv(&rows)
    };
    write_text_atomic(&args.out, &report)?;

    let agg = metrics::aggregate(&rows);
    let mut m = Manifest::new("eval");
    m.put_path("data", &args.data);
    m.put_path("ests", &args.ests);
    m.put("csv", csv);
    m.put("seed", g.seed);
    m.put("num_mixtures", rows.len());
    m.put("sdr_mean", format!("{:.4}", agg.mean));
    m.put_path("out", &args.out);
    m.write(&manifest_for_file(&args.out))
}

// ---------------------------------------------------------------------------
// stats

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Segments TSV for corpus statistics.
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Mixture list for usage statistics.
    #[arg(long)]
    pub list: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Machine-readable TSV instead of the aligned table.
    #[arg(long)]
    pub tsv: bool,
}

pub fn run_stats(args: &StatsArgs, g: &Globals, cfg: &Config) -> Result<()> {
    let tsv = args.tsv || cfg.bool("stats", "tsv")?.unwrap_or(false);
    if args.segments.is_none() && args.list.is_none() {
        return Err(Error::Config(
            "stats requires --segments and/or --list".into(),
        ));
    }
    let mut text = String::new();
    let mut speaker_map: Option<BTreeMap<String, String>> = None;
    if let Some(path) = &args.segments {
        let segments = read_segments_tsv(path)?;
        speaker_map = Some(
            segments
                .iter()
                .map(|s| (s.utt_id(), s.speaker.clone()))
                .collect(),
        );
        let s = corpus_stats(&segments);
        text.push_str(&if tsv { corpus_tsv(&s) } else { corpus_table(&s) });
    }
    if let Some(path) = &args.list {
        let mixes = read_mixture_list(path)?;
        let s = usage_stats(&mixes, speaker_map.as_ref())?;
        text.push_str(&if tsv { usage_tsv(&s) } else { usage_table(&s) });
    }

    match &args.out {
        Some(out) => {
            write_text_atomic(out, &text)?;
            let mut m = Manifest::new("stats");
            m.put_opt("segments", args.segments.as_deref().map(Path::display));
            m.put_opt("list", args.list.as_deref().map(Path::display));
            m.put("tsv", tsv);
            m.put("seed", g.seed);
            m.put_path("out", out);
            m.write(&manifest_for_file(out))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// retarget

#[derive(Debug, Args)]
pub struct RetargetArgs {
    /// Mixture list file.
    #[arg(long)]
    pub list: PathBuf,
    /// Channel map TSV (`from\tto` substring rules); identity when absent.
    #[arg(long)]
    pub map: Option<PathBuf>,
    /// Output list file.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_retarget(args: &RetargetArgs, g: &Globals, _cfg: &Config) -> Result<()> {
    let mixes = read_mixture_list(&args.list)?;
    let map = match &args.map {
        Some(path) => ChannelMap::from_tsv(path)?,
        None => ChannelMap::Identity,
    };
    let out_list = retarget_channel(&mixes, &map)?;
    write_text_atomic(&args.out, &mixture_list_to_string(&out_list))?;

    let mut m = Manifest::new("retarget");
    m.put_path("list", &args.list);
    m.put_opt("map", args.map.as_deref().map(Path::display));
    m.put("seed", g.seed);
    m.put("num_mixtures", out_list.len());
    m.put_path("out", &args.out);
    m.write(&manifest_for_file(&args.out))
}
