//! Dataset statistics: single-speaker corpus summaries and mixture-list
//! usage profiles, rendered as plain-text tables or TSV.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::pair::MixtureSpec;
use crate::segment::CandidateSegment;

/// Corpus-level summary of a segment set.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub num_speakers: usize,
    pub num_utterances: usize,
    pub total_hours: f64,
    pub utts_per_speaker_mean: f64,
    pub length_mean_s: f64,
    pub length_std_s: f64,
    pub minutes_per_speaker_mean: f64,
}

/// Compute corpus statistics; an empty input yields a zeroed report.
pub fn corpus_stats(segments: &[CandidateSegment]) -> CorpusStats {
    if segments.is_empty() {
        return CorpusStats {
            num_speakers: 0,
            num_utterances: 0,
            total_hours: 0.0,
            utts_per_speaker_mean: 0.0,
            length_mean_s: 0.0,
            length_std_s: 0.0,
            minutes_per_speaker_mean: 0.0,
        };
    }
    let mut per_speaker_s: BTreeMap<&str, f64> = BTreeMap::new();
    let mut total_s = 0.0;
    let mut sum_sq = 0.0;
    for s in segments {
        let d = s.duration_s();
        total_s += d;
        sum_sq += d * d;
        *per_speaker_s.entry(s.speaker.as_str()).or_insert(0.0) += d;
    }
    let n = segments.len() as f64;
    let mean = total_s / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let k = per_speaker_s.len();
    CorpusStats {
        num_speakers: k,
        num_utterances: segments.len(),
        total_hours: total_s / 3600.0,
        utts_per_speaker_mean: n / k as f64,
        length_mean_s: mean,
        length_std_s: var.sqrt(),
        minutes_per_speaker_mean: total_s / 60.0 / k as f64,
    }
}

/// Usage profile of a mixture list.
#[derive(Debug, Clone)]
pub struct UsageStats {
    pub num_mixes: usize,
    /// Usage count per utterance reference.
    pub utt_usage: BTreeMap<String, u32>,
    /// usage count → number of utterances at that count.
    pub usage_histogram: BTreeMap<u32, usize>,
    pub min_usage: u32,
    pub max_usage: u32,
    pub mean_usage: f64,
    /// Usage count per speaker, when a speaker mapping was supplied.
    pub speaker_usage: Option<BTreeMap<String, u32>>,
    /// Repetition count per unordered speaker pair.
    pub speaker_pair_counts: Option<BTreeMap<(String, String), u32>>,
}

/// Compute usage statistics over a mixture list. With `speakers` (utterance
/// reference → speaker), speaker-level histograms and pair repetitions are
/// included; any unmapped reference is an error.
pub fn usage_stats(
    mixes: &[MixtureSpec],
    speakers: Option<&BTreeMap<String, String>>,
) -> Result<UsageStats> {
    let mut utt_usage: BTreeMap<String, u32> = BTreeMap::new();
    for m in mixes {
        *utt_usage.entry(m.utt1.clone()).or_insert(0) += 1;
        *utt_usage.entry(m.utt2.clone()).or_insert(0) += 1;
    }
    let mut usage_histogram: BTreeMap<u32, usize> = BTreeMap::new();
    for &c in utt_usage.values() {
        *usage_histogram.entry(c).or_insert(0) += 1;
    }
    let (min_usage, max_usage) = (
        utt_usage.values().min().copied().unwrap_or(0),
        utt_usage.values().max().copied().unwrap_or(0),
    );
    let mean_usage = if utt_usage.is_empty() {
        0.0
    } else {
        2.0 * mixes.len() as f64 / utt_usage.len() as f64
    };

    let (speaker_usage, speaker_pair_counts) = match speakers {
        None => (None, None),
        Some(map) => {
            let speaker_of = |utt: &str| -> Result<&str> {
                map.get(utt)
                    .map(String::as_str)
                    .ok_or_else(|| Error::Mapping(format!("no speaker known for {utt}")))
            };
            let mut per_speaker: BTreeMap<String, u32> = BTreeMap::new();
            let mut pairs: BTreeMap<(String, String), u32> = BTreeMap::new();
            for m in mixes {
                let s1 = speaker_of(&m.utt1)?;
                let s2 = speaker_of(&m.utt2)?;
                *per_speaker.entry(s1.to_string()).or_insert(0) += 1;
                *per_speaker.entry(s2.to_string()).or_insert(0) += 1;
                let key = if s1 <= s2 {
                    (s1.to_string(), s2.to_string())
                } else {
                    (s2.to_string(), s1.to_string())
                };
                *pairs.entry(key).or_insert(0) += 1;
            }
            (Some(per_speaker), Some(pairs))
        }
    };

    Ok(UsageStats {
        num_mixes: mixes.len(),
        utt_usage,
        usage_histogram,
        min_usage,
        max_usage,
        mean_usage,
        speaker_usage,
        speaker_pair_counts,
    })
}

// Durations render to 0.01 s, hours to 0.1 h.

/// Plain-text corpus table.
pub fn corpus_table(s: &CorpusStats) -> String {
    format!(
        "speakers              {}\n\
         utterances            {}\n\
         utts/speaker mean     {:.2}\n\
         utt length mean (s)   {:.2}\n\
         utt length std (s)    {:.2}\n\
         speech/speaker (min)  {:.2}\n\
         total speech (h)      {:.1}\n",
        s.num_speakers,
        s.num_utterances,
        s.utts_per_speaker_mean,
        s.length_mean_s,
        s.length_std_s,
        s.minutes_per_speaker_mean,
        s.total_hours
    )
}

/// Corpus stats as `key <TAB> value` rows.
pub fn corpus_tsv(s: &CorpusStats) -> String {
    format!(
        "speakers\t{}\nutterances\t{}\nutts_per_speaker_mean\t{:.2}\nutt_length_mean_s\t{:.2}\nutt_length_std_s\t{:.2}\nspeech_per_speaker_min\t{:.2}\ntotal_speech_h\t{:.1}\n",
        s.num_speakers,
        s.num_utterances,
        s.utts_per_speaker_mean,
        s.length_mean_s,
        s.length_std_s,
        s.minutes_per_speaker_mean,
        s.total_hours
    )
}

/// Plain-text usage table.
pub fn usage_table(s: &UsageStats) -> String {
    let mut out = format!(
        "mixtures              {}\n\
         utterances used       {}\n\
         usage min             {}\n\
         usage max             {}\n\
         usage mean            {:.2}\n",
        s.num_mixes,
        s.utt_usage.len(),
        s.min_usage,
        s.max_usage,
        s.mean_usage
    );
    let hist = s
        .usage_histogram
        .iter()
        .map(|(usage, count)| format!("{usage}:{count}"))
        .collect::<Vec<_>>()
        .join(" ");
    out.push_str(&format!("usage histogram       {hist}\n"));
    if let Some(pairs) = &s.speaker_pair_counts {
        let max_rep = pairs.values().max().copied().unwrap_or(0);
        out.push_str(&format!(
            "speaker pairs         {}\nmax pair repetition   {}\n",
            pairs.len(),
            max_rep
        ));
    }
    out
}

/// Usage stats as `key <TAB> value` rows, histogram flattened.
pub fn usage_tsv(s: &UsageStats) -> String {
    let mut out = format!(
        "mixtures\t{}\nutterances_used\t{}\nusage_min\t{}\nusage_max\t{}\nusage_mean\t{:.2}\n",
        s.num_mixes,
        s.utt_usage.len(),
        s.min_usage,
        s.max_usage,
        s.mean_usage
    );
    for (usage, count) in &s.usage_histogram {
        out.push_str(&format!("usage_histogram_{usage}\t{count}\n"));
    }
    if let Some(pairs) = &s.speaker_pair_counts {
        out.push_str(&format!("speaker_pairs\t{}\n", pairs.len()));
        out.push_str(&format!(
            "max_pair_repetition\t{}\n",
            pairs.values().max().copied().unwrap_or(0)
        ));
    }
    out
}
