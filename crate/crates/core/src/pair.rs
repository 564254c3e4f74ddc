//! Mixture list generation: greedy utterance pairing under usage, speaker
//! diversity, and length-matching criteria, SNR assignment, speaker-disjoint
//! splits, and channel retargeting for parallel near/far sets.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default mixture counts per split.
pub const DEFAULT_TRAIN_MIXES: usize = 20000;
pub const DEFAULT_CV_MIXES: usize = 5000;
pub const DEFAULT_TEST_MIXES: usize = 4000;

/// A verified single-speaker utterance with pairing bookkeeping.
#[derive(Debug, Clone)]
pub struct UtteranceRecord {
    pub utt_id: String,
    pub speaker: String,
    pub length_s: f64,
    pub usage_count: u32,
    pub paired_speakers: BTreeSet<String>,
}

impl UtteranceRecord {
    pub fn new(utt_id: impl Into<String>, speaker: impl Into<String>, length_s: f64) -> Self {
        Self {
            utt_id: utt_id.into(),
            speaker: speaker.into(),
            length_s,
            usage_count: 0,
            paired_speakers: BTreeSet::new(),
        }
    }
}

/// One mixture: two utterance references with per-source gains in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub utt1: String,
    pub utt2: String,
    pub snr1_db: f64,
    pub snr2_db: f64,
}

/// Instrumented record of one pairing decision, for invariant audits.
#[derive(Debug, Clone)]
pub struct PairTrace {
    pub u1: String,
    pub u2: String,
    /// Global minimum usage count when u1 was selected.
    pub global_min_usage: u32,
    /// u1's usage count at selection (must equal the global minimum).
    pub u1_usage: u32,
    pub s1_size: usize,
    /// Relaxation index when the match happened.
    pub i_at_match: usize,
    pub s2_size: usize,
    pub s3_size: usize,
    pub s23_size: usize,
    /// paired_speakers resets performed for this u1.
    pub resets: usize,
    pub chosen_len_diff: f64,
    /// utt_ids of S2 ∩ S3 at match time.
    pub eligible: Vec<String>,
}

/// Generate `target_mixes` pairs with the greedy procedure. SNRs in the
/// output are zero; assign them with [`assign_snrs`].
///
/// The procedure is deterministic: ties on length or length difference
/// resolve to the lexicographically lowest utt_id, so `seed` does not
/// influence pairing. It is accepted for interface uniformity with the
/// other stages.
pub fn generate_mixture_list(
    utts: &[UtteranceRecord],
    target_mixes: usize,
    seed: u64,
) -> Result<Vec<MixtureSpec>> {
    Ok(generate_with_trace(utts, target_mixes, seed)?.0)
}

/// [`generate_mixture_list`] plus a per-pair trace.
pub fn generate_with_trace(
    utts: &[UtteranceRecord],
    target_mixes: usize,
    _seed: u64,
) -> Result<(Vec<MixtureSpec>, Vec<PairTrace>)> {
    if target_mixes == 0 {
        return Err(Error::Config("target_mixes must be at least 1".into()));
    }
    let mut seen = BTreeSet::new();
    for u in utts {
        if !(u.length_s.is_finite() && u.length_s > 0.0) {
            return Err(Error::Config(format!(
                "utterance {} has invalid length {}",
                u.utt_id, u.length_s
            )));
        }
        if !seen.insert(u.utt_id.as_str()) {
            return Err(Error::Config(format!("duplicate utt_id {}", u.utt_id)));
        }
    }
    let speakers: BTreeSet<&str> = utts.iter().map(|u| u.speaker.as_str()).collect();
    if speakers.len() < 2 {
        return Err(Error::Unsatisfiable(format!(
            "pairing needs at least 2 speakers, found {}",
            speakers.len()
        )));
    }

    // Lexicographic record order makes first-found argmax/argmin resolve
    // ties to the lowest utt_id.
    let mut recs: Vec<UtteranceRecord> = utts.to_vec();
    recs.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));

    let mut mixes = Vec::with_capacity(target_mixes);
    let mut traces = Vec::with_capacity(target_mixes);
    while mixes.len() < target_mixes {
        let min_usage = recs.iter().map(|r| r.usage_count).min().unwrap();
        let s1: Vec<usize> = (0..recs.len())
            .filter(|&j| recs[j].usage_count == min_usage)
            .collect();
        let u1 = *s1
            .iter()
            .reduce(|best, j| {
                if recs[*j].length_s > recs[*best].length_s {
                    j
                } else {
                    best
                }
            })
            .unwrap();

        let mut i = 0usize;
        let mut resets = 0usize;
        loop {
            let s2: Vec<usize> = (0..recs.len())
                .filter(|&j| recs[j].usage_count == min_usage + i as u32)
                .collect();
            let in_s3 = |j: usize| {
                j != u1
                    && recs[j].speaker != recs[u1].speaker
                    && !recs[u1].paired_speakers.contains(&recs[j].speaker)
            };
            let s3_size = (0..recs.len()).filter(|&j| in_s3(j)).count();
            let s23: Vec<usize> = s2.iter().copied().filter(|&j| in_s3(j)).collect();

            if !s23.is_empty() {
                let u2 = *s23
                    .iter()
                    .reduce(|best, j| {
                        let d_j = (recs[u1].length_s - recs[*j].length_s).abs();
                        let d_best = (recs[u1].length_s - recs[*best].length_s).abs();
                        if d_j < d_best {
                            j
                        } else {
                            best
                        }
                    })
                    .unwrap();
                traces.push(PairTrace {
                    u1: recs[u1].utt_id.clone(),
                    u2: recs[u2].utt_id.clone(),
                    global_min_usage: min_usage,
                    u1_usage: recs[u1].usage_count,
                    s1_size: s1.len(),
                    i_at_match: i,
                    s2_size: s2.len(),
                    s3_size,
                    s23_size: s23.len(),
                    resets,
                    chosen_len_diff: (recs[u1].length_s - recs[u2].length_s).abs(),
                    eligible: s23.iter().map(|&j| recs[j].utt_id.clone()).collect(),
                });
                mixes.push(MixtureSpec {
                    utt1: recs[u1].utt_id.clone(),
                    utt2: recs[u2].utt_id.clone(),
                    snr1_db: 0.0,
                    snr2_db: 0.0,
                });
                recs[u1].usage_count += 1;
                recs[u2].usage_count += 1;
                let spk2 = recs[u2].speaker.clone();
                recs[u1].paired_speakers.insert(spk2);
                let spk1 = recs[u1].speaker.clone();
                recs[u2].paired_speakers.insert(spk1);
                break;
            } else if s2.is_empty() {
                if resets > 0 {
                    return Err(Error::Unsatisfiable(format!(
                        "no eligible partner for {} even after relaxing pairing history",
                        recs[u1].utt_id
                    )));
                }
                recs[u1].paired_speakers.clear();
                resets += 1;
                i = 0;
            } else {
                i += 1;
            }
        }
    }
    Ok((mixes, traces))
}

/// Draw x ~ Uniform(low, high) per mixture and split it symmetrically:
/// snr1 = x/2, snr2 = −x/2.
pub fn assign_snrs(
    mixes: &[MixtureSpec],
    seed: u64,
    range_db: (f64, f64),
) -> Result<Vec<MixtureSpec>> {
    let (low, high) = range_db;
    if !(low.is_finite() && high.is_finite()) || low > high {
        return Err(Error::Config(format!(
            "invalid SNR range [{low}, {high}] dB"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(mixes
        .iter()
        .map(|m| {
            let x = if low == high {
                low
            } else {
                rng.random_range(low..high)
            };
            MixtureSpec {
                snr1_db: x / 2.0,
                snr2_db: -x / 2.0,
                ..m.clone()
            }
        })
        .collect())
}

/// Requested split sizes in speakers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub cv: usize,
    pub test: usize,
}

impl SplitSizes {
    /// cv and test fixed, train takes the remainder.
    pub fn with_train_remainder(total: usize, cv: usize, test: usize) -> Result<Self> {
        let used = cv.checked_add(test).filter(|&u| u <= total).ok_or_else(|| {
            Error::Config(format!(
                "cv {cv} + test {test} speakers exceed the {total} available"
            ))
        })?;
        Ok(Self {
            train: total - used,
            cv,
            test,
        })
    }
}

/// Disjoint speaker assignment per split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: Vec<String>,
    pub cv: Vec<String>,
    pub test: Vec<String>,
}

impl SplitPlan {
    pub fn is_disjoint(&self) -> bool {
        let mut all = BTreeSet::new();
        self.train
            .iter()
            .chain(&self.cv)
            .chain(&self.test)
            .all(|s| all.insert(s.as_str()))
    }
}

/// Deterministically shuffle speakers and cut test, cv, then train sets.
/// Input order does not matter; the speaker set and seed fix the plan.
pub fn split_speakers(speakers: &[String], sizes: &SplitSizes, seed: u64) -> Result<SplitPlan> {
    let mut pool: Vec<String> = speakers.to_vec();
    pool.sort();
    let before = pool.len();
    pool.dedup();
    if pool.len() != before {
        return Err(Error::Config("duplicate speakers in split input".into()));
    }
    let need = sizes.train + sizes.cv + sizes.test;
    if need > pool.len() {
        return Err(Error::Config(format!(
            "split sizes need {need} speakers, only {} available",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let test = pool[..sizes.test].to_vec();
    let cv = pool[sizes.test..sizes.test + sizes.cv].to_vec();
    let train = pool[sizes.test + sizes.cv..sizes.test + sizes.cv + sizes.train].to_vec();
    Ok(SplitPlan { train, cv, test })
}

/// Path rewrite rule for retargeting a mixture list to another microphone.
#[derive(Debug, Clone)]
pub enum ChannelMap {
    /// Leave every reference unchanged.
    Identity,
    /// Ordered substring rules; the first rule whose pattern occurs in the
    /// path is applied (first occurrence). A path no rule matches is an
    /// error.
    Rules(Vec<(String, String)>),
}

impl ChannelMap {
    /// Load rules from a TSV of `from <TAB> to` lines.
    pub fn from_tsv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rules = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 2 || fields[0].is_empty() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    reason: "expected `from <TAB> to` with nonempty pattern".into(),
                });
            }
            rules.push((fields[0].to_string(), fields[1].to_string()));
        }
        Ok(Self::Rules(rules))
    }

    pub fn rewrite(&self, path: &str) -> Result<String> {
        match self {
            ChannelMap::Identity => Ok(path.to_string()),
            ChannelMap::Rules(rules) => rules
                .iter()
                .find(|(from, _)| path.contains(from.as_str()))
                .map(|(from, to)| path.replacen(from.as_str(), to, 1))
                .ok_or_else(|| Error::Mapping(format!("no channel rule matches {path}"))),
        }
    }
}

/// Rewrite both utterance references of every mixture; pairs and SNRs are
/// untouched.
pub fn retarget_channel(mixes: &[MixtureSpec], map: &ChannelMap) -> Result<Vec<MixtureSpec>> {
    mixes
        .iter()
        .map(|m| {
            Ok(MixtureSpec {
                utt1: map.rewrite(&m.utt1)?,
                utt2: map.rewrite(&m.utt2)?,
                snr1_db: m.snr1_db,
                snr2_db: m.snr2_db,
            })
        })
        .collect()
}

/// Render the MERL-compatible list:
/// `<utt1> <snr1_db> <utt2> <snr2_db>` per line, SNRs with 6 decimals.
pub fn mixture_list_to_string(mixes: &[MixtureSpec]) -> String {
    let mut out = String::new();
    for m in mixes {
        out.push_str(&format!(
            "{} {:.6} {} {:.6}\n",
            m.utt1, m.snr1_db, m.utt2, m.snr2_db
        ));
    }
    out
}

/// Parse a MERL-compatible mixture list. References must not contain
/// whitespace.
pub fn read_mixture_list(path: &Path) -> Result<Vec<MixtureSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut mixes = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: format!("expected 4 space-separated fields, got {}", fields.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: format!("bad SNR value {s:?}"),
            })
        };
        mixes.push(MixtureSpec {
            utt1: fields[0].to_string(),
            utt2: fields[2].to_string(),
            snr1_db: num(fields[1])?,
            snr2_db: num(fields[3])?,
        });
    }
    Ok(mixes)
}

/// Render the pairing trace as TSV for offline auditing.
pub fn trace_to_tsv(traces: &[PairTrace]) -> String {
    let mut out = String::from(
        "pair\tu1\tu2\tglobal_min_usage\tu1_usage\ts1_size\ti_at_match\ts2_size\ts3_size\ts23_size\tresets\tchosen_len_diff\n",
    );
    for (idx, t) in traces.iter().enumerate() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.3}\n",
            idx,
            t.u1,
            t.u2,
            t.global_min_usage,
            t.u1_usage,
            t.s1_size,
            t.i_at_match,
            t.s2_size,
            t.s3_size,
            t.s23_size,
            t.resets,
            t.chosen_len_diff
        ));
    }
    out
}
