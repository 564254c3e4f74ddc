//! Acceptance suite. One test per criterion; each prints a single
//! `[acceptance] criterion N: PASS` line on success (visible with
//! `--nocapture`), and cargo reports the same pass/fail per test name.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use overmix::metrics::{eval_separation, si_sdr};
use overmix::mix::{render, AudioResolver, LengthMode};
use overmix::pair::{
    assign_snrs, generate_with_trace, mixture_list_to_string, split_speakers, MixtureSpec,
    SplitSizes, UtteranceRecord, DEFAULT_CV_MIXES, DEFAULT_TEST_MIXES, DEFAULT_TRAIN_MIXES,
};
use overmix::segment::{
    energy_regions, length_filter, sad_refine, segments_to_tsv, CandidateSegment, SadParams,
    SegmentSource,
};
use overmix::separate::{
    apply_masks_len, best_permutation, ideal_masks, upit_loss, MaskKind, MaskSet,
    SourceMagnitudes,
};
use overmix::stft::{istft, stft};
use overmix::{write_wav, Error, Result, SampleFormat, Waveform};

const WINDOW: usize = 512;
const HOP: usize = 128;
const RATE: u32 = 8000;

fn noise(rng: &mut ChaCha8Rng, len: usize, amp: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-amp..amp)).collect()
}

/// Sum of `comps` random-phase sinusoids with frequencies inside a band.
fn band_voice(rng: &mut ChaCha8Rng, len: usize, f_lo: f64, f_hi: f64, comps: usize) -> Vec<f64> {
    let mut parts = Vec::with_capacity(comps);
    for _ in 0..comps {
        let f = rng.random_range(f_lo..f_hi);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let amp = rng.random_range(0.5..1.0) / (comps as f64).sqrt();
        parts.push((f, phase, amp));
    }
    let mut out = vec![0.0; len];
    for (f, phase, amp) in parts {
        let step = std::f64::consts::TAU * f / RATE as f64;
        for (i, o) in out.iter_mut().enumerate() {
            *o += amp * (step * i as f64 + phase).sin();
        }
    }
    out
}

struct MapResolver(BTreeMap<String, Waveform>);

impl AudioResolver for MapResolver {
    fn resolve(&self, utt_ref: &str) -> Result<Waveform> {
        self.0
            .get(utt_ref)
            .cloned()
            .ok_or_else(|| Error::MissingAudio(utt_ref.to_string()))
    }
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_1_stft_round_trip() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    for case in 0..100 {
        let len = rng.random_range(4 * WINDOW..24000);
        let w = Waveform::new(noise(&mut rng, len, 1.0), RATE).unwrap();
        let s = stft(&w, WINDOW, HOP).unwrap();
        let y = istft(&s, w.len()).unwrap();

        // Interior: away from the first/last window where overlap-add
        // coverage is partial by construction.
        let lo = WINDOW;
        let hi = s.natural_len() - WINDOW;
        let mut err = 0.0f64;
        let mut refp = 0.0f64;
        for i in lo..hi {
            let d = y.samples()[i] - w.samples()[i];
            err += d * d;
            refp += w.samples()[i] * w.samples()[i];
        }
        let rel = (err / refp).sqrt();
        assert!(rel <= 1e-6, "case {case}: interior relative error {rel:e}");
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "round-trip took {elapsed:?}");
    println!("[acceptance] criterion 1 (stft round-trip, 100 waveforms, {elapsed:?}): PASS");
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_2_mixing_snr_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let mut bank = BTreeMap::new();
    for i in 0..60 {
        let len = rng.random_range((RATE as usize * 8 / 10)..(RATE as usize * 5 / 2));
        let scale = rng.random_range(0.05..0.6);
        let samples: Vec<f64> = noise(&mut rng, len, 1.0).iter().map(|s| s * scale).collect();
        bank.insert(format!("u{i:02}"), Waveform::new(samples, RATE).unwrap());
    }
    let resolver = MapResolver(bank);

    for case in 0..1000 {
        let a = rng.random_range(0..60usize);
        let b = (a + rng.random_range(1..60usize)) % 60;
        let x: f64 = rng.random_range(0.0..5.0);
        let spec = MixtureSpec {
            utt1: format!("u{a:02}"),
            utt2: format!("u{b:02}"),
            snr1_db: x / 2.0,
            snr2_db: -x / 2.0,
        };
        let r = render(&spec, &resolver, LengthMode::Min).unwrap();

        // Mixture equals the sum of emitted sources exactly.
        for i in 0..r.mixture.len() {
            let sum = r.sources[0].samples()[i] + r.sources[1].samples()[i];
            assert!(
                r.mixture.samples()[i] == sum,
                "case {case}: additivity violated at sample {i}"
            );
        }

        // Requested speech-level SNR achieved: per source (after removing
        // the joint output scale) and pairwise.
        let p1 = r.sources[0].samples().iter().map(|s| s * s).sum::<f64>()
            / r.sources[0].len() as f64;
        let p2 = r.sources[1].samples().iter().map(|s| s * s).sum::<f64>()
            / r.sources[1].len() as f64;
        let scale_db = 20.0 * r.output_scale.log10();
        let snr1 = 10.0 * p1.log10() - scale_db;
        let snr2 = 10.0 * p2.log10() - scale_db;
        assert!(
            (snr1 - spec.snr1_db).abs() <= 0.01,
            "case {case}: source 1 SNR {snr1} vs requested {}",
            spec.snr1_db
        );
        assert!(
            (snr2 - spec.snr2_db).abs() <= 0.01,
            "case {case}: source 2 SNR {snr2} vs requested {}",
            spec.snr2_db
        );
        let pairwise = 10.0 * (p1 / p2).log10();
        assert!(
            (pairwise - x).abs() <= 0.01,
            "case {case}: pairwise SNR {pairwise} vs requested {x}"
        );
    }
    println!("[acceptance] criterion 2 (mixing SNR fidelity, 1000 mixtures): PASS");
}

// ---------------------------------------------------------------------------

fn random_pair_corpus(seed: u64) -> Vec<UtteranceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_spk = rng.random_range(3..=50usize);
    let mut utts = Vec::new();
    for s in 0..n_spk {
        let n_utt = rng.random_range(1..=40usize);
        for u in 0..n_utt {
            utts.push(UtteranceRecord::new(
                format!("s{s:02}u{u:02}"),
                format!("s{s:02}"),
                rng.random_range(1.3..12.0),
            ));
        }
    }
    utts
}

#[test]
fn criterion_3_algorithm_conformance() {
    // (e) Hand-simulated 3-speaker trace.
    let hand = vec![
        UtteranceRecord::new("a1", "A", 3.0),
        UtteranceRecord::new("b1", "B", 2.0),
        UtteranceRecord::new("c1", "C", 1.9),
    ];
    let (mixes, _) = generate_with_trace(&hand, 3, 0).unwrap();
    let got: Vec<(&str, &str)> = mixes
        .iter()
        .map(|m| (m.utt1.as_str(), m.utt2.as_str()))
        .collect();
    assert_eq!(
        got,
        vec![("a1", "b1"), ("c1", "b1"), ("a1", "c1")],
        "hand trace mismatch"
    );

    for seed in 0..50u64 {
        let utts = random_pair_corpus(seed);
        let speakers: BTreeMap<&str, &str> = utts
            .iter()
            .map(|u| (u.utt_id.as_str(), u.speaker.as_str()))
            .collect();
        let target = (utts.len() / 2).clamp(20, 500);
        let (mixes, traces) = generate_with_trace(&utts, target, seed).unwrap();
        assert_eq!(mixes.len(), target);
        assert_eq!(traces.len(), target);

        // Independent replay of usage counts.
        let mut usage: BTreeMap<&str, u32> =
            utts.iter().map(|u| (u.utt_id.as_str(), 0)).collect();
        for (k, tr) in traces.iter().enumerate() {
            assert_eq!(mixes[k].utt1, tr.u1, "seed {seed} pair {k}");
            assert_eq!(mixes[k].utt2, tr.u2, "seed {seed} pair {k}");
            // (a) No same-speaker pair.
            assert_ne!(
                speakers[tr.u1.as_str()],
                speakers[tr.u2.as_str()],
                "seed {seed} pair {k}: same-speaker pair"
            );
            // (b) u1 from the global minimum-usage set, per replayed counts.
            let replay_min = *usage.values().min().unwrap();
            assert_eq!(
                tr.global_min_usage, replay_min,
                "seed {seed} pair {k}: trace min-usage disagrees with replay"
            );
            assert_eq!(
                usage[tr.u1.as_str()],
                replay_min,
                "seed {seed} pair {k}: u1 not at global minimum usage"
            );
            assert_eq!(tr.u1_usage, replay_min, "seed {seed} pair {k}");
            *usage.get_mut(tr.u1.as_str()).unwrap() += 1;
            *usage.get_mut(tr.u2.as_str()).unwrap() += 1;
        }

        // (c) Usage balance when every speaker has at least two utterances.
        let mut per_speaker: BTreeMap<&str, usize> = BTreeMap::new();
        for u in &utts {
            *per_speaker.entry(u.speaker.as_str()).or_insert(0) += 1;
        }
        if per_speaker.values().all(|&n| n >= 2) {
            let max = usage.values().max().unwrap();
            let min = usage.values().min().unwrap();
            assert!(
                max - min <= 2,
                "seed {seed}: usage spread {max}-{min} exceeds 2"
            );
        }

        // (d) Byte-identical output across repeated runs.
        let again = generate_with_trace(&utts, target, seed).unwrap().0;
        let snr1 = assign_snrs(&mixes, seed ^ 0xabcd, (0.0, 5.0)).unwrap();
        let snr2 = assign_snrs(&again, seed ^ 0xabcd, (0.0, 5.0)).unwrap();
        assert_eq!(
            mixture_list_to_string(&snr1),
            mixture_list_to_string(&snr2),
            "seed {seed}: repeated runs differ"
        );
    }
    println!("[acceptance] criterion 3 (algorithm conformance, 50 corpora): PASS");
}

// ---------------------------------------------------------------------------

/// All permutations of 0..s in lexicographic order, built recursively.
fn all_perms(s: usize) -> Vec<Vec<usize>> {
    fn rec(pool: &mut Vec<usize>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pool.is_empty() {
            out.push(cur.clone());
            return;
        }
        for i in 0..pool.len() {
            let v = pool.remove(i);
            cur.push(v);
            rec(pool, cur, out);
            cur.pop();
            pool.insert(i, v);
        }
    }
    let mut out = Vec::new();
    rec(&mut (0..s).collect(), &mut Vec::new(), &mut out);
    out
}

/// Scalar-loop brute-force uPIT loss, independent of the library internals.
fn naive_loss(masks: &[Array2<f64>], a_mix: &Array2<f64>, a_srcs: &[Array2<f64>], perm: &[usize]) -> f64 {
    let s_n = a_srcs.len();
    let (t_n, f_n) = a_mix.dim();
    let mut total = 0.0;
    for (s, src) in a_srcs.iter().enumerate() {
        for t in 0..t_n {
            for f in 0..f_n {
                let d = masks[perm[s]][(t, f)] * a_mix[(t, f)] - src[(t, f)];
                total += d * d;
            }
        }
    }
    total / (s_n * t_n * f_n) as f64
}

#[test]
fn criterion_4_upit_loss_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4004);
    for case in 0..200 {
        let s_n = rng.random_range(2..=3usize);
        let t_n = rng.random_range(1..=8usize);
        let f_n = rng.random_range(1..=8usize);
        let rand_mat = |rng: &mut ChaCha8Rng, hi: f64| {
            Array2::from_shape_fn((t_n, f_n), |_| rng.random_range(0.0..hi))
        };
        let a_mix = rand_mat(&mut rng, 2.0);
        let a_srcs: Vec<Array2<f64>> = (0..s_n).map(|_| rand_mat(&mut rng, 2.0)).collect();
        let mask_mats: Vec<Array2<f64>> = (0..s_n).map(|_| rand_mat(&mut rng, 1.0)).collect();
        let refs = SourceMagnitudes::new(a_mix.clone(), a_srcs.clone()).unwrap();
        let masks = MaskSet::new(mask_mats.clone()).unwrap();

        // Loss matches the scalar brute force under every permutation.
        for perm in all_perms(s_n) {
            let lib = upit_loss(&masks, &refs, &perm);
            let brute = naive_loss(&mask_mats, &a_mix, &a_srcs, &perm);
            assert!(
                (lib - brute).abs() <= 1e-12,
                "case {case} perm {perm:?}: {lib} vs {brute}"
            );
        }

        // best_permutation equals exhaustive enumeration (first minimum in
        // lexicographic order).
        let (best_perm, best_loss) = best_permutation(&masks, &refs).unwrap();
        let mut enum_best: Option<(Vec<usize>, f64)> = None;
        for perm in all_perms(s_n) {
            let l = upit_loss(&masks, &refs, &perm);
            if enum_best.as_ref().map_or(true, |(_, bl)| l < *bl) {
                enum_best = Some((perm, l));
            }
        }
        let (enum_perm, enum_loss) = enum_best.unwrap();
        assert_eq!(best_perm, enum_perm, "case {case}: permutation mismatch");
        assert!(best_loss == enum_loss, "case {case}: loss mismatch");

        // Permutation symmetry, exact: relabeling the masks and composing
        // the permutation accordingly leaves every summand unchanged.
        let rho = {
            let p = all_perms(s_n);
            p[rng.random_range(0..p.len())].clone()
        };
        let relabeled =
            MaskSet::new(rho.iter().map(|&j| mask_mats[j].clone()).collect()).unwrap();
        let rho_inv: Vec<usize> = {
            let mut inv = vec![0; s_n];
            for (i, &j) in rho.iter().enumerate() {
                inv[j] = i;
            }
            inv
        };
        for perm in all_perms(s_n) {
            // composed satisfies relabeled[composed[s]] == masks[perm[s]],
            // so every summand is identical and the losses match bitwise.
            let composed: Vec<usize> = (0..s_n).map(|s| rho_inv[perm[s]]).collect();
            let l0 = upit_loss(&masks, &refs, &perm);
            let l1 = upit_loss(&relabeled, &refs, &composed);
            assert!(l0 == l1, "case {case} perm {perm:?}: symmetry violated");
        }
    }
    println!("[acceptance] criterion 4 (uPIT loss oracle, 200 instances): PASS");
}

// ---------------------------------------------------------------------------

/// Mean SI-SDR improvement measured by the implementer's oracle run of this
/// exact pipeline (seed 5005); pinned so regressions surface.
const PINNED_IRM_MEAN_SDRI_DB: f64 = 25.0467;
const PINNED_IBM_MEAN_SDRI_DB: f64 = 25.0954;

#[test]
fn criterion_5_oracle_separation_quality() {
    let mut rng = ChaCha8Rng::seed_from_u64(5005);
    let mut bank = BTreeMap::new();
    for i in 0..40 {
        let len = rng.random_range((RATE as usize * 14 / 10)..(RATE as usize * 3));
        let v = band_voice(&mut rng, len, 150.0, 1500.0, 30);
        bank.insert(format!("a{i:02}"), Waveform::new(v, RATE).unwrap());
        let len = rng.random_range((RATE as usize * 14 / 10)..(RATE as usize * 3));
        let v = band_voice(&mut rng, len, 2000.0, 3600.0, 30);
        bank.insert(format!("b{i:02}"), Waveform::new(v, RATE).unwrap());
    }
    let resolver = MapResolver(bank);

    let mut irm_sum = 0.0;
    let mut ibm_sum = 0.0;
    for case in 0..500 {
        let x: f64 = rng.random_range(0.0..5.0);
        let spec = MixtureSpec {
            utt1: format!("a{:02}", rng.random_range(0..40)),
            utt2: format!("b{:02}", rng.random_range(0..40)),
            snr1_db: x / 2.0,
            snr2_db: -x / 2.0,
        };
        let r = render(&spec, &resolver, LengthMode::Min).unwrap();
        let spec_mix = stft(&r.mixture, WINDOW, HOP).unwrap();
        let mags = SourceMagnitudes::new(
            spec_mix.magnitude(),
            vec![
                stft(&r.sources[0], WINDOW, HOP).unwrap().magnitude(),
                stft(&r.sources[1], WINDOW, HOP).unwrap().magnitude(),
            ],
        )
        .unwrap();
        for (kind, acc) in [(MaskKind::Irm, &mut irm_sum), (MaskKind::Ibm, &mut ibm_sum)] {
            let masks = ideal_masks(&mags, kind);
            let ests = apply_masks_len(&spec_mix, &masks, r.mixture.len()).unwrap();
            let row = eval_separation(&format!("m{case}"), &r.sources, &ests, &r.mixture).unwrap();
            *acc += row.sdri_mean;
        }
    }
    let irm_mean = irm_sum / 500.0;
    let ibm_mean = ibm_sum / 500.0;
    assert!(
        irm_mean > 10.0,
        "IRM oracle mean SI-SDR improvement {irm_mean:.4} dB is not > 10 dB"
    );
    // Pinned against the recorded oracle run. IBM vs IRM ordering is NOT
    // asserted.
    assert!(
        (irm_mean - PINNED_IRM_MEAN_SDRI_DB).abs() < 0.05,
        "IRM mean SI-SDRi {irm_mean:.4} dB moved from pinned {PINNED_IRM_MEAN_SDRI_DB:.4} dB"
    );
    assert!(
        (ibm_mean - PINNED_IBM_MEAN_SDRI_DB).abs() < 0.05,
        "IBM mean SI-SDRi {ibm_mean:.4} dB moved from pinned {PINNED_IBM_MEAN_SDRI_DB:.4} dB"
    );
    println!(
        "[acceptance] criterion 5 (oracle separation, IRM {irm_mean:.4} dB, IBM {ibm_mean:.4} dB): PASS"
    );
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_6_segmentation_f1() {
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    // Ground-truth regions: lengths keep clear of the 1.3 s filter edge.
    let mut truth: Vec<(f64, f64)> = Vec::new();
    let mut t = 1.0;
    for i in 0..30 {
        let len = if i % 2 == 0 {
            rng.random_range(1.6..3.0)
        } else {
            rng.random_range(0.6..1.1)
        };
        truth.push((t, t + len));
        t += len + rng.random_range(0.8..1.5);
    }
    let total = ((t + 1.0) * RATE as f64) as usize;

    let mut target = vec![0.0f64; total];
    for &(lo, hi) in &truth {
        let burst = band_voice(&mut rng, ((hi - lo) * RATE as f64) as usize, 300.0, 3000.0, 40);
        let start = (lo * RATE as f64) as usize;
        for (i, v) in burst.iter().enumerate() {
            target[start + i] = 0.5 * v;
        }
    }
    let other = noise(&mut rng, total, 5e-4);
    let target = Waveform::new(target, RATE).unwrap();
    let other = Waveform::new(other, RATE).unwrap();

    let params = SadParams::default();
    let regions =
        energy_regions(&target, &other, "rec", "spk", -40.0, 6.0, params.frame_s).unwrap();
    let detected = sad_refine(&target, &regions, &params);

    // Interval F1 at 50 ms boundary tolerance, greedy one-to-one matching.
    let tol = 0.050;
    let mut used = vec![false; detected.len()];
    let mut tp = 0;
    for &(lo, hi) in &truth {
        if let Some(j) = detected.iter().enumerate().position(|(j, d)| {
            !used[j] && (d.start_s - lo).abs() <= tol && (d.end_s - hi).abs() <= tol
        }) {
            used[j] = true;
            tp += 1;
        }
    }
    let f1 = 2.0 * tp as f64 / (truth.len() + detected.len()) as f64;
    assert!(
        f1 >= 0.95,
        "interval F1 {f1:.4} < 0.95 ({tp} matched of {} truth, {} detected)",
        truth.len(),
        detected.len()
    );

    // The minimum-length filter drops exactly the sub-threshold segments.
    let kept = length_filter(&detected, 1.3);
    let expected_kept: Vec<&(f64, f64)> = truth.iter().filter(|(lo, hi)| hi - lo >= 1.3).collect();
    assert_eq!(kept.len(), expected_kept.len(), "filter kept count");
    for (seg, (lo, hi)) in kept.iter().zip(expected_kept) {
        assert!(
            (seg.start_s - lo).abs() <= tol && (seg.end_s - hi).abs() <= tol,
            "kept segment [{}, {}] does not match truth [{lo}, {hi}]",
            seg.start_s,
            seg.end_s
        );
    }
    println!("[acceptance] criterion 6 (segmentation F1 {f1:.3}): PASS");
}

// ---------------------------------------------------------------------------

fn speaker_of(utt_id: &str) -> &str {
    utt_id.split('_').next().unwrap()
}

fn list_speakers(list: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for line in list.lines() {
        let mut fields = line.split_whitespace();
        let u1 = fields.next().unwrap();
        fields.next();
        let u2 = fields.next().unwrap();
        out.insert(speaker_of(u1).to_string());
        out.insert(speaker_of(u2).to_string());
    }
    out
}

#[test]
fn criterion_7_split_discipline() {
    // Speaker partition at corpus scale: 546 speakers split 451/50/45.
    let speakers: Vec<String> = (0..546).map(|i| format!("sp{i:03}")).collect();
    let sizes = SplitSizes::with_train_remainder(546, 50, 45).unwrap();
    let plan = split_speakers(&speakers, &sizes, 7).unwrap();
    assert_eq!(plan.train.len(), 451);
    assert_eq!(plan.cv.len(), 50);
    assert_eq!(plan.test.len(), 45);
    assert!(plan.is_disjoint(), "speaker splits overlap");

    // Default list sizes honored by the CLI when no targets are given.
    assert_eq!(DEFAULT_TRAIN_MIXES, 20000);
    assert_eq!(DEFAULT_CV_MIXES, 5000);
    assert_eq!(DEFAULT_TEST_MIXES, 4000);

    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let mut segments = Vec::new();
    for s in 0..60 {
        for u in 0..30 {
            let len = rng.random_range(1.4..9.0);
            segments.push(CandidateSegment {
                recording: format!("r{s:02}x{u:02}"),
                speaker: format!("spk{s:02}"),
                start_s: 0.0,
                end_s: len,
                source: SegmentSource::Transcript,
            });
        }
    }
    let segs_path = dir.path().join("segs.tsv");
    std::fs::write(&segs_path, segments_to_tsv(&segments)).unwrap();
    let out = dir.path().join("lists");
    run_cli(
        dir.path(),
        &[
            "pair",
            "--segments",
            "segs.tsv",
            "--out",
            "lists",
            "--split-cv",
            "10",
            "--split-test",
            "10",
            "--seed",
            "7",
        ],
    );

    let train = std::fs::read_to_string(out.join("train.lst")).unwrap();
    let cv = std::fs::read_to_string(out.join("cv.lst")).unwrap();
    let test = std::fs::read_to_string(out.join("test.lst")).unwrap();
    assert_eq!(train.lines().count(), 20000, "train list size");
    assert_eq!(cv.lines().count(), 5000, "cv list size");
    assert_eq!(test.lines().count(), 4000, "test list size");

    let (spk_train, spk_cv, spk_test) =
        (list_speakers(&train), list_speakers(&cv), list_speakers(&test));
    assert!(spk_train.is_disjoint(&spk_cv), "train/cv share speakers");
    assert!(spk_train.is_disjoint(&spk_test), "train/test share speakers");
    assert!(spk_cv.is_disjoint(&spk_test), "cv/test share speakers");

    let manifest = std::fs::read_to_string(out.join("manifest.tsv")).unwrap();
    assert!(manifest.contains("target_train\t20000\n"));
    assert!(manifest.contains("target_cv\t5000\n"));
    assert!(manifest.contains("target_test\t4000\n"));
    println!("[acceptance] criterion 7 (split discipline, defaults honored): PASS");
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_8_metric_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(8008);
    let n = 4000;

    // Scale invariance of SI-SDR in the estimate.
    for _ in 0..20 {
        let r = Waveform::new(noise(&mut rng, n, 1.0), RATE).unwrap();
        let e = Waveform::new(noise(&mut rng, n, 1.0), RATE).unwrap();
        let base = si_sdr(&r, &e).unwrap();
        for gain in [1e-3, 0.5, 3.0, 1e3] {
            let scaled =
                Waveform::new(e.samples().iter().map(|s| s * gain).collect(), RATE).unwrap();
            let v = si_sdr(&r, &scaled).unwrap();
            assert!(
                (v - base).abs() <= 1e-9,
                "scale invariance violated: {v} vs {base} at gain {gain}"
            );
        }
    }

    // Orthogonal noise at exactly 20 dB.
    let reference = Waveform::new(vec![1.0; n], RATE).unwrap();
    let est = Waveform::new(
        (0..n)
            .map(|i| 1.0 + if i % 2 == 0 { 0.1 } else { -0.1 })
            .collect(),
        RATE,
    )
    .unwrap();
    let v = si_sdr(&reference, &est).unwrap();
    assert!((v - 20.0).abs() <= 1e-6, "orthogonal 20 dB case: {v}");

    // Using the mixture itself as every estimate gives SDRi of zero.
    let s1 = Waveform::new(noise(&mut rng, n, 0.5), RATE).unwrap();
    let s2 = Waveform::new(noise(&mut rng, n, 0.5), RATE).unwrap();
    let mix = Waveform::new(
        s1.samples()
            .iter()
            .zip(s2.samples())
            .map(|(a, b)| a + b)
            .collect(),
        RATE,
    )
    .unwrap();
    let row = eval_separation(
        "m",
        &[s1, s2],
        &[mix.clone(), mix.clone()],
        &mix,
    )
    .unwrap();
    assert!(
        row.sdri_mean.abs() <= 1e-6,
        "mixture-as-estimate SDRi {} not ~ 0",
        row.sdri_mean
    );
    println!("[acceptance] criterion 8 (metric identities): PASS");
}

// ---------------------------------------------------------------------------

fn run_cli(cwd: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_overmix"))
        .current_dir(cwd)
        .args(args)
        .output()
        .expect("spawn overmix");
    assert!(
        out.status.success(),
        "overmix {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Three synthetic voices, two annotated recordings, 8 kHz.
fn build_micro_corpus(root: &Path, rng: &mut ChaCha8Rng) {
    let corpus = root.join("corpus");
    std::fs::create_dir_all(&corpus).unwrap();
    let speakers = ["spkA", "spkB", "spkC"];
    let mut annotations = String::new();
    for rec_idx in 0..2 {
        let rec = format!("rec{rec_idx}");
        let mut samples = vec![0.0f64; 0];
        let mut t = 0.8;
        let mut cursor = (t * RATE as f64) as usize;
        samples.resize(cursor, 0.0);
        for slot in 0..9 {
            let spk_idx = (slot + rec_idx) % 3;
            let dur = 2.0 + rng.random_range(0.0..0.6);
            let len = (dur * RATE as f64) as usize;
            let f0 = 280.0 + 130.0 * spk_idx as f64;
            let mut utt = noise(rng, len, 1e-3);
            for (h, weight) in [(1.0, 1.0), (2.1, 0.6), (3.2, 0.3)] {
                let step = std::f64::consts::TAU * f0 * h / RATE as f64;
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                for (i, o) in utt.iter_mut().enumerate() {
                    *o += 0.25 * weight * (step * i as f64 + phase).sin();
                }
            }
            samples.extend_from_slice(&utt);
            annotations.push_str(&format!(
                "{rec}\t{}\t{:.3}\t{:.3}\n",
                speakers[spk_idx],
                t,
                t + dur
            ));
            t += dur + 0.7;
            cursor = (t * RATE as f64) as usize;
            samples.resize(cursor, 0.0);
        }
        samples.resize(cursor + (RATE as usize) / 2, 0.0);
        let w = Waveform::new(samples, RATE).unwrap();
        write_wav(&corpus.join(format!("{rec}.wav")), &w, SampleFormat::Int16).unwrap();
    }
    std::fs::write(root.join("annotations.tsv"), annotations).unwrap();
}

fn pipeline(run_dir: &Path) {
    std::fs::create_dir_all(run_dir).unwrap();
    let seed = ["--seed", "7"];
    run_cli(
        run_dir,
        &[&[
            "segment",
            "--recordings",
            "../corpus",
            "--annotations",
            "../annotations.tsv",
            "--out",
            "segs.tsv",
        ], &seed[..]]
        .concat(),
    );
    run_cli(
        run_dir,
        &[&[
            "verify",
            "--segments",
            "segs.tsv",
            "--recordings",
            "../corpus",
            "--threshold",
            "0.5",
            "--out",
            "vdir",
        ], &seed[..]]
        .concat(),
    );
    run_cli(
        run_dir,
        &[&[
            "pair",
            "--segments",
            "vdir/kept.tsv",
            "--target",
            "12",
            "--trace",
            "--out",
            "list.lst",
        ], &seed[..]]
        .concat(),
    );
    run_cli(
        run_dir,
        &[&[
            "mix",
            "--list",
            "list.lst",
            "--segments",
            "vdir/kept.tsv",
            "--recordings",
            "../corpus",
            "--out",
            "data",
        ], &seed[..]]
        .concat(),
    );
    run_cli(
        run_dir,
        &[&["separate", "--data", "data", "--out", "est"], &seed[..]].concat(),
    );
    run_cli(
        run_dir,
        &[&[
            "eval",
            "--data",
            "data",
            "--ests",
            "est",
            "--out",
            "report.tsv",
        ], &seed[..]]
        .concat(),
    );
}

fn tree_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_9_end_to_end_determinism() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9009);
    build_micro_corpus(dir.path(), &mut rng);

    let run1 = dir.path().join("run1");
    let run2 = dir.path().join("run2");
    pipeline(&run1);
    pipeline(&run2);

    let files1 = tree_files(&run1);
    let files2 = tree_files(&run2);
    assert_eq!(files1, files2, "runs produced different file sets");
    assert!(
        files1.iter().any(|p| p.ends_with("report.tsv")),
        "pipeline produced no report"
    );
    for rel in &files1 {
        let b1 = std::fs::read(run1.join(rel)).unwrap();
        let b2 = std::fs::read(run2.join(rel)).unwrap();
        assert!(
            b1 == b2,
            "output {} differs between identically seeded runs",
            rel.display()
        );
    }

    // The eval report carries real content: per-mixture rows plus aggregate.
    let report = std::fs::read_to_string(run1.join("report.tsv")).unwrap();
    assert!(report.lines().count() >= 12 + 2, "report too short:\n{report}");

    let elapsed = t0.elapsed();
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "end-to-end pipeline took {elapsed:?}"
    );
    println!(
        "[acceptance] criterion 9 (end-to-end determinism, {} files, {elapsed:?}): PASS",
        files1.len()
    );
}
