//! Acceptance gate. Each criterion is its own test and prints one
//! `A<n> PASS|FAIL` line with the measured numbers (`--nocapture` shows it).

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use sead::active::*;
use sead::corpus::{CanTrace, ClipFeatures, ClipMeta, ClipRecord, CorpusIndex, Detection, DetectionSet, Lighting, Weather};
use sead::keyframe::*;
use sead::partition::*;
use sead::shift::*;
use sead::synth::*;

const A1_TOL: f64 = 1e-9;
const A2_SYMMETRY_TOL: f64 = 1e-9;
const A2_TRIANGLE_TOL: f64 = 1e-7;
const A3_TOL: f64 = 1e-9;
const A4_REL_TOL: f64 = 0.02;
const A6_SEEDS: usize = 20;
const A6_BUDGET: Duration = Duration::from_secs(300);

fn report(id: &str, ok: bool, detail: String) {
    println!("{id} {}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{id} failed: {detail}");
}

#[test]
fn a1_exact_emd_equals_assignment_enumeration() {
    let start = Instant::now();
    let mut r = rng(0xA1);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = r.random_range(1..=6);
        let d = r.random_range(1..=8);
        let (a, b) = (random_set(&mut r, n, d), random_set(&mut r, n, d));
        worst = worst.max((emd_exact(&a, &b).unwrap() - brute_force_emd(&a, &b)).abs());
    }
    let elapsed = start.elapsed();
    report(
        "A1",
        worst <= A1_TOL && elapsed < Duration::from_secs(10),
        format!("500 pairs, max |exact - enumeration| = {worst:.2e}, {elapsed:.2?}"),
    );
}

#[test]
fn a2_exact_emd_is_a_metric() {
    let start = Instant::now();
    let mut r = rng(0xA2);
    let (mut asym, mut tri_excess, mut self_dist, mut min_val) = (0.0f64, f64::NEG_INFINITY, 0.0f64, f64::INFINITY);
    for _ in 0..500 {
        let n = r.random_range(1..=8);
        let d = r.random_range(1..=8);
        let (a, b, c) = (random_set(&mut r, n, d), random_set(&mut r, n, d), random_set(&mut r, n, d));
        let ab = emd_exact(&a, &b).unwrap();
        let ba = emd_exact(&b, &a).unwrap();
        let ac = emd_exact(&a, &c).unwrap();
        let cb = emd_exact(&c, &b).unwrap();
        asym = asym.max((ab - ba).abs());
        tri_excess = tri_excess.max(ab - ac - cb);
        self_dist = self_dist.max(emd_exact(&a, &a).unwrap());
        min_val = min_val.min(ab.min(ac).min(cb));
    }
    let elapsed = start.elapsed();
    let ok = min_val >= 0.0
        && asym <= A2_SYMMETRY_TOL
        && tri_excess <= A2_TRIANGLE_TOL
        && self_dist == 0.0
        && elapsed < Duration::from_secs(30);
    report(
        "A2",
        ok,
        format!("500 triples, min {min_val:.3}, max asymmetry {asym:.2e}, max triangle excess {tri_excess:.2e}, max d(a,a) {self_dist:.1e}, {elapsed:.2?}"),
    );
}

#[test]
fn a3_centroid_is_a_lower_bound() {
    let mut r = rng(0xA3);
    let mut worst = f64::NEG_INFINITY;
    let mut strict = 0;
    for _ in 0..1000 {
        let n = r.random_range(1..=10);
        let m = r.random_range(1..=10);
        let d = r.random_range(1..=8);
        let (a, b) = (random_set(&mut r, n, d), random_set(&mut r, m, d));
        let (c, e) = (centroid_shift(&a, &b).unwrap(), emd_exact(&a, &b).unwrap());
        worst = worst.max(c - e);
        strict += usize::from(c < e - 1e-9);
    }
    report(
        "A3",
        worst <= A3_TOL,
        format!("1000 pairs, max (centroid - exact) = {worst:.2e}, strictly below on {strict}"),
    );
}

#[test]
fn a4_sinkhorn_tracks_exact() {
    let mut r = rng(0xA4);
    let cfg = ShiftConfig {
        engine: Engine::Sinkhorn,
        sinkhorn_epsilon: 0.01,
        sinkhorn_max_iter: 10_000,
        ..ShiftConfig::default()
    };
    let (mut worst, mut failures) = (0.0f64, 0);
    for _ in 0..100 {
        let (a, b) = (random_set(&mut r, 10, 8), random_set(&mut r, 10, 8));
        let exact = emd_exact(&a, &b).unwrap();
        match emd_sinkhorn(&a, &b, &cfg) {
            Ok(v) => worst = worst.max((v - exact).abs() / exact),
            Err(ShiftError::NonConvergence { .. }) => failures += 1,
            Err(e) => panic!("{e}"),
        }
    }
    report(
        "A4",
        worst <= A4_REL_TOL && failures == 0,
        format!("100 pairs 10x10 d=8, max relative error {:.3}%, non-convergent {failures}", worst * 100.0),
    );
}

fn random_corpus(r: &mut impl Rng) -> CorpusIndex {
    let n = r.random_range(1..80);
    let records = (0..n)
        .map(|i| {
            let id = format!("c{i:03}");
            let t = r.random_range(2..10);
            let accel: Vec<f64> = (0..t).map(|_| r.random_range(0..4) as f64 * 0.5).collect();
            let yaw: Vec<f64> = (0..t).map(|_| r.random_range(-3..4) as f64 * 0.05).collect();
            ClipRecord {
                meta: ClipMeta {
                    clip_id: id.clone(),
                    num_frames: t,
                    lighting: if r.random_bool(0.6) { Lighting::Day } else { Lighting::Night },
                    weather: if r.random_bool(0.7) { Weather::Sunny } else { Weather::Rainy },
                },
                can: CanTrace {
                    clip_id: id.clone(),
                    accel_y: accel,
                    yaw_delta: yaw,
                },
                features_path: format!("{id}.bin").into(),
                detections_path: format!("{id}.jsonl").into(),
            }
        })
        .collect();
    CorpusIndex::new("", records).unwrap()
}

#[test]
fn a5_partition_and_allocation() {
    let mut r = rng(0xA5);
    let mut problems = Vec::new();
    for case in 0..200 {
        let corpus = random_corpus(&mut r);
        let lambda = r.random_range(0.05..0.95);
        let table = build_partition(&corpus, lambda).unwrap();

        let k = ((lambda * corpus.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        let top = |key: &dyn Fn(&CanTrace) -> f64| -> BTreeSet<String> {
            let mut v: Vec<(f64, String)> = corpus.records().map(|c| (key(&c.can), c.meta.clip_id.clone())).collect();
            v.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            v.into_iter().take(k).map(|x| x.1).collect()
        };
        let acc_v = top(&acc_score);
        let yaw_v = top(&yaw_score);
        let both: BTreeSet<&String> = acc_v.intersection(&yaw_v).collect();
        let neither: BTreeSet<&str> = corpus.clip_ids().filter(|id| !acc_v.contains(*id) && !yaw_v.contains(*id)).collect();

        let mut seen = BTreeSet::new();
        for (cell, ids) in table.cells() {
            for id in ids {
                if !seen.insert(id.to_string()) {
                    problems.push(format!("case {case}: {id} in two cells"));
                }
                let want = if both.contains(&id.to_string()) {
                    DynamicCell::Both
                } else if neither.contains(id) {
                    DynamicCell::Neither
                } else {
                    DynamicCell::Single
                };
                if cell.dynamic_cell != want {
                    problems.push(format!("case {case}: {id} in {cell}"));
                }
            }
        }
        if seen.len() != corpus.len() {
            problems.push(format!("case {case}: {} of {} clips assigned", seen.len(), corpus.len()));
        }

        let n_itr = r.random_range(0..=corpus.len());
        let counts = table.cell_counts();
        let quotas = proportional_allocation(&counts, n_itr).unwrap();
        if quotas.iter().map(|q| q.1).sum::<usize>() != n_itr {
            problems.push(format!("case {case}: quotas do not sum to {n_itr}"));
        }
        if quotas.iter().zip(&counts).any(|(q, c)| q.1 > c.1) {
            problems.push(format!("case {case}: quota above cell size"));
        }
        let seed = r.random::<u64>();
        let picked = initial_select(&table, n_itr, seed).unwrap();
        if picked != initial_select(&table, n_itr, seed).unwrap() {
            problems.push(format!("case {case}: selection not deterministic"));
        }
        let mut per_cell: BTreeMap<Cell, usize> = BTreeMap::new();
        for id in &picked {
            *per_cell.entry(table.cell_of(id).unwrap()).or_default() += 1;
        }
        for (cell, q) in quotas {
            if per_cell.get(&cell).copied().unwrap_or(0) != q {
                problems.push(format!("case {case}: {cell} drew a different count than its quota {q}"));
            }
        }
        if picked.iter().collect::<BTreeSet<_>>().len() != picked.len() {
            problems.push(format!("case {case}: duplicate pick"));
        }
    }
    report(
        "A5",
        problems.is_empty(),
        format!("200 corpora, {} problems {:?}", problems.len(), problems.iter().take(3).collect::<Vec<_>>()),
    );
}

fn sweep_loop(engine: Engine) -> LoopConfig {
    let mut cfg = LoopConfig {
        total_budget_clips: 60,
        per_iter_clips: 20,
        iterations: 3,
        ..LoopConfig::default()
    };
    cfg.shift.engine = engine;
    cfg
}

fn describe(rep: &ComparisonReport) -> String {
    rep.rows
        .iter()
        .map(|r| {
            format!(
                "{:?}@{:.0}%: {:.4}±{:.4} (uniform {:.4}±{:.4}, frames {:.3})",
                r.policy,
                r.budget_fraction * 100.0,
                r.mean_error,
                r.std_error,
                r.mean_error_uniform,
                r.std_error_uniform,
                r.mean_frame_fraction
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn non_increasing(rep: &ComparisonReport, policy: Policy) -> bool {
    rep.series(policy).windows(2).all(|w| w[1].mean_error <= w[0].mean_error)
}

#[test]
fn a6_selection_beats_random_on_synthetic_corpora() {
    let start = Instant::now();
    let synth = SynthConfig::default();
    let rep = compare_policies(&synth, &sweep_loop(Engine::default()), &[Policy::Sead, Policy::Random], A6_SEEDS, EvalWeighting::default()).unwrap();
    let elapsed = start.elapsed();
    let sead = rep.row(Policy::Sead, 60).unwrap();
    let random = rep.row(Policy::Random, 60).unwrap();
    let ok = sead.mean_error < random.mean_error
        && non_increasing(&rep, Policy::Sead)
        && non_increasing(&rep, Policy::Random)
        && elapsed < A6_BUDGET;
    report(
        "A6",
        ok,
        format!(
            "{} seeds, margin at 30% = {:.4}; {}; {elapsed:.2?}",
            A6_SEEDS,
            random.mean_error - sead.mean_error,
            describe(&rep)
        ),
    );
}

fn random_detections(r: &mut impl Rng, t: usize) -> DetectionSet {
    DetectionSet {
        clip_id: "clip".into(),
        frames: (0..t)
            .map(|_| {
                (0..r.random_range(0..5))
                    .map(|_| Detection {
                        class: "car".into(),
                        x: r.random_range(-12.0..12.0),
                        y: r.random_range(-12.0..12.0),
                        confidence: r.random_range(0.0..1.0),
                    })
                    .collect()
            })
            .collect(),
    }
}

fn longest_run_oracle(mask: &[bool]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for s in 0..mask.len() {
        for e in s..mask.len() {
            if mask[s..=e].iter().all(|&b| b) && best.is_none_or(|(bs, be)| e - s > be - bs) {
                best = Some((s, e));
            }
        }
    }
    best
}

#[test]
fn a7_keyframes() {
    let mut r = rng(0xA7);
    let mut problems = Vec::new();
    for i in 0..1000 {
        let t = r.random_range(1..60);
        let mask: Vec<bool> = (0..t).map(|_| r.random_bool(0.6)).collect();
        if longest_run(&mask) != longest_run_oracle(&mask) {
            problems.push(format!("mask {i}"));
        }
        let clip = random_detections(&mut r, t);
        let cfg = KeyframeConfig::default();
        let want: Vec<bool> = clip
            .frames
            .iter()
            .map(|f| {
                f.iter()
                    .filter(|d| d.confidence >= cfg.confidence_threshold)
                    .map(|d| (d.x * d.x + d.y * d.y).sqrt())
                    .any(|dist| dist < cfg.distance_threshold)
            })
            .collect();
        if key_mask(&clip, &cfg) != want {
            problems.push(format!("clip {i}"));
        }
    }
    let levels = [(0.25, 2.5), (0.5, 5.0), (0.75, 10.0)];
    for i in 0..200 {
        let t = r.random_range(1..60);
        let clip = random_detections(&mut r, t);
        let mask = |tau: f64, d: f64| {
            key_mask(
                &clip,
                &KeyframeConfig {
                    confidence_threshold: tau,
                    distance_threshold: d,
                    fallback: Fallback::FullClip,
                },
            )
        };
        for &(tau, _) in &levels {
            for w in levels.windows(2) {
                let (lo, hi) = (mask(tau, w[0].1), mask(tau, w[1].1));
                if lo.iter().zip(&hi).any(|(a, b)| *a && !b) {
                    problems.push(format!("clip {i}: larger distance threshold dropped a key frame"));
                }
            }
        }
        for &(_, d) in &levels {
            for w in levels.windows(2) {
                let (lo, hi) = (mask(w[0].0, d), mask(w[1].0, d));
                if lo.iter().zip(&hi).any(|(a, b)| !a && *b) {
                    problems.push(format!("clip {i}: larger confidence threshold added a key frame"));
                }
            }
        }
    }

    let corpus = synthesize(&SynthConfig::default()).unwrap();
    let out = run_active_loop(&corpus.index, &SyntheticLearner { corpus: &corpus }, &sweep_loop(Engine::default())).unwrap();
    let budget = budget_report(&out.log, &corpus.index);
    let proper = out
        .log
        .selected()
        .filter(|s| !s.is_fallback && s.frames() < corpus.index.get(&s.clip_id).unwrap().meta.num_frames)
        .count();
    if proper > 0 && budget.frame_fraction > budget.clip_fraction {
        problems.push("frame fraction above clip fraction".into());
    }
    report(
        "A7",
        problems.is_empty() && proper > 0,
        format!(
            "1000 masks/clips, 200 monotonicity clips, {} problems; budget: clips {:.3}, frames {:.3}, {proper} trimmed ranges",
            problems.len(),
            budget.clip_fraction,
            budget.frame_fraction
        ),
    );
}

struct Recorder<'a> {
    inner: SyntheticLearner<'a>,
    scored: Mutex<Vec<(BTreeSet<String>, String)>>,
}

impl Learner for Recorder<'_> {
    type Model = BTreeSet<String>;

    fn train_from_scratch(&self, labeled: &[FrameRange], seed: u64) -> Result<Self::Model, LearnerError> {
        self.inner.train_from_scratch(labeled, seed)?;
        Ok(labeled.iter().map(|r| r.clip_id.clone()).collect())
    }

    fn infer_features(&self, model: &Self::Model, clip_id: &str) -> Result<ClipFeatures, LearnerError> {
        self.scored.lock().unwrap().push((model.clone(), clip_id.to_string()));
        Ok(self.inner.corpus.features[clip_id].clone())
    }

    fn infer_detections(&self, _model: &Self::Model, clip_id: &str) -> Result<DetectionSet, LearnerError> {
        Ok(self.inner.corpus.detections[clip_id].clone())
    }
}

#[test]
fn a8_loop_accounting() {
    let corpus = synthesize(&SynthConfig {
        num_clips: 100,
        seed: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = LoopConfig {
        total_budget_clips: 30,
        per_iter_clips: 10,
        iterations: 3,
        seed: 8,
        ..LoopConfig::default()
    };
    let rec = Recorder {
        inner: SyntheticLearner { corpus: &corpus },
        scored: Mutex::new(Vec::new()),
    };
    let log = run_active_loop(&corpus.index, &rec, &cfg).unwrap().log;
    let counts: Vec<usize> = log.iterations.iter().map(|r| r.labeled_clips_after).collect();
    let ids: Vec<&str> = log.selected().map(|s| s.clip_id.as_str()).collect();
    let disjoint = ids.iter().collect::<BTreeSet<_>>().len() == ids.len();
    let scored = rec.scored.lock().unwrap();
    let residual_only = scored.iter().all(|(labeled, id)| !labeled.contains(id));
    let first = log.to_jsonl();
    let second = run_active_loop(&corpus.index, &SyntheticLearner { corpus: &corpus }, &cfg).unwrap().log.to_jsonl();
    let ok = counts == [10, 20, 30] && disjoint && residual_only && scored.len() == 90 + 80 && first == second && log.is_valid();
    report(
        "A8",
        ok,
        format!(
            "labeled {counts:?}, disjoint {disjoint}, residual-only scoring {residual_only} ({} inferences), identical logs {}",
            scored.len(),
            first == second
        ),
    );
}

#[test]
fn a9_every_engine_beats_random() {
    let synth = SynthConfig::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for engine in [Engine::Exact, Engine::Sinkhorn, Engine::Centroid] {
        let rep = compare_policies(&synth, &sweep_loop(engine), &[Policy::Sead, Policy::Random], A6_SEEDS, EvalWeighting::default()).unwrap();
        let sead = rep.row(Policy::Sead, 60).unwrap();
        let random = rep.row(Policy::Random, 60).unwrap();
        ok &= sead.mean_error <= random.mean_error;
        lines.push(format!(
            "{engine}: sead {:.4}±{:.4} vs random {:.4}±{:.4}",
            sead.mean_error, sead.std_error, random.mean_error, random.std_error
        ));
    }
    report("A9", ok, format!("30% budget, {} seeds; {}", A6_SEEDS, lines.join("; ")));
}
