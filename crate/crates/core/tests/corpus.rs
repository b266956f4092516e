use std::fs;

use proptest::prelude::*;
use sead::corpus::*;
use sead::synth::{synthesize, SynthConfig};

fn small() -> SynthConfig {
    SynthConfig {
        num_clips: 12,
        frames_per_clip: 6,
        ..SynthConfig::default()
    }
}

#[test]
fn materialized_corpus_round_trips() {
    let synth = synthesize(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    synth.materialize(dir.path()).unwrap();
    let index = load_manifest(&dir.path().join("manifest.jsonl")).unwrap();
    assert_eq!(index.len(), 12);
    for rec in index.records() {
        let id = &rec.meta.clip_id;
        assert_eq!(rec, synth.index.get(id).unwrap());
        assert_eq!(&load_features(&index, id).unwrap(), &synth.features[id]);
        assert_eq!(&load_detections(&index, id).unwrap(), &synth.detections[id]);
    }
    assert!(validate_corpus(&index).is_empty());
}

#[test]
fn manifest_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    let good = r#"{"clip_id":"c0","num_frames":2,"lighting":"day","weather":"sunny","accel_y":[0,0],"yaw_delta":[0,0],"features_path":"f","detections_path":"d"}"#;
    fs::write(&path, format!("{good}\n{{not json\n")).unwrap();
    assert!(matches!(load_manifest(&path), Err(CorpusError::MalformedLine { line: 2, .. })));
    fs::write(&path, format!("{good}\n{good}\n")).unwrap();
    assert!(matches!(load_manifest(&path), Err(CorpusError::DuplicateClipId(id)) if id == "c0"));
    assert!(matches!(load_manifest(&dir.path().join("absent")), Err(CorpusError::Io { .. })));
}

#[test]
fn missing_files_are_reported_per_clip() {
    let synth = synthesize(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let index = synth.materialize(dir.path()).unwrap();
    let victim = index.clip_ids().nth(3).unwrap().to_string();
    fs::remove_file(index.features_file(&victim).unwrap()).unwrap();
    let report = validate_corpus(&index);
    assert_eq!(report.len(), 1);
    assert_eq!(report.entries[0].clip_id, victim);
    assert_eq!(report.entries[0].field, "features");
}

#[derive(Debug, Clone)]
enum Damage {
    Confidence(f64),
    Position,
    AccelNaN,
    YawLength,
    TruncateFeatures(usize),
}

fn damage() -> impl Strategy<Value = Damage> {
    prop_oneof![
        prop_oneof![1.0001f64..5.0, -5.0f64..-0.0001].prop_map(Damage::Confidence),
        Just(Damage::Position),
        Just(Damage::AccelNaN),
        Just(Damage::YawLength),
        (1usize..64).prop_map(Damage::TruncateFeatures),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn any_single_defect_is_reported_against_its_clip(which in 0usize..12, frame in 0usize..6, d in damage()) {
        let synth = synthesize(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let index = synth.materialize(dir.path()).unwrap();
        let id = index.clip_ids().nth(which).unwrap().to_string();
        let mut records: Vec<ClipRecord> = index.records().cloned().collect();
        let rec = records.iter_mut().find(|r| r.meta.clip_id == id).unwrap();
        let mut set = synth.detections[&id].clone();
        if set.frames[frame].is_empty() {
            set.frames[frame].push(Detection { class: "car".into(), x: 1.0, y: 1.0, confidence: 0.5 });
        }
        match d {
            Damage::Confidence(c) => {
                set.frames[frame][0].confidence = c;
                write_detections_file(&index.detections_file(&id).unwrap(), &set).unwrap();
            }
            Damage::Position => {
                set.frames[frame][0].x = f64::INFINITY;
                write_detections_file(&index.detections_file(&id).unwrap(), &set).unwrap();
            }
            Damage::AccelNaN => rec.can.accel_y[frame] = f64::NAN,
            Damage::YawLength => {
                rec.can.yaw_delta.pop();
            }
            Damage::TruncateFeatures(k) => {
                let path = index.features_file(&id).unwrap();
                let bytes = fs::read(&path).unwrap();
                fs::write(&path, &bytes[..bytes.len() - k]).unwrap();
            }
        }
        let damaged = CorpusIndex::new(dir.path(), records).unwrap();
        let report = validate_corpus(&damaged);
        prop_assert!(!report.is_empty());
        prop_assert!(report.entries.iter().all(|e| e.clip_id == id), "{:?}", report);
    }
}
