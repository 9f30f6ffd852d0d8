use proptest::prelude::*;
use serde_json::Value;

use vadkit::events::{build_instruction_set, ClientConfig, FilterRules, PromptTemplatePool, INSTRUCTION_SCHEMA};
use vadkit::io::{decode_feature_stream, decode_scores, encode_feature_stream, encode_scores, read_truth, write_truth};
use vadkit::scorer::{decode_checkpoint, encode_checkpoint, ModelDims, ScorerModel};
use vadkit::types::{ClassLabel, EventProposal, FeatureStream, GroundTruth, ScoreSeries};
use vadkit::VadError;

fn class() -> impl Strategy<Value = ClassLabel> {
    prop_oneof![
        Just(ClassLabel::Normal),
        (0..6usize).prop_map(|k| ClassLabel::ANOMALOUS[k].clone()),
        "[A-Z][a-z]{2,8}".prop_map(ClassLabel::Other),
    ]
}

fn stream() -> impl Strategy<Value = FeatureStream> {
    (1..40usize, 1..12usize, 1..64u32, class(), "[a-z0-9_]{1,12}").prop_flat_map(|(t, d, stride, c, id)| {
        prop::collection::vec(-1e6f32..1e6, t * d)
            .prop_map(move |f| FeatureStream::new(id.clone(), t, d, f, stride, c.clone()).unwrap())
    })
}

proptest! {
    #[test]
    fn feature_stream_survives_encoding(s in stream()) {
        let bytes = encode_feature_stream(&s).unwrap();
        let back = decode_feature_stream(&bytes).unwrap();
        // The header stores a class code only, so custom class names collapse.
        let expected = match s.anomaly_class {
            ClassLabel::Other(_) => FeatureStream { anomaly_class: ClassLabel::Other("Other".into()), ..s.clone() },
            _ => s.clone(),
        };
        prop_assert_eq!(&back, &expected);
        prop_assert_eq!(encode_feature_stream(&back).unwrap(), bytes);
    }

    #[test]
    fn any_truncation_is_rejected(s in stream(), cut in 0.0f64..1.0) {
        let bytes = encode_feature_stream(&s).unwrap();
        let keep = ((bytes.len() as f64) * cut) as usize;
        prop_assert!(decode_feature_stream(&bytes[..keep]).is_err());
    }

    #[test]
    fn score_csv_is_stable_after_one_pass(values in prop::collection::vec(0.0f64..=1.0, 1..50)) {
        let series = vec![ScoreSeries::new("v", values).unwrap()];
        let once = encode_scores(&decode_scores(&encode_scores(&series).unwrap()).unwrap()).unwrap();
        prop_assert_eq!(&once, &encode_scores(&series).unwrap());
        let back = decode_scores(&once).unwrap();
        for (a, b) in back[0].scores.iter().zip(&series[0].scores) {
            prop_assert!((a - b).abs() <= 5e-9 * b.abs().max(1e-300));
        }
    }
}

#[test]
fn checkpoint_rejects_corruption() {
    let dims = ModelDims {
        input_dim: 4,
        hidden_dim: 3,
        memory_slots: 2,
        local_window: 3,
    };
    let model = ScorerModel::init(dims, 11).unwrap();
    let bytes = encode_checkpoint(&model, "0123456789abcdef").unwrap();
    let (back, header) = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back, model);
    assert_eq!(header.config_hash, "0123456789abcdef");
    assert_eq!(header.param_count, dims.param_count());

    assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(decode_checkpoint(&extra).is_err());
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(decode_checkpoint(&magic).is_err());
    let mut nan = bytes.clone();
    let n = nan.len();
    nan[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
    assert!(decode_checkpoint(&nan).is_err());
}

#[test]
fn truth_round_trips_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let truth = vec![
        GroundTruth {
            video_id: "a".into(),
            snippet_count: 10,
            snippet_stride: 16,
            intervals: vec![[1, 3], [6, 10]],
        },
        GroundTruth {
            video_id: "b".into(),
            snippet_count: 4,
            snippet_stride: 16,
            intervals: vec![],
        },
    ];
    write_truth(&truth, &path).unwrap();
    assert_eq!(read_truth(&path).unwrap(), truth);
    assert_eq!(truth[0].frame_labels().len(), 160);

    std::fs::write(&path, "{\"video_id\":\"a\",\"snippet_count\":4,\"snippet_stride\":16,\"intervals\":[[3,9]]}\n").unwrap();
    assert!(read_truth(&path).is_err());
}

#[test]
fn scores_reject_out_of_range_and_gaps() {
    assert!(decode_scores("video_id,index,value\nv,0,1.5\n").is_err());
    assert!(decode_scores("video_id,index,value\nv,0,0.5\nv,2,0.5\n").is_err());
    let err = decode_scores("wrong,header\n").unwrap_err();
    assert!(matches!(err, VadError::SchemaViolation { .. }), "{err:?}");
}

#[test]
fn instruction_records_match_the_schema() {
    let schema: Value = serde_json::from_str(INSTRUCTION_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let clips: Vec<EventProposal> = (0..30)
        .map(|i| EventProposal {
            video_id: format!("v{}", i % 7),
            start: i,
            end: i + 3,
            label: if i % 4 == 0 { ClassLabel::Normal } else { ClassLabel::ANOMALOUS[i % 6].clone() },
            source_glance: None,
        })
        .collect();
    let records = build_instruction_set(
        &clips,
        &PromptTemplatePool::default(),
        &ClientConfig::mock(2),
        &FilterRules::default(),
        2,
    )
    .unwrap();
    assert_eq!(records.len(), clips.len());
    for r in &records {
        let v = serde_json::to_value(r).unwrap();
        assert!(validator.is_valid(&v), "{v}");
    }

    // The schema is strict about shape.
    let mut v = serde_json::to_value(&records[0]).unwrap();
    v["extra"] = Value::Bool(true);
    assert!(!validator.is_valid(&v));
    let mut v = serde_json::to_value(&records[0]).unwrap();
    v["user"] = Value::String("no placeholder".into());
    assert!(!validator.is_valid(&v));
    let mut v = serde_json::to_value(&records[0]).unwrap();
    v.as_object_mut().unwrap().remove("provenance");
    assert!(!validator.is_valid(&v));
}
