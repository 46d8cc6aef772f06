use std::path::PathBuf;

use retarget_core::formats::{read_skeleton_sequence, read_trajectory};
use retarget_core::robot::{is_feasible, RobotModel};
use retarget_core::sampling::{ingest_mocap_pairs, Source};

fn data() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

#[test]
fn bundled_model_file_matches_builtin() {
    let loaded = RobotModel::load(data().join("humanoid_upper.json")).unwrap();
    assert_eq!(loaded.dof(), RobotModel::bundled_humanoid().dof());
}

#[test]
fn bundled_mocap_pairs_ingest_cleanly() {
    let model = RobotModel::bundled_humanoid();
    let report = ingest_mocap_pairs(data().join("mocap_pairs.jsonl"), &model).unwrap();
    assert!(report.rejected.is_empty(), "{:?}", report.rejected.first());
    assert_eq!(report.dataset.tuples.len(), 1000);
    assert!(report
        .dataset
        .tuples
        .iter()
        .all(|t| t.source == Source::MocapIngested));
}

#[test]
fn heldout_sequences_pair_with_feasible_references() {
    let model = RobotModel::bundled_humanoid();
    let dir = data().join("heldout");
    for i in 10..15 {
        let seq = read_skeleton_sequence(&dir.join(format!("heldout_{i}.jsonl"))).unwrap();
        let truth = read_trajectory(&dir.join(format!("heldout_{i}.truth.jsonl"))).unwrap();
        assert_eq!(seq.features.len(), 100);
        assert_eq!(truth.len(), seq.features.len());
        for (r, &t) in truth.iter().zip(&seq.times) {
            assert_eq!(r.t, t);
            assert!(is_feasible(&model, &r.q).unwrap());
        }
    }
}
