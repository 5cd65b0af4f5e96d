//! Library-level pass over every stage, going through disk where the CLI does.

use thma_core::active::{Decision, ReviewStore, RouteConfig, Status};
use thma_core::baseline::{detect_lane_markings, generate_scene, recall, PoleDetector, SceneConfig};
use thma_core::bev::{plan_tiles, rasterize_all, read_tile, write_tile, TilePlan};
use thma_core::distill::{refine, Provenance};
use thma_core::parallel::Execution;
use thma_core::pointcloud::{
    load_point_cloud, load_trajectory, save_point_cloud, save_trajectory, ElevationFilter, Format,
};
use thma_core::{Frame, LabelSet, MatchConfig, ObjectClass};

#[test]
fn scene_to_feedback() {
    let dir = tempfile::tempdir().unwrap();
    let scene = generate_scene(&SceneConfig { road_length: 40.0, ..Default::default() }).unwrap();

    let cloud_path = dir.path().join("cloud.thpc");
    let traj_path = dir.path().join("trajectory.csv");
    save_point_cloud(&scene.cloud, &cloud_path, Format::BinaryV1).unwrap();
    save_trajectory(&scene.trajectory, &traj_path).unwrap();
    let cloud = load_point_cloud(&cloud_path, Format::BinaryV1).unwrap();
    let traj = load_trajectory(&traj_path, Frame::PlanarMeters).unwrap();
    assert_eq!(cloud, scene.cloud);

    let kept = ElevationFilter::default().apply(&cloud, &traj, Execution::Parallel).unwrap();
    let plan = TilePlan { size: 512, ..TilePlan::default() };
    let frames = plan_tiles(&traj, &plan).unwrap();
    let tiles = rasterize_all(&kept, &frames, Execution::Parallel).unwrap();
    assert_eq!(tiles, rasterize_all(&kept, &frames, Execution::Sequential).unwrap());

    let mut predictions = Vec::new();
    for (k, tile) in tiles.iter().enumerate() {
        let path = dir.path().join(format!("tile_{k}.png"));
        write_tile(tile, &path).unwrap();
        let back = read_tile(&path).unwrap();
        assert_eq!(&back, tile);
        tile.check_invariants().unwrap();
        predictions.extend(detect_lane_markings(&back, &format!("tile_{k}"), 128));
    }
    let lanes = predictions.len();
    predictions.extend(PoleDetector::default().detect(&cloud, Execution::Parallel).unwrap());
    let gt = scene.ground_truth.items();
    assert_eq!(recall(gt, &predictions, ObjectClass::Pole, 0.1), Some(1.0));
    assert!(lanes > 0);

    let pred = LabelSet::new(predictions).unwrap();
    let refined = refine(&scene.ground_truth, &pred, &MatchConfig::default()).unwrap();
    assert!(refined.count(Provenance::ConfirmedGt) > 0);

    let store_dir = dir.path().join("store");
    let mut store = ReviewStore::open(&store_dir).unwrap();
    let (auto, queued) = store.ingest(pred.into_items(), &RouteConfig::default()).unwrap();
    assert!(auto > 0 && queued > 0);
    let first = store.queue(Some(Status::Pending), 1)[0].id.clone();
    store.decide(&first, Decision::Accept, Some("qa".into())).unwrap();
    drop(store);

    let store = ReviewStore::open(&store_dir).unwrap();
    assert_eq!(store.item(&first).unwrap().status, Status::Accepted);
    assert_eq!(store.export_feedback().len(), auto + 1);
}
