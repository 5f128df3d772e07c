//! Deterministic synthetic scenes: crossing and parallel pedestrian pairs
//! over a procedurally drawn raster and semantic grid. Used by the bundled
//! toy corpus, smoke tests, and the overfit gate.

use std::path::Path;

use crate::data::{
    build_windows, write_annotations, write_fgrid, write_sgrid, AnnotationRecord, FrameRaster,
    SceneAssets, SemanticGrid, TrajectoryWindow, ANNOTATION_FILE, FRAME_FILE, SEMANTIC_FILE,
};

pub const TOY_SCENES: [&str; 4] = ["eth", "hotel", "zara1", "zara2"];

const FRAME_STEP: u64 = 10;
const RASTER_EDGE: usize = 32;
const SEMANTIC_CLASSES: usize = 8;

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Two crossing pedestrians plus a parallel pair, walking for `frames`
/// annotation steps with a small variant-dependent lateral wiggle.
pub fn toy_records(frames: usize, variant: u64) -> Vec<AnnotationRecord> {
    let phase = variant as f64 * 0.7;
    let mut records = Vec::new();
    // (start, velocity, wiggle axis): 1-2 cross at right angles, 3-4 walk abreast
    let tracks: [([f64; 2], [f64; 2], usize); 4] = [
        ([0.0, 5.0], [0.45, 0.0], 1),
        ([5.0, 0.0], [0.0, 0.45], 0),
        ([0.5, 8.0], [0.42, 0.0], 1),
        ([0.5, 9.0], [0.42, 0.0], 1),
    ];
    for (ped, (start, vel, axis)) in tracks.iter().enumerate() {
        for t in 0..frames {
            let wiggle = 0.05 * (0.4 * t as f64 + phase + ped as f64).sin();
            let mut pos = [start[0] + vel[0] * t as f64, start[1] + vel[1] * t as f64];
            pos[*axis] += wiggle;
            records.push(AnnotationRecord {
                frame_id: t as u64 * FRAME_STEP,
                ped_id: ped as u64 + 1,
                x: round3(pos[0]),
                y: round3(pos[1]),
            });
        }
    }
    records.sort_by_key(|r| (r.frame_id, r.ped_id));
    records
}

/// Procedural single-channel raster, values quantized to 3 decimals.
pub fn toy_raster(variant: u64) -> FrameRaster {
    let e = RASTER_EDGE;
    let mut data = Vec::with_capacity(e * e);
    for r in 0..e {
        for c in 0..e {
            let v = 0.5 + 0.5 * (0.31 * r as f64 + 0.17 * c as f64 + variant as f64).sin();
            data.push(round3(v.clamp(0.0, 1.0)));
        }
    }
    FrameRaster { channels: 1, height: e, width: e, data }
}

/// Procedural class grid: a road band with sidewalks, a building block,
/// vegetation on the right, and variant-scattered obstacles.
pub fn toy_semantic(variant: u64) -> SemanticGrid {
    let e = RASTER_EDGE;
    let mut ids = Vec::with_capacity(e * e);
    for r in 0..e {
        for c in 0..e {
            let id = if (12..20).contains(&r) {
                0 // road
            } else if (10..12).contains(&r) || (20..22).contains(&r) {
                1 // sidewalk
            } else if r < 10 && c < 16 {
                2 // building
            } else if c >= 24 {
                3 // vegetation
            } else if (r + c + variant as usize) % 13 == 0 {
                4 // obstacle
            } else {
                7 // other
            };
            ids.push(id as u32);
        }
    }
    SemanticGrid { height: e, width: e, class_count: SEMANTIC_CLASSES, ids }
}

pub fn toy_assets(variant: u64) -> SceneAssets {
    SceneAssets { frame: toy_raster(variant), semantic: Some(toy_semantic(variant)) }
}

/// Writes one scene directory (annotations + FGRID + SGRID).
pub fn write_scene(
    dir: &Path,
    records: &[AnnotationRecord],
    assets: &SceneAssets,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(ANNOTATION_FILE), write_annotations(records))?;
    std::fs::write(dir.join(FRAME_FILE), write_fgrid(&assets.frame))?;
    if let Some(sem) = &assets.semantic {
        std::fs::write(dir.join(SEMANTIC_FILE), write_sgrid(sem))?;
    }
    Ok(())
}

/// Writes the 4-scene toy corpus under `root`, `frames` annotation steps per
/// scene (24 steps = 5 windows per scene at stride 1).
pub fn write_toy_corpus(root: &Path, frames: usize) -> std::io::Result<()> {
    for (i, name) in TOY_SCENES.iter().enumerate() {
        write_scene(&root.join(name), &toy_records(frames, i as u64), &toy_assets(i as u64))?;
    }
    Ok(())
}

/// In-memory 8-window corpus (27 annotation steps of the crossing + parallel
/// families) with one shared scene-asset bank; the overfit-gate fixture.
pub fn overfit_corpus() -> (Vec<TrajectoryWindow>, SceneAssets) {
    let records = toy_records(27, 0);
    let windows = build_windows(&records, "overfit", 8, 12, 1).expect("synthetic records are valid");
    assert_eq!(windows.len(), 8);
    (windows, toy_assets(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_annotations;

    #[test]
    fn toy_scene_produces_expected_window_count() {
        let records = toy_records(24, 1);
        let windows = build_windows(&records, "t", 8, 12, 1).unwrap();
        assert_eq!(windows.len(), 5);
        assert!(windows.iter().all(|w| w.n_peds() == 4));
    }

    #[test]
    fn overfit_corpus_has_eight_windows() {
        let (windows, assets) = overfit_corpus();
        assert_eq!(windows.len(), 8);
        assert_eq!(assets.frame.height, 32);
        assert_eq!(assets.semantic.as_ref().unwrap().class_count, 8);
    }

    #[test]
    fn written_scene_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let records = toy_records(24, 2);
        write_scene(dir.path(), &records, &toy_assets(2)).unwrap();
        let text = std::fs::read_to_string(dir.path().join(ANNOTATION_FILE)).unwrap();
        assert_eq!(parse_annotations(&text).unwrap(), records);
    }
}
