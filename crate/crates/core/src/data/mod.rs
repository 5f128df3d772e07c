//! ETH/UCY-style annotation parsing, observation/prediction windows, scene
//! assets, and leave-one-out splits.
//!
//! File formats (all UTF-8 text):
//!
//! * Annotations: one record per line, `frame ped x y`, whitespace-separated;
//!   `#` starts a comment line. Coordinates are world meters.
//! * `SGRID`: line 1 `SGRID 1`; line 2 `H W C`; then H rows of W integer
//!   class ids, each id in `[0, C)`.
//! * `FGRID`: line 1 `FGRID 1`; line 2 `H W C`; then `H * C` rows of W
//!   decimals in `[0, 1]`, channel-major (all rows of channel 0 first).

mod annotations;
mod grids;
mod splits;
mod windows;

pub use annotations::{frame_step, parse_annotations, write_annotations, AnnotationRecord};
pub use grids::{
    nearest_resample, one_hot, parse_fgrid, parse_sgrid, write_fgrid, write_sgrid, FrameRaster,
    SemanticGrid,
};
pub use splits::{leave_one_out_splits, LeaveOneOutSplit};
pub use windows::{build_windows, to_relative, TrajectoryWindow};

use std::path::Path;

use thiserror::Error;

/// Errors raised while ingesting annotation and scene-asset files.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("integrity: {0}")]
    Integrity(String),
    #[error("format: {0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Static per-scene context: one representative frame raster plus an optional
/// semantic class grid standing in for the scene image at every timestep.
#[derive(Debug, Clone)]
pub struct SceneAssets {
    pub frame: FrameRaster,
    pub semantic: Option<SemanticGrid>,
}

/// One scene's windows plus its assets, ready for training or evaluation.
#[derive(Debug, Clone)]
pub struct SceneData {
    pub name: String,
    pub records: Vec<AnnotationRecord>,
    pub windows: Vec<TrajectoryWindow>,
    pub assets: SceneAssets,
}

pub const ANNOTATION_FILE: &str = "annotations.txt";
pub const FRAME_FILE: &str = "frame.fgrid";
pub const SEMANTIC_FILE: &str = "semantic.sgrid";

/// Loads `<root>/<name>/{annotations.txt, frame.fgrid, semantic.sgrid}` and
/// builds windows. The semantic grid is optional unless `require_semantic`.
pub fn load_scene(
    root: &Path,
    name: &str,
    obs_len: usize,
    pred_len: usize,
    stride: usize,
    require_semantic: bool,
) -> Result<SceneData, DataError> {
    let dir = root.join(name);
    if !dir.is_dir() {
        return Err(DataError::Config(format!("scene directory {} not found", dir.display())));
    }
    let ann_path = dir.join(ANNOTATION_FILE);
    let ann_text = std::fs::read_to_string(&ann_path)
        .map_err(|e| DataError::Config(format!("cannot read {}: {e}", ann_path.display())))?;
    let records = parse_annotations(&ann_text)?;
    let windows = build_windows(&records, name, obs_len, pred_len, stride)?;

    let frame_path = dir.join(FRAME_FILE);
    let frame_text = std::fs::read_to_string(&frame_path)
        .map_err(|e| DataError::Config(format!("cannot read {}: {e}", frame_path.display())))?;
    let frame = parse_fgrid(&frame_text)?;

    let sem_path = dir.join(SEMANTIC_FILE);
    let semantic = if sem_path.is_file() {
        Some(parse_sgrid(&std::fs::read_to_string(&sem_path)?)?)
    } else if require_semantic {
        return Err(DataError::Config(format!(
            "scene {name}: {} required when semantic features are enabled",
            sem_path.display()
        )));
    } else {
        None
    };

    Ok(SceneData {
        name: name.to_string(),
        records,
        windows,
        assets: SceneAssets { frame, semantic },
    })
}
