use std::collections::BTreeMap;

use super::annotations::{frame_step, AnnotationRecord};
use super::DataError;

/// One training/evaluation sample: N pedestrians observed for `obs_len`
/// consecutive annotation frames and annotated for `pred_len` more.
/// Positions are world meters, stored row-major per pedestrian.
#[derive(Debug, Clone)]
pub struct TrajectoryWindow {
    pub ped_ids: Vec<u64>,
    /// `[N, obs_len]` observed positions.
    pub obs: Vec<[f64; 2]>,
    /// `[N, pred_len]` future ground-truth positions.
    pub fut: Vec<[f64; 2]>,
    /// `[N, obs_len]` per-step displacements; first entry is (0, 0).
    pub obs_disp: Vec<[f64; 2]>,
    pub obs_len: usize,
    pub pred_len: usize,
    pub scene_name: String,
    /// First observed frame of the window.
    pub anchor_frame: u64,
}

impl TrajectoryWindow {
    pub fn n_peds(&self) -> usize {
        self.ped_ids.len()
    }

    pub fn obs_of(&self, ped: usize) -> &[[f64; 2]] {
        &self.obs[ped * self.obs_len..(ped + 1) * self.obs_len]
    }

    pub fn fut_of(&self, ped: usize) -> &[[f64; 2]] {
        &self.fut[ped * self.pred_len..(ped + 1) * self.pred_len]
    }

    /// Last observed position of each pedestrian; the anchor the decoder
    /// integrates displacements from.
    pub fn last_obs(&self) -> Vec<[f64; 2]> {
        (0..self.n_peds()).map(|i| self.obs_of(i)[self.obs_len - 1]).collect()
    }

    /// Flat `[N * obs_len * 2]` displacement buffer.
    pub fn disp_flat(&self) -> Vec<f64> {
        self.obs_disp.iter().flat_map(|p| [p[0], p[1]]).collect()
    }

    /// Flat `[N * pred_len * 2]` future-position buffer.
    pub fn fut_flat(&self) -> Vec<f64> {
        self.fut.iter().flat_map(|p| [p[0], p[1]]).collect()
    }
}

/// First-difference displacements of a position track; the first entry is
/// (0, 0) so the output length matches the input.
pub fn to_relative(positions: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(positions.len());
    for (t, p) in positions.iter().enumerate() {
        if t == 0 {
            out.push([0.0, 0.0]);
        } else {
            out.push([p[0] - positions[t - 1][0], p[1] - positions[t - 1][1]]);
        }
    }
    out
}

/// Builds one window per anchor frame at the given stride (in annotation
/// frames). A pedestrian joins a window only when present in all
/// `obs_len + pred_len` consecutive frames; empty windows are dropped.
pub fn build_windows(
    records: &[AnnotationRecord],
    scene_name: &str,
    obs_len: usize,
    pred_len: usize,
    stride: usize,
) -> Result<Vec<TrajectoryWindow>, DataError> {
    if obs_len < 1 || pred_len < 1 {
        return Err(DataError::Config(format!(
            "window lengths must be >= 1, got obs {obs_len} pred {pred_len}"
        )));
    }
    if stride < 1 {
        return Err(DataError::Config("window stride must be >= 1".into()));
    }
    let total = obs_len + pred_len;
    let Some(step) = frame_step(records)? else {
        return Ok(Vec::new());
    };

    // frame -> ped -> position, ordered for deterministic membership
    let mut by_frame: BTreeMap<u64, BTreeMap<u64, [f64; 2]>> = BTreeMap::new();
    for r in records {
        by_frame.entry(r.frame_id).or_default().insert(r.ped_id, [r.x, r.y]);
    }
    let frames: Vec<u64> = by_frame.keys().copied().collect();
    if frames.len() < total {
        return Ok(Vec::new());
    }

    let mut windows = Vec::new();
    let mut anchor_idx = 0;
    while anchor_idx + total <= frames.len() {
        let anchor_frame = frames[anchor_idx];
        let span: Vec<&BTreeMap<u64, [f64; 2]>> = (0..total)
            .map(|off| &by_frame[&(anchor_frame + off as u64 * step)])
            .collect();
        let ped_ids: Vec<u64> = span[0]
            .keys()
            .filter(|id| span.iter().all(|m| m.contains_key(id)))
            .copied()
            .collect();
        if !ped_ids.is_empty() {
            let mut obs = Vec::with_capacity(ped_ids.len() * obs_len);
            let mut fut = Vec::with_capacity(ped_ids.len() * pred_len);
            let mut obs_disp = Vec::with_capacity(ped_ids.len() * obs_len);
            for id in &ped_ids {
                let track: Vec<[f64; 2]> = span.iter().map(|m| m[id]).collect();
                obs.extend_from_slice(&track[..obs_len]);
                fut.extend_from_slice(&track[obs_len..]);
                obs_disp.extend(to_relative(&track[..obs_len]));
            }
            windows.push(TrajectoryWindow {
                ped_ids,
                obs,
                fut,
                obs_disp,
                obs_len,
                pred_len,
                scene_name: scene_name.to_string(),
                anchor_frame,
            });
        }
        anchor_idx += stride;
    }
    Ok(windows)
}
