//! SVG overlays of observed, ground-truth, and predicted trajectories,
//! drawn over the scene raster extent.

use crate::data::TrajectoryWindow;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Renders one window as an SVG document sized to the raster extent.
/// Per pedestrian: observed track solid, ground truth dashed, prediction
/// dotted. `predictions` holds `[N * pred_len]` absolute positions.
pub fn trajectory_overlay(
    window: &TrajectoryWindow,
    predictions: &[[f64; 2]],
    view_w: usize,
    view_h: usize,
) -> String {
    assert_eq!(predictions.len(), window.n_peds() * window.pred_len);

    // world bounding box over everything drawn, with a 5% margin
    let mut min = [f64::INFINITY, f64::INFINITY];
    let mut max = [f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in window.obs.iter().chain(window.fut.iter()).chain(predictions.iter()) {
        for a in 0..2 {
            min[a] = min[a].min(p[a]);
            max[a] = max[a].max(p[a]);
        }
    }
    let span = [(max[0] - min[0]).max(1e-9), (max[1] - min[1]).max(1e-9)];
    for a in 0..2 {
        min[a] -= 0.05 * span[a];
        max[a] += 0.05 * span[a];
    }
    let scale = (view_w as f64 / (max[0] - min[0])).min(view_h as f64 / (max[1] - min[1]));
    let off = [
        (view_w as f64 - (max[0] - min[0]) * scale) / 2.0,
        (view_h as f64 - (max[1] - min[1]) * scale) / 2.0,
    ];
    let to_view = |p: &[f64; 2]| -> (f64, f64) {
        let x = (p[0] - min[0]) * scale + off[0];
        let y = view_h as f64 - ((p[1] - min[1]) * scale + off[1]);
        (x, y)
    };
    let points = |track: &[[f64; 2]]| -> String {
        track
            .iter()
            .map(|p| {
                let (x, y) = to_view(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {view_w} {view_h}\" width=\"{view_w}\" height=\"{view_h}\">\n\
         <rect width=\"{view_w}\" height=\"{view_h}\" fill=\"#fafafa\"/>\n"
    );
    for ped in 0..window.n_peds() {
        let color = PALETTE[ped % PALETTE.len()];
        let pred = &predictions[ped * window.pred_len..(ped + 1) * window.pred_len];
        out.push_str(&format!(
            "<g fill=\"none\" stroke=\"{color}\" data-ped=\"{}\">\n",
            window.ped_ids[ped]
        ));
        out.push_str(&format!(
            "<polyline stroke-width=\"2\" points=\"{}\"/>\n",
            points(window.obs_of(ped))
        ));
        out.push_str(&format!(
            "<polyline stroke-width=\"1.5\" stroke-dasharray=\"6 4\" points=\"{}\"/>\n",
            points(window.fut_of(ped))
        ));
        out.push_str(&format!(
            "<polyline stroke-width=\"2\" stroke-dasharray=\"2 3\" points=\"{}\"/>\n",
            points(pred)
        ));
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}
