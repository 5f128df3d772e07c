//! Per-scene and aggregate metric reports in the experiment CSV layout.

/// Evaluation result for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub scene: String,
    /// Average displacement error, meters.
    pub ade: f64,
    /// Final displacement error, meters.
    pub fde: f64,
    pub n_windows: usize,
}

/// Scene rows of one protocol run; the AVG row is derived, not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub scenes: Vec<MetricsReport>,
}

pub const REPORT_HEADER: &str = "scene,ade_m,fde_m,n_windows";

impl ExperimentReport {
    /// Aggregate row: arithmetic mean of the per-scene metric values, total
    /// window count.
    pub fn average(&self) -> MetricsReport {
        let n = self.scenes.len().max(1) as f64;
        MetricsReport {
            scene: "AVG".to_string(),
            ade: self.scenes.iter().map(|s| s.ade).sum::<f64>() / n,
            fde: self.scenes.iter().map(|s| s.fde).sum::<f64>() / n,
            n_windows: self.scenes.iter().map(|s| s.n_windows).sum(),
        }
    }

    /// CSV: header, one row per scene, final `AVG` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for row in self.scenes.iter().chain(std::iter::once(&self.average())) {
            out.push_str(&format!("{},{},{},{}\n", row.scene, row.ade, row.fde, row.n_windows));
        }
        out
    }
}

/// Paired ablation CSV: the with-maps block followed by the without-maps
/// block, each introduced by a `# configuration:` comment line.
pub fn ablation_csv(with_maps: &ExperimentReport, without_maps: &ExperimentReport) -> String {
    format!(
        "# configuration: w/ maps\n{}# configuration: w/o maps\n{}",
        with_maps.to_csv(),
        without_maps.to_csv()
    )
}

/// Loss-curve CSV: one row per epoch.
pub fn loss_curve_csv(epoch_losses: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, loss) in epoch_losses.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, loss));
    }
    out
}
