//! Gradient-descent training, scene evaluation, and the leave-one-out
//! experiment runner.

use std::collections::BTreeMap;

use crate::config::RunConfig;
use crate::data::{load_scene, SceneAssets, SceneData, TrajectoryWindow};
use crate::metrics;
use crate::model::Model;
use crate::report::{ExperimentReport, MetricsReport};
use crate::tensor::{Scalar, Tape};
use crate::Error;

/// Knobs of the inner training loop. One SGD step per window; gradients are
/// clipped to a global norm before each step.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub lr: f64,
    pub epochs: usize,
    pub grad_clip: f64,
    /// Stop after this many SGD steps even mid-epoch.
    pub max_steps: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { lr: 0.01, epochs: 64, grad_clip: 1.0, max_steps: None }
    }
}

/// Per-epoch mean training loss, in order.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Trains in place over `(window, assets)` pairs, visiting windows in the
/// given order each epoch. Deterministic for a fixed model seed and input
/// order.
pub fn train_on_windows<T: Scalar>(
    model: &mut Model<T>,
    items: &[(&TrajectoryWindow, &SceneAssets)],
    opts: &TrainOptions,
) -> Result<TrainReport, Error> {
    if items.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    let mut steps = 0usize;
    'epochs: for _ in 0..opts.epochs {
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for (window, assets) in items {
            if let Some(cap) = opts.max_steps {
                if steps >= cap {
                    if count > 0 {
                        epoch_losses.push(sum / count as f64);
                    }
                    break 'epochs;
                }
            }
            let mut tape = Tape::new();
            let pass = model.forward(&mut tape, window, assets)?;
            let truth = tape.leaf_from_f64(&window.fut_flat(), &[window.n_peds(), window.pred_len, 2])?;
            let (loss, _, _) = metrics::composite_loss(&mut tape, pass.prediction, truth)?;
            let loss_value = tape.scalar_value(loss).to_f64();
            tape.backward(loss)?;
            model.params.absorb_grads(&tape, &pass.bound);
            model.params.clip_grad_norm(opts.grad_clip);
            model.params.sgd_step(opts.lr)?;
            sum += loss_value;
            count += 1;
            steps += 1;
        }
        if count > 0 {
            epoch_losses.push(sum / count as f64);
        }
    }
    Ok(TrainReport { epoch_losses, steps })
}

/// Metrics of one window: (ade, fde), forward only.
pub fn window_metrics<T: Scalar>(
    model: &Model<T>,
    window: &TrajectoryWindow,
    assets: &SceneAssets,
) -> Result<(f64, f64), Error> {
    let mut tape = Tape::new();
    let pass = model.forward(&mut tape, window, assets)?;
    let truth = tape.leaf_from_f64(&window.fut_flat(), &[window.n_peds(), window.pred_len, 2])?;
    let a = metrics::ade(&mut tape, pass.prediction, truth)?;
    let f = metrics::fde(&mut tape, pass.prediction, truth)?;
    Ok((tape.scalar_value(a).to_f64(), tape.scalar_value(f).to_f64()))
}

/// Scene-level evaluation: the per-pedestrian mean over every window, i.e.
/// window metrics weighted by pedestrian count.
pub fn evaluate<T: Scalar>(model: &Model<T>, scene: &SceneData) -> Result<MetricsReport, Error> {
    let mut ade_sum = 0.0f64;
    let mut fde_sum = 0.0f64;
    let mut total_peds = 0usize;
    for window in &scene.windows {
        let (a, f) = window_metrics(model, window, &scene.assets)?;
        let n = window.n_peds() as f64;
        ade_sum += a * n;
        fde_sum += f * n;
        total_peds += window.n_peds();
    }
    if total_peds == 0 {
        return Err(Error::Config(format!("scene {} has no evaluation windows", scene.name)));
    }
    Ok(MetricsReport {
        scene: scene.name.clone(),
        ade: ade_sum / total_peds as f64,
        fde: fde_sum / total_peds as f64,
        n_windows: scene.windows.len(),
    })
}

/// Loads every configured scene and checks that channel counts agree across
/// scenes (the encoders share their input width).
pub fn load_scenes(cfg: &RunConfig) -> Result<BTreeMap<String, SceneData>, Error> {
    cfg.validate()?;
    let mut scenes = BTreeMap::new();
    let mut channels: Option<(usize, usize)> = None;
    for name in &cfg.scenes {
        let scene = load_scene(
            &cfg.scene_root,
            name,
            cfg.obs_len,
            cfg.pred_len,
            cfg.window_stride,
            cfg.use_semantic,
        )?;
        let c_img = scene.assets.frame.channels;
        let c_sem = scene.assets.semantic.as_ref().map_or(0, |g| g.class_count);
        match channels {
            None => channels = Some((c_img, c_sem)),
            Some(expected) if expected != (c_img, c_sem) => {
                return Err(Error::Config(format!(
                    "scene {name} has {c_img} frame channels / {c_sem} semantic classes, other scenes have {} / {}",
                    expected.0, expected.1
                )));
            }
            _ => {}
        }
        scenes.insert(name.clone(), scene);
    }
    Ok(scenes)
}

/// Trains one model on all configured scenes (no held-out scene).
pub fn train_full<T: Scalar>(cfg: &RunConfig) -> Result<(Model<T>, TrainReport), Error> {
    let scenes = load_scenes(cfg)?;
    let (c_img, c_sem) = scene_channels(&scenes);
    let mut model = Model::new(cfg.model_config(), c_img, c_sem, cfg.seed)?;
    let items: Vec<(&TrajectoryWindow, &SceneAssets)> = cfg
        .scenes
        .iter()
        .flat_map(|name| {
            let s = &scenes[name];
            s.windows.iter().map(move |w| (w, &s.assets))
        })
        .collect();
    let opts = TrainOptions { lr: cfg.lr, epochs: cfg.epochs, ..TrainOptions::default() };
    let report = train_on_windows(&mut model, &items, &opts)?;
    Ok((model, report))
}

/// Evaluates a fixed model on every configured scene.
pub fn evaluate_full<T: Scalar>(model: &Model<T>, cfg: &RunConfig) -> Result<ExperimentReport, Error> {
    let scenes = load_scenes(cfg)?;
    let mut rows = Vec::new();
    for name in &cfg.scenes {
        rows.push(evaluate(model, &scenes[name])?);
    }
    Ok(ExperimentReport { scenes: rows })
}

/// Full leave-one-out protocol: for each scene, train a fresh model on the
/// remaining scenes and evaluate on the held-out one. Every split trains
/// from the same seed.
pub fn run_leave_one_out<T: Scalar>(cfg: &RunConfig) -> Result<ExperimentReport, Error> {
    let scenes = load_scenes(cfg)?;
    let splits = crate::data::leave_one_out_splits(&cfg.scenes)?;
    let (c_img, c_sem) = scene_channels(&scenes);
    let mut rows = Vec::new();
    for split in &splits {
        let mut model: Model<T> = Model::new(cfg.model_config(), c_img, c_sem, cfg.seed)?;
        let items: Vec<(&TrajectoryWindow, &SceneAssets)> = split
            .train_scenes
            .iter()
            .flat_map(|name| {
                let s = &scenes[name];
                s.windows.iter().map(move |w| (w, &s.assets))
            })
            .collect();
        let opts = TrainOptions { lr: cfg.lr, epochs: cfg.epochs, ..TrainOptions::default() };
        train_on_windows(&mut model, &items, &opts)?;
        rows.push(evaluate(&model, &scenes[&split.test_scene])?);
    }
    Ok(ExperimentReport { scenes: rows })
}

fn scene_channels(scenes: &BTreeMap<String, SceneData>) -> (usize, usize) {
    scenes
        .values()
        .next()
        .map(|s| {
            (
                s.assets.frame.channels,
                s.assets.semantic.as_ref().map_or(0, |g| g.class_count),
            )
        })
        .unwrap_or((1, 0))
}
