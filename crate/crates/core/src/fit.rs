//! Inverse-rendering harness.
//!
//! Free per-pixel parameters stand in for the prediction heads. Each step
//! decodes every camera, renders the BeV grid, applies a linear logit head
//! directly on the rendered features, and descends on
//! `λ_bce·BCE + λ_depth·L_depth` through the full analytic backward chain.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{self, decode_camera, encode_depth, CameraCalib, GeometryError, RawHeadGrid};
use crate::losses::{bce_loss, depth_loss, total_loss, LossError, LossParts, LossTerm, LossWeights, WeightMode};
use crate::raster::{render, render_backward, BevGrid, RasterError, RenderConfig};
use crate::scene::{concat_scenes, GaussianScene, SceneError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("unknown preset {0:?} (expected single-box, two-boxes or lane-stripe)")]
    UnknownPreset(String),
    #[error("loss became non-finite at step {step}")]
    DivergenceDetected { step: usize },
    #[error("invalid fit problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Binary `H × W` raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn as_targets(&self) -> Vec<f64> {
        self.data.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect()
    }
}

/// Intersection over union; 1 when both masks are empty.
pub fn iou(pred: &Mask, target: &Mask) -> f64 {
    assert_eq!(
        (pred.height, pred.width),
        (target.height, target.width),
        "iou of differently shaped masks"
    );
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &t) in pred.data.iter().zip(&target.data) {
        inter += (p && t) as usize;
        union += (p || t) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    SingleBox,
    TwoBoxes,
    LaneStripe,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::SingleBox, Preset::TwoBoxes, Preset::LaneStripe];

    pub fn name(self) -> &'static str {
        match self {
            Preset::SingleBox => "single-box",
            Preset::TwoBoxes => "two-boxes",
            Preset::LaneStripe => "lane-stripe",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| FitError::UnknownPreset(s.to_string()))
    }
}

/// Synthetic ground truth for one preset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub preset: Preset,
    pub cfg: RenderConfig,
    pub target_mask: Mask,
    pub calibs: Vec<CameraCalib>,
    /// Depth of the ground plane `z = 0` per feature pixel, per camera.
    pub depth_gt: Vec<Vec<f64>>,
}

/// Half-width of the square BeV window the presets live in (meters).
pub const PRESET_HALF_EXTENT: f64 = 12.0;
const PRESET_FEATURE_SIZE: usize = 24;

fn preset_config() -> RenderConfig {
    RenderConfig {
        x_range: [-PRESET_HALF_EXTENT, PRESET_HALF_EXTENT],
        y_range: [-PRESET_HALF_EXTENT, PRESET_HALF_EXTENT],
        ..RenderConfig::default()
    }
}

/// Camera at `eye` looking at `target` with image x pointing along
/// `forward × up` and image y down.
fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> Matrix3<f64> {
    let forward = (target - eye).normalize();
    let up = Vector3::z();
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right);
    Matrix3::from_columns(&[right, down, forward])
}

fn synth_camera(eye: Vector3<f64>, target: Vector3<f64>, fov_deg: f64, f_ref: f64) -> CameraCalib {
    let n = PRESET_FEATURE_SIZE;
    let f = 0.5 * n as f64 / (0.5 * fov_deg.to_radians()).tan();
    let c = 0.5 * (n as f64 - 1.0);
    CameraCalib::new(f, f, c, c, look_at(eye, target), eye, n, n, f_ref)
        .expect("preset cameras are valid by construction")
}

/// Depth at which each pixel ray meets the ground plane.
fn ground_depth(calib: &CameraCalib) -> Vec<f64> {
    (0..calib.n_pixels())
        .map(|i| {
            let (u, v) = calib.pixel_coords(i);
            let dir = calib.rotation * calib.ray(u, v);
            // The ray has unit optical-axis component, so its parameter is the depth.
            -calib.translation.z / dir.z
        })
        .collect()
}

fn rasterize_rect(mask: &mut Mask, cfg: &RenderConfig, center: (f64, f64), half: (f64, f64), angle: f64) {
    let (s, c) = angle.sin_cos();
    for r in 0..mask.height {
        for col in 0..mask.width {
            let (x, y) = cfg.pixel_center(r, col);
            let (dx, dy) = (x - center.0, y - center.1);
            let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
            if lx.abs() <= half.0 && ly.abs() <= half.1 {
                mask.data[r * mask.width + col] = true;
            }
        }
    }
}

/// Builds the target mask, cameras and ground-truth depth for a preset.
///
/// Axis-aligned edges sit on pixel boundaries, so an axis-aligned box of
/// `a × b` meters covers exactly `(a/res)·(b/res)` pixels.
pub fn synth_scene(preset: Preset, seed: u64) -> SynthScene {
    let cfg = preset_config();
    let res = cfg.resolution;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = Mask::new(cfg.height(), cfg.width());
    // Jitter in whole pixels keeps box edges on pixel boundaries.
    let mut jitter = |max_px: i32| rng.random_range(-max_px..=max_px) as f64 * res;

    let calibs = match preset {
        Preset::SingleBox => {
            let center = (jitter(4), jitter(4));
            rasterize_rect(&mut mask, &cfg, center, (3.0, 2.0), 0.0);
            vec![synth_camera(
                Vector3::new(0.0, -6.0, 18.0),
                Vector3::new(0.0, 0.5, 0.0),
                80.0,
                1.0,
            )]
        }
        Preset::TwoBoxes => {
            let a = (-5.0 + jitter(2), 2.0 + jitter(2));
            rasterize_rect(&mut mask, &cfg, a, (2.0, 3.0), 0.0);
            let b = (5.0 + jitter(2), -3.0 + jitter(2));
            let angle = (20.0 + 10.0 * rng.random::<f64>()).to_radians();
            rasterize_rect(&mut mask, &cfg, b, (2.5, 1.25), angle);
            vec![
                synth_camera(Vector3::new(-6.0, -4.0, 14.0), Vector3::new(-5.0, 1.5, 0.0), 75.0, 1.0),
                synth_camera(Vector3::new(6.0, -8.0, 14.0), Vector3::new(5.0, -2.5, 0.0), 65.0, 1.0),
            ]
        }
        Preset::LaneStripe => {
            let x = jitter(6);
            // 1 m wide: [x − 0.5, x + 0.5] spans two 0.5 m columns.
            rasterize_rect(&mut mask, &cfg, (x, 0.0), (0.5, PRESET_HALF_EXTENT), 0.0);
            vec![synth_camera(
                Vector3::new(0.0, -6.0, 18.0),
                Vector3::new(0.0, 0.5, 0.0),
                80.0,
                1.0,
            )]
        }
    };
    let depth_gt = calibs.iter().map(ground_depth).collect();
    SynthScene {
        preset,
        cfg,
        target_mask: mask,
        calibs,
        depth_gt,
    }
}

/// Optimization variables.
///
/// `cameras[n].disparity` holds the disparity *logit*; every other raw
/// field has its usual pre-activation meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct FitVariables {
    pub cameras: Vec<RawHeadGrid>,
    pub head_weight: Vec<f64>,
    pub head_bias: f64,
    /// Log-variances, used only in uncertainty weighting mode.
    pub log_vars: [f64; 3],
}

impl FitVariables {
    /// Same-shaped variables filled with zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            cameras: self
                .cameras
                .iter()
                .map(|c| RawHeadGrid::zeros(c.width, c.height, c.feature_dim))
                .collect(),
            head_weight: vec![0.0; self.head_weight.len()],
            head_bias: 0.0,
            log_vars: [0.0; 3],
        }
    }

    fn visit<F: FnMut(&mut f64)>(&mut self, mut f: F) {
        for cam in &mut self.cameras {
            cam.disparity.iter_mut().for_each(&mut f);
            cam.offset.iter_mut().flatten().for_each(&mut f);
            cam.rotation.iter_mut().flatten().for_each(&mut f);
            cam.scale.iter_mut().flatten().for_each(&mut f);
            cam.opacity_logit.iter_mut().for_each(&mut f);
            cam.embedding.iter_mut().for_each(&mut f);
        }
        self.head_weight.iter_mut().for_each(&mut f);
        f(&mut self.head_bias);
        self.log_vars.iter_mut().for_each(&mut f);
    }

    /// Flattens every variable in a fixed order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.clone().visit(|v| out.push(*v));
        out
    }

    /// Inverse of [`FitVariables::to_vec`] for same-shaped variables.
    pub fn set_from_slice(&mut self, values: &[f64]) {
        let mut it = values.iter();
        self.visit(|v| *v = *it.next().expect("too few values"));
        assert!(it.next().is_none(), "too many values");
    }

    /// Post-sigmoid head grids ready for decoding.
    pub fn decoded_inputs(&self) -> Vec<RawHeadGrid> {
        self.cameras
            .iter()
            .map(|c| {
                let mut raw = c.clone();
                raw.disparity.iter_mut().for_each(|d| *d = camera::sigmoid(*d));
                raw
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub steps: usize,
    /// Heavy-ball coefficient; 0 gives plain gradient descent.
    pub momentum: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            steps: 400,
            momentum: 0.9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub calibs: Vec<CameraCalib>,
    pub init: FitVariables,
    pub target_mask: Mask,
    pub depth_gt: Option<Vec<Vec<f64>>>,
    pub cfg: RenderConfig,
    pub weights: LossWeights,
    pub optimizer: OptimizerConfig,
}

/// Embedding width used by the presets.
pub const PRESET_FEATURE_DIM: usize = 4;

impl FitProblem {
    /// Preset problem with seeded initialization and default weights.
    pub fn from_preset(preset: Preset, seed: u64) -> Self {
        let synth = synth_scene(preset, seed);
        Self::from_synth(synth, seed, PRESET_FEATURE_DIM)
    }

    pub fn from_synth(synth: SynthScene, seed: u64, feature_dim: usize) -> Self {
        // Offset the stream so initialization is not correlated with the
        // scene jitter drawn from the same seed.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let unit = Normal::<f64>::new(0.0, 1.0).unwrap();
        let mut cameras = Vec::with_capacity(synth.calibs.len());
        for (calib, depths) in synth.calibs.iter().zip(&synth.depth_gt) {
            let mut raw = RawHeadGrid::zeros(calib.width, calib.height, feature_dim);
            for i in 0..raw.n_pixels() {
                let z = depths[i] * (0.3 * unit.sample(&mut rng)).exp();
                let d = encode_depth(z, calib);
                raw.disparity[i] = (d / (1.0 - d)).ln();
                raw.rotation[i] = [
                    1.0 + 0.1 * unit.sample(&mut rng),
                    0.1 * unit.sample(&mut rng),
                    0.1 * unit.sample(&mut rng),
                    0.1 * unit.sample(&mut rng),
                ];
                for k in 0..3 {
                    raw.scale[i][k] = 0.5 * (1.0 + 0.1 * unit.sample(&mut rng));
                }
            }
            for e in &mut raw.embedding {
                *e = 0.5 * unit.sample(&mut rng);
            }
            cameras.push(raw);
        }
        let head_weight = (0..feature_dim).map(|_| unit.sample(&mut rng)).collect();
        Self {
            calibs: synth.calibs,
            init: FitVariables {
                cameras,
                head_weight,
                head_bias: 0.0,
                log_vars: [0.0; 3],
            },
            target_mask: synth.target_mask,
            depth_gt: Some(synth.depth_gt),
            cfg: synth.cfg,
            weights: LossWeights::default(),
            optimizer: OptimizerConfig {
                seed,
                ..OptimizerConfig::default()
            },
        }
    }

    pub fn check(&self) -> Result<(), FitError> {
        let bad = |m: String| Err(FitError::InvalidProblem(m));
        self.cfg.check()?;
        self.weights.check()?;
        if self.calibs.len() != self.init.cameras.len() {
            return bad(format!(
                "{} calibrations but {} raw grids",
                self.calibs.len(),
                self.init.cameras.len()
            ));
        }
        if (self.target_mask.height, self.target_mask.width) != (self.cfg.height(), self.cfg.width()) {
            return bad("target mask shape differs from the render grid".into());
        }
        let c = self.init.head_weight.len();
        for (calib, raw) in self.calibs.iter().zip(&self.init.cameras) {
            raw.check()?;
            if raw.feature_dim != c {
                return bad(format!("raw grid has C = {} but the head has {c}", raw.feature_dim));
            }
            if (raw.width, raw.height) != (calib.width, calib.height) {
                return bad("raw grid shape differs from its calibration".into());
            }
        }
        if let Some(gt) = &self.depth_gt {
            if gt.len() != self.calibs.len() || gt.iter().zip(&self.calibs).any(|(g, c)| g.len() != c.n_pixels()) {
                return bad("depth ground truth does not match the cameras".into());
            }
        }
        if !(self.optimizer.learning_rate >= 0.0 && (0.0..1.0).contains(&self.optimizer.momentum)) {
            return bad("learning rate must be >= 0 and momentum in [0, 1)".into());
        }
        Ok(())
    }
}

/// Loss, gradient and intermediate products at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub parts: LossParts,
    pub grad: FitVariables,
    pub scene: GaussianScene,
    pub grid: BevGrid,
    pub logits: Vec<f64>,
    /// Decoded depths, concatenated over cameras.
    pub depths: Vec<f64>,
}

impl Evaluation {
    pub fn predicted_mask(&self, height: usize, width: usize) -> Mask {
        Mask {
            height,
            width,
            data: self.logits.iter().map(|&l| l > 0.0).collect(),
        }
    }
}

/// Evaluates the total loss and its gradient with respect to every variable.
pub fn evaluate(problem: &FitProblem, vars: &FitVariables) -> Result<Evaluation, FitError> {
    let c = vars.head_weight.len();
    let inputs = vars.decoded_inputs();
    let mut scenes = Vec::with_capacity(inputs.len());
    let mut jacobians = Vec::with_capacity(inputs.len());
    for (raw, calib) in inputs.iter().zip(&problem.calibs) {
        let (s, j) = decode_camera(raw, calib)?;
        scenes.push(s);
        jacobians.push(j);
    }
    let scene = if scenes.is_empty() {
        GaussianScene::new(c)
    } else {
        concat_scenes(&scenes)?
    };
    let grid = render(&scene, &problem.cfg);

    let n_px = grid.height * grid.width;
    let logits: Vec<f64> = (0..n_px)
        .map(|p| {
            let f = &grid.data[p * c..(p + 1) * c];
            f.iter().zip(&vars.head_weight).map(|(a, b)| a * b).sum::<f64>() + vars.head_bias
        })
        .collect();
    let bce = bce_loss(&logits, &problem.target_mask.as_targets(), None)?;

    let depths: Vec<f64> = jacobians.iter().flat_map(|j| j.depths()).collect();
    let depth = match &problem.depth_gt {
        Some(gt) => {
            let gt: Vec<f64> = gt.iter().flatten().copied().collect();
            Some(depth_loss(&depths, &gt, None)?)
        }
        None => None,
    };

    let weights = match problem.weights.mode {
        WeightMode::Fixed => problem.weights,
        WeightMode::Uncertainty { .. } => LossWeights {
            mode: WeightMode::Uncertainty { log_vars: vars.log_vars },
            ..problem.weights
        },
    };
    let parts = LossParts {
        sem: None,
        sem_early: Some(bce.value),
        depth: depth.as_ref().map(|d| d.value),
    };
    let total = total_loss(&parts, &weights);

    let mut grad = vars.zeros_like();
    let w_bce = total.d_part(LossTerm::SemEarly);
    let mut d_grid = BevGrid::zeros(grid.height, grid.width, c);
    for p in 0..n_px {
        let d_logit = w_bce * bce.grad[p];
        if d_logit == 0.0 {
            continue;
        }
        grad.head_bias += d_logit;
        let f = &grid.data[p * c..(p + 1) * c];
        for k in 0..c {
            grad.head_weight[k] += d_logit * f[k];
            d_grid.data[p * c + k] = d_logit * vars.head_weight[k];
        }
    }
    let bundle = render_backward(&scene, &problem.cfg, &d_grid)?;

    let d_depth: Option<Vec<f64>> = depth.map(|d| {
        let w = total.d_part(LossTerm::Depth);
        d.grad.iter().map(|g| g * w).collect()
    });
    let mut first = 0;
    for (n, jac) in jacobians.iter().enumerate() {
        let m = jac.pixels.len();
        let dz = d_depth.as_deref().map(|d| &d[first..first + m]);
        let mut g = jac.pull_back(&bundle, first, dz);
        for (d_disp, &d) in g.disparity.iter_mut().zip(&inputs[n].disparity) {
            *d_disp *= d * (1.0 - d);
        }
        grad.cameras[n] = g;
        first += m;
    }
    if matches!(problem.weights.mode, WeightMode::Uncertainty { .. }) {
        grad.log_vars = total.d_log_vars;
    }

    Ok(Evaluation {
        loss: total.value,
        parts,
        grad,
        scene,
        grid,
        logits,
        depths,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub preset: Option<Preset>,
    pub seed: u64,
    /// Loss before each update.
    pub losses: Vec<f64>,
    pub final_loss: f64,
    pub final_iou: f64,
    /// Mean `|log z − log z_gt|` of the final decode, when ground truth exists.
    pub depth_error: Option<f64>,
    /// Not serialized, so report files are reproducible.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl FitReport {
    /// Equality ignoring wall time.
    pub fn same_result(&self, other: &FitReport) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.preset == other.preset
            && self.seed == other.seed
            && bits(&self.losses) == bits(&other.losses)
            && self.final_loss.to_bits() == other.final_loss.to_bits()
            && self.final_iou.to_bits() == other.final_iou.to_bits()
            && self.depth_error.map(f64::to_bits) == other.depth_error.map(f64::to_bits)
    }
}

pub struct FitOutcome {
    pub report: FitReport,
    pub scene: GaussianScene,
    pub variables: FitVariables,
}

/// Runs heavy-ball gradient descent from `problem.init`.
pub fn fit(problem: &FitProblem) -> Result<FitOutcome, FitError> {
    fit_preset(problem, None)
}

pub fn fit_preset(problem: &FitProblem, preset: Option<Preset>) -> Result<FitOutcome, FitError> {
    problem.check()?;
    let started = Instant::now();
    let opt = problem.optimizer;
    let mut vars = problem.init.clone();
    let mut params = vars.to_vec();
    let mut velocity = vec![0.0; params.len()];
    let mut losses = Vec::with_capacity(opt.steps);
    for step in 0..opt.steps {
        vars.set_from_slice(&params);
        let eval = evaluate(problem, &vars)?;
        if !eval.loss.is_finite() {
            return Err(FitError::DivergenceDetected { step });
        }
        losses.push(eval.loss);
        let grad = eval.grad.to_vec();
        for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
            *v = opt.momentum * *v + g;
            *p -= opt.learning_rate * *v;
        }
    }
    vars.set_from_slice(&params);
    let eval = evaluate(problem, &vars)?;
    if !eval.loss.is_finite() {
        return Err(FitError::DivergenceDetected { step: opt.steps });
    }
    let pred = eval.predicted_mask(problem.cfg.height(), problem.cfg.width());
    let report = FitReport {
        preset,
        seed: opt.seed,
        losses,
        final_loss: eval.loss,
        final_iou: iou(&pred, &problem.target_mask),
        depth_error: eval.parts.depth,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok(FitOutcome {
        report,
        scene: eval.scene,
        variables: vars,
    })
}
