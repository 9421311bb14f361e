//! Central finite-difference checks of every analytic derivative.
//!
//! Each suite draws seeded random inputs away from the kinks of the maps it
//! checks (disparity clamp, quaternion sign flip, `|s|` at zero, alpha
//! thresholds) and compares analytic and numeric derivatives entry by
//! entry with
//!
//! ```text
//! err = |a − n| / max(|a|, |n|, REL_FLOOR)
//! ```

use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{backproject, compose_rotation, decode_camera, decode_depth, CameraCalib, RawHeadGrid};
use crate::fit::{evaluate, FitProblem, FitVariables, Mask, OptimizerConfig};
use crate::losses::{bce_loss, depth_loss, total_loss, LossParts, LossTerm, LossWeights, WeightMode};
use crate::quat::Quat;
use crate::raster::{render, render_backward, BevGrid, GradientBundle, RenderConfig};
use crate::scene::{covariance_from, covariance_jacobian, Gaussian, GaussianScene};

/// Finite-difference step.
pub const STEP: f64 = 1e-4;
/// Magnitude below which errors are measured absolutely. Stencil roundoff
/// is about `ε·|f|/h ≈ 2e-12·|f|`, which this keeps well under tolerance
/// for exactly-zero derivatives of functions of size up to ~100.
pub const REL_FLOOR: f64 = 1e-4;
/// Random configurations per suite for the per-function checks.
pub const CONFIGS: usize = 100;

/// Worst agreement over one family of derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub entries: usize,
    pub max_rel_err: f64,
    /// Location of the worst entry.
    pub worst: String,
}

impl CheckResult {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            entries: 0,
            max_rel_err: 0.0,
            worst: String::new(),
        }
    }

    fn compare(&mut self, analytic: f64, numeric: f64, at: impl FnOnce() -> String) {
        let err = rel_err(analytic, numeric);
        self.entries += 1;
        if !(err <= self.max_rel_err) {
            self.max_rel_err = err;
            self.worst = format!("{} (analytic {analytic:e}, numeric {numeric:e})", at());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub tolerance: f64,
    pub checks: Vec<CheckResult>,
    pub elapsed_s: f64,
}

impl SuiteReport {
    pub fn max_rel_err(&self) -> f64 {
        self.checks.iter().map(|c| c.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.max_rel_err <= self.tolerance)
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Fourth-order central difference of a vector-valued function of one
/// scalar. The three-point stencil's `O(h²)` error alone reaches ~1e-5 on
/// the sharper rasterizer footprints at this step.
fn central<F: FnMut(f64) -> Vec<f64>>(x: f64, mut f: F) -> Vec<f64> {
    let p2 = f(x + 2.0 * STEP);
    let p1 = f(x + STEP);
    let m1 = f(x - STEP);
    let m2 = f(x - 2.0 * STEP);
    (0..p1.len())
        .map(|i| (-p2[i] + 8.0 * p1[i] - 8.0 * m1[i] + m2[i]) / (12.0 * STEP))
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn random_unit_quat(rng: &mut ChaCha8Rng) -> Quat {
    loop {
        let q = Quat::new(
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
            uniform(rng, -1.0, 1.0),
        );
        let n = q.norm();
        if n > 0.2 && n <= 1.0 {
            return q.normalized().canonical();
        }
    }
}

/// Raw quaternion whose composed result stays clear of the `w = 0` flip.
fn random_raw_quat(rng: &mut ChaCha8Rng, q_ray: Quat, calib: &CameraCalib) -> Quat {
    loop {
        let q = Quat::new(
            uniform(rng, -1.5, 1.5),
            uniform(rng, -1.5, 1.5),
            uniform(rng, -1.5, 1.5),
            uniform(rng, -1.5, 1.5),
        );
        if q.norm() < 0.3 {
            continue;
        }
        let (q_w, _) = compose_rotation(q_ray, q, calib).expect("non-zero quaternion");
        if q_w.w > 0.1 {
            return q;
        }
    }
}

fn random_calib(rng: &mut ChaCha8Rng, width: usize, height: usize) -> CameraCalib {
    let fx = uniform(rng, 50.0, 500.0);
    CameraCalib::new(
        fx,
        fx * uniform(rng, 0.8, 1.2),
        width as f64 * uniform(rng, 0.3, 0.7),
        height as f64 * uniform(rng, 0.3, 0.7),
        random_unit_quat(rng).to_rotation_matrix(),
        Vector3::new(uniform(rng, -5.0, 5.0), uniform(rng, -5.0, 5.0), uniform(rng, -5.0, 5.0)),
        width,
        height,
        uniform(rng, 50.0, 500.0),
    )
    .expect("random rotation is orthonormal")
}

fn suite(name: &'static str, tolerance: f64, started: Instant, checks: Vec<CheckResult>) -> SuiteReport {
    SuiteReport {
        suite: name,
        tolerance,
        checks,
        elapsed_s: started.elapsed().as_secs_f64(),
    }
}

/// Depth decoding, back-projection, rotation composition and the full
/// per-pixel decode.
pub fn geometry_suite(seed: u64, tolerance: f64) -> SuiteReport {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut depth = CheckResult::new("decode_depth dz/dd");
    let mut bp = CheckResult::new("backproject d(p)/d(u, v, z)");
    let mut rot = CheckResult::new("compose_rotation dq/dq_raw");
    let mut decode = CheckResult::new("decode_camera pull-back");
    for cfg in 0..CONFIGS {
        let calib = random_calib(&mut rng, 3, 2);

        let d = uniform(&mut rng, 0.2, 0.9);
        let (_, dz) = decode_depth(d, &calib);
        let num = central(d, |x| vec![decode_depth(x, &calib).0]);
        depth.compare(dz, num[0], || format!("config {cfg}, d = {d}"));

        let uvz = [uniform(&mut rng, 0.0, 3.0), uniform(&mut rng, 0.0, 2.0), uniform(&mut rng, 0.5, 50.0)];
        let (_, jac) = backproject(uvz[0], uvz[1], uvz[2], &calib);
        for col in 0..3 {
            let num = central(uvz[col], |x| {
                let mut a = uvz;
                a[col] = x;
                backproject(a[0], a[1], a[2], &calib).0.as_slice().to_vec()
            });
            for row in 0..3 {
                bp.compare(jac[(row, col)], num[row], || format!("config {cfg}, entry ({row}, {col})"));
            }
        }

        let q_ray = crate::camera::ray_quaternion(uvz[0], uvz[1], &calib);
        let q_raw = random_raw_quat(&mut rng, q_ray, &calib);
        let (_, jac) = compose_rotation(q_ray, q_raw, &calib).unwrap();
        for col in 0..4 {
            let base = q_raw.to_array();
            let num = central(base[col], |x| {
                let mut a = base;
                a[col] = x;
                compose_rotation(q_ray, Quat::from_array(a), &calib).unwrap().0.to_array().to_vec()
            });
            for row in 0..4 {
                rot.compare(jac[(row, col)], num[row], || format!("config {cfg}, entry ({row}, {col})"));
            }
        }

        check_decode(&mut rng, &calib, cfg, &mut decode);
    }
    suite("geometry", tolerance, started, vec![depth, bp, rot, decode])
}

/// Random head outputs for `calib`, kept away from every decode kink.
fn random_raw(rng: &mut ChaCha8Rng, calib: &CameraCalib, c: usize) -> RawHeadGrid {
    let mut raw = RawHeadGrid::zeros(calib.width, calib.height, c);
    for i in 0..raw.n_pixels() {
        let (u, v) = calib.pixel_coords(i);
        raw.disparity[i] = uniform(rng, 0.2, 0.9);
        raw.offset[i] = [uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)];
        let q_ray = crate::camera::ray_quaternion(u, v, calib);
        raw.rotation[i] = random_raw_quat(rng, q_ray, calib).to_array();
        for k in 0..3 {
            let mag = uniform(rng, 0.1, 2.0);
            raw.scale[i][k] = if rng.random_bool(0.5) { mag } else { -mag };
        }
        raw.opacity_logit[i] = uniform(rng, -3.0, 3.0);
    }
    for e in &mut raw.embedding {
        *e = uniform(rng, -1.0, 1.0);
    }
    raw
}

/// Flattens the decoded scene in the field order of [`GradientBundle`].
fn scene_values(scene: &GaussianScene) -> Vec<f64> {
    let mut out = Vec::new();
    for g in &scene.gaussians {
        out.extend_from_slice(g.center.as_slice());
        out.extend_from_slice(g.scale.as_slice());
        out.extend(g.rotation.to_array());
        out.push(g.opacity);
        out.extend_from_slice(&g.embedding);
    }
    out
}

fn bundle_values(b: &GradientBundle) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..b.len() {
        out.extend_from_slice(b.center[i].as_slice());
        out.extend_from_slice(b.scale[i].as_slice());
        out.extend_from_slice(b.rotation[i].as_slice());
        out.push(b.opacity[i]);
        out.extend_from_slice(b.embedding_at(i));
    }
    out
}

fn raw_fields(raw: &mut RawHeadGrid) -> Vec<(&'static str, &mut f64)> {
    let mut out: Vec<(&'static str, &mut f64)> = Vec::new();
    out.extend(raw.disparity.iter_mut().map(|v| ("disparity", v)));
    out.extend(raw.offset.iter_mut().flatten().map(|v| ("offset", v)));
    out.extend(raw.rotation.iter_mut().flatten().map(|v| ("rotation", v)));
    out.extend(raw.scale.iter_mut().flatten().map(|v| ("scale", v)));
    out.extend(raw.opacity_logit.iter_mut().map(|v| ("opacity_logit", v)));
    out.extend(raw.embedding.iter_mut().map(|v| ("embedding", v)));
    out
}

/// Checks `pull_back` against the numeric gradient of a random linear
/// functional of the decoded scene and depths.
fn check_decode(rng: &mut ChaCha8Rng, calib: &CameraCalib, cfg: usize, out: &mut CheckResult) {
    let c = 2;
    let raw = random_raw(rng, calib, c);
    let (scene, jac) = decode_camera(&raw, calib).unwrap();
    let n = scene.len();
    let mut bundle = GradientBundle::zeros(n, c);
    for i in 0..n {
        bundle.center[i] = Vector3::from_fn(|_, _| uniform(rng, -1.0, 1.0));
        bundle.scale[i] = Vector3::from_fn(|_, _| uniform(rng, -1.0, 1.0));
        bundle.rotation[i] = nalgebra::Vector4::from_fn(|_, _| uniform(rng, -1.0, 1.0));
        bundle.opacity[i] = uniform(rng, -1.0, 1.0);
        for k in 0..c {
            bundle.embedding[i * c + k] = uniform(rng, -1.0, 1.0);
        }
    }
    let d_depth: Vec<f64> = (0..n).map(|_| uniform(rng, -1.0, 1.0)).collect();
    let weights = bundle_values(&bundle);
    let objective = |r: &RawHeadGrid| {
        let (s, j) = decode_camera(r, calib).unwrap();
        let scene_part: f64 = scene_values(&s).iter().zip(&weights).map(|(a, b)| a * b).sum();
        let depth_part: f64 = j.depths().iter().zip(&d_depth).map(|(a, b)| a * b).sum();
        scene_part + depth_part
    };
    let mut analytic = jac.pull_back(&bundle, 0, Some(&d_depth));
    let analytic: Vec<(&'static str, f64)> = raw_fields(&mut analytic).into_iter().map(|(k, v)| (k, *v)).collect();
    for (idx, &(field, a)) in analytic.iter().enumerate() {
        let eval_at = |x: f64| {
            let mut r = raw.clone();
            *raw_fields(&mut r)[idx].1 = x;
            vec![objective(&r)]
        };
        let x0 = *raw_fields(&mut raw.clone())[idx].1;
        let num = central(x0, eval_at)[0];
        out.compare(a, num, || format!("config {cfg}, {field} entry {idx}"));
    }
}

/// Covariance construction.
pub fn scene_suite(seed: u64, tolerance: f64) -> SuiteReport {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let mut cov = CheckResult::new("covariance_3d d(Σ)/d(q, s)");
    const ENTRIES: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    for cfg in 0..CONFIGS {
        let q = random_unit_quat(&mut rng);
        let s = Vector3::from_fn(|_, _| uniform(&mut rng, 0.1, 3.0));
        let jac = covariance_jacobian(q, &s);
        let mut x0 = [0.0; 7];
        x0[..4].copy_from_slice(&q.to_array());
        x0[4..].copy_from_slice(s.as_slice());
        for col in 0..7 {
            let num = central(x0[col], |x| {
                let mut a = x0;
                a[col] = x;
                let m = covariance_from(Quat::new(a[0], a[1], a[2], a[3]), &Vector3::new(a[4], a[5], a[6]));
                ENTRIES.iter().map(|&(i, j)| m[(i, j)]).collect()
            });
            for row in 0..6 {
                cov.compare(jac[row][col], num[row], || format!("config {cfg}, entry ({row}, {col})"));
            }
        }
    }
    suite("scene", tolerance, started, vec![cov])
}

/// Segmentation, depth and total losses in both weighting modes.
pub fn loss_suite(seed: u64, tolerance: f64) -> SuiteReport {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    let mut bce = CheckResult::new("bce_loss d/dlogits");
    let mut depth = CheckResult::new("depth_loss d/dpred");
    let mut total = CheckResult::new("total_loss d/d(parts, log_vars)");
    for cfg in 0..CONFIGS {
        let n = rng.random_range(1..=16);
        let logits: Vec<f64> = (0..n).map(|_| uniform(&mut rng, -8.0, 8.0)).collect();
        let target: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let mask: Vec<bool> = (0..n).map(|i| i == 0 || rng.random_bool(0.7)).collect();
        let analytic = bce_loss(&logits, &target, Some(&mask)).unwrap().grad;
        for i in 0..n {
            let num = central(logits[i], |x| {
                let mut l = logits.clone();
                l[i] = x;
                vec![bce_loss(&l, &target, Some(&mask)).unwrap().value]
            });
            bce.compare(analytic[i], num[0], || format!("config {cfg}, logit {i}"));
        }

        // Keep |log ratio| well above the step so the kink is never straddled.
        let truth: Vec<f64> = (0..n).map(|_| uniform(&mut rng, 0.5, 60.0)).collect();
        let pred: Vec<f64> = truth
            .iter()
            .map(|t| {
                let r = uniform(&mut rng, 0.05, 1.0);
                t * if rng.random_bool(0.5) { r.exp() } else { (-r).exp() }
            })
            .collect();
        let analytic = depth_loss(&pred, &truth, Some(&mask)).unwrap().grad;
        for i in 0..n {
            let num = central(pred[i], |x| {
                let mut p = pred.clone();
                p[i] = x;
                vec![depth_loss(&p, &truth, Some(&mask)).unwrap().value]
            });
            depth.compare(analytic[i], num[0], || format!("config {cfg}, pred {i}"));
        }

        let parts = [uniform(&mut rng, 0.0, 2.0), uniform(&mut rng, 0.0, 2.0), uniform(&mut rng, 0.0, 2.0)];
        let log_vars = [uniform(&mut rng, -2.0, 2.0), uniform(&mut rng, -2.0, 2.0), uniform(&mut rng, -2.0, 2.0)];
        let to_parts = |p: [f64; 3]| LossParts {
            sem: Some(p[0]),
            sem_early: Some(p[1]),
            depth: Some(p[2]),
        };
        let fixed = LossWeights {
            bce: uniform(&mut rng, 0.0, 2.0),
            depth: uniform(&mut rng, 0.0, 2.0),
            mode: WeightMode::Fixed,
        };
        for mode in [WeightMode::Fixed, WeightMode::Uncertainty { log_vars }] {
            let w = LossWeights { mode, ..fixed };
            let t = total_loss(&to_parts(parts), &w);
            for (k, term) in LossTerm::ALL.into_iter().enumerate() {
                let num = central(parts[k], |x| {
                    let mut p = parts;
                    p[k] = x;
                    vec![total_loss(&to_parts(p), &w).value]
                });
                total.compare(t.d_part(term), num[0], || format!("config {cfg}, {mode:?}, part {k}"));
                if let WeightMode::Uncertainty { log_vars } = mode {
                    let num = central(log_vars[k], |x| {
                        let mut s = log_vars;
                        s[k] = x;
                        let w = LossWeights {
                            mode: WeightMode::Uncertainty { log_vars: s },
                            ..fixed
                        };
                        vec![total_loss(&to_parts(parts), &w).value]
                    });
                    total.compare(t.d_log_var(term), num[0], || format!("config {cfg}, log_var {k}"));
                }
            }
        }
    }
    suite("losses", tolerance, started, vec![bce, depth, total])
}

fn random_scene(rng: &mut ChaCha8Rng, n: usize, c: usize, half: f64) -> GaussianScene {
    let mut scene = GaussianScene::new(c);
    for i in 0..n {
        scene
            .push(Gaussian {
                // Distinct heights keep the depth order stable under perturbation.
                center: Vector3::new(
                    uniform(rng, -half, half),
                    uniform(rng, -half, half),
                    i as f64 * 0.37 + uniform(rng, 0.0, 0.1),
                ),
                scale: Vector3::from_fn(|_, _| uniform(rng, 0.3, 1.5)),
                rotation: random_unit_quat(rng),
                opacity: uniform(rng, 0.1, 0.9),
                embedding: (0..c).map(|_| uniform(rng, -1.0, 1.0)).collect(),
            })
            .unwrap();
    }
    scene
}

/// Full rasterizer Jacobian of `⟨W, render(scene)⟩` for random weights `W`,
/// with every compositing shortcut disabled.
pub fn raster_suite(seed: u64, tolerance: f64) -> SuiteReport {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
    let cfg = RenderConfig {
        x_range: [-3.0, 3.0],
        y_range: [-3.0, 3.0],
        resolution: 0.5,
        tile: 4,
        ..RenderConfig::default()
    }
    .without_thresholds();
    let mut check = CheckResult::new("render_backward d/d(scene)");
    let mut z_zero = CheckResult::new("render_backward dL/dz convention");
    for case in 0..10 {
        let n = rng.random_range(1..=20);
        let c = [1, 3][case % 2];
        let scene = random_scene(&mut rng, n, c, 3.0);
        let mut w = BevGrid::zeros(cfg.height(), cfg.width(), c);
        for v in &mut w.data {
            *v = uniform(&mut rng, -1.0, 1.0);
        }
        let bundle = render_backward(&scene, &cfg, &w).unwrap();
        let objective =
            |s: &GaussianScene| -> f64 { render(s, &cfg).data.iter().zip(&w.data).map(|(a, b)| a * b).sum() };
        let analytic = bundle_values(&bundle);
        let base = scene_values(&scene);
        let stride = 11 + c;
        for (idx, &a) in analytic.iter().enumerate() {
            let num = central(base[idx], |x| {
                let mut v = base.clone();
                v[idx] = x;
                vec![objective(&scene_from_values(&v, c))]
            })[0];
            let (g, field) = (idx / stride, idx % stride);
            let target = if field == 2 { &mut z_zero } else { &mut check };
            target.compare(a, num, || format!("case {case}, gaussian {g}, field {field}"));
        }
    }
    suite("raster", tolerance, started, vec![check, z_zero])
}

fn scene_from_values(v: &[f64], c: usize) -> GaussianScene {
    let gaussians = v
        .chunks_exact(11 + c)
        .map(|r| Gaussian {
            center: Vector3::new(r[0], r[1], r[2]),
            scale: Vector3::new(r[3], r[4], r[5]),
            rotation: Quat::new(r[6], r[7], r[8], r[9]),
            opacity: r[10],
            embedding: r[11..].to_vec(),
        })
        .collect();
    GaussianScene::from_parts(c, gaussians)
}

/// Downward-looking camera `height` meters above `(x, y)`.
fn overhead_camera(x: f64, y: f64, height: f64, width: usize, rows: usize) -> CameraCalib {
    // Camera x → world x, camera y → world −y, optical axis → world −z.
    let r = Matrix3::new(1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0);
    CameraCalib::new(
        2.0,
        2.0,
        width as f64 / 2.0,
        rows as f64 / 2.0,
        r,
        Vector3::new(x, y, height),
        width,
        rows,
        2.0,
    )
    .unwrap()
}

/// Small two-camera fitting problem with `width × rows` pixels per camera.
pub fn tiny_problem(seed: u64, width: usize, rows: usize, mode: WeightMode) -> FitProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let calibs = vec![
        overhead_camera(-0.5, 0.3, 5.0, width, rows),
        overhead_camera(0.6, -0.4, 6.0, width, rows),
    ];
    let c = 3;
    let mut cameras = Vec::new();
    let mut depth_gt = Vec::new();
    for calib in &calibs {
        let mut raw = random_raw(&mut rng, calib, c);
        for i in 0..raw.n_pixels() {
            // The fit stores the disparity logit.
            let d = raw.disparity[i];
            raw.disparity[i] = (d / (1.0 - d)).ln();
            for o in &mut raw.offset[i] {
                *o *= 0.5;
            }
        }
        depth_gt.push((0..raw.n_pixels()).map(|_| uniform(&mut rng, 0.5, 3.0)).collect());
        cameras.push(raw);
    }
    let cfg = RenderConfig {
        x_range: [-2.0, 2.0],
        y_range: [-2.0, 2.0],
        resolution: 0.5,
        tile: 4,
        ..RenderConfig::default()
    }
    .without_thresholds();
    let mut target_mask = Mask::new(cfg.height(), cfg.width());
    for v in &mut target_mask.data {
        *v = rng.random_bool(0.4);
    }
    FitProblem {
        calibs,
        init: FitVariables {
            cameras,
            head_weight: (0..c).map(|_| uniform(&mut rng, -2.0, 2.0)).collect(),
            head_bias: uniform(&mut rng, -0.5, 0.5),
            log_vars: [uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0), uniform(&mut rng, -1.0, 1.0)],
        },
        target_mask,
        depth_gt: Some(depth_gt),
        cfg,
        weights: LossWeights {
            bce: 1.0,
            depth: 0.5,
            mode,
        },
        optimizer: OptimizerConfig::default(),
    }
}

/// Gradient of the scalar training loss with respect to every raw
/// variable, on two-camera problems of one and two pixels per camera, in
/// both weighting modes.
pub fn end_to_end_suite(seed: u64, tolerance: f64) -> SuiteReport {
    let started = Instant::now();
    let mut checks = Vec::new();
    for (width, rows) in [(1, 1), (2, 1)] {
        for (mode_name, mode) in [
            ("fixed", WeightMode::Fixed),
            ("uncertainty", WeightMode::Uncertainty { log_vars: [0.0; 3] }),
        ] {
            let mut check = CheckResult::new(&format!("fit loss, 2 cameras × {} px, {mode_name}", width * rows));
            let problem = tiny_problem(seed.wrapping_add(4), width, rows, mode);
            let eval = evaluate(&problem, &problem.init).unwrap();
            let analytic = eval.grad.to_vec();
            let base = problem.init.to_vec();
            let mut vars = problem.init.clone();
            for (idx, &a) in analytic.iter().enumerate() {
                let num = central(base[idx], |x| {
                    let mut v = base.clone();
                    v[idx] = x;
                    vars.set_from_slice(&v);
                    vec![evaluate(&problem, &vars).unwrap().loss]
                })[0];
                check.compare(a, num, || format!("variable {idx}"));
            }
            checks.push(check);
        }
    }
    suite("end-to-end", tolerance, started, checks)
}

/// Every suite. `base_tol` applies to the geometry, scene and rasterizer
/// suites; losses are held to `base_tol / 10` and the end-to-end chain to
/// `base_tol * 10`.
pub fn run_all(seed: u64, base_tol: f64) -> Vec<SuiteReport> {
    vec![
        geometry_suite(seed, base_tol),
        scene_suite(seed, base_tol),
        loss_suite(seed, base_tol / 10.0),
        raster_suite(seed, base_tol),
        end_to_end_suite(seed, base_tol * 10.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rel_err_floor() {
        assert_eq!(rel_err(1.0, 1.0), 0.0);
        assert_eq!(rel_err(2.0, 1.0), 0.5);
        assert_eq!(rel_err(0.0, 1e-9), 1e-5);
    }

    #[test]
    fn tiny_problem_is_valid() {
        let p = tiny_problem(0, 2, 1, WeightMode::Fixed);
        p.check().unwrap();
        let e = evaluate(&p, &p.init).unwrap();
        assert_eq!(e.scene.len(), 4);
        assert!(e.grid.data.iter().any(|&v| v != 0.0));
    }
}
