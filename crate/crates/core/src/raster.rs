//! Orthographic top-down splatting of gaussians into a BeV feature grid.
//!
//! The grid looks down the world `−z` axis. Pixel `(row r, col c)` has its
//! center at world `x = x_min + (c + ½)·res`, `y = y_max − (r + ½)·res`, so
//! row 0 is the northern (max `y`) edge. Continuous pixel coordinates put
//! that center at `(c + ½, r + ½)`.
//!
//! Gaussians composite front to back in descending world `z`, ties broken by
//! ascending scene index:
//!
//! ```text
//! α_i = min(alpha_max, o_i · exp(−½ δᵀ Σ₂d⁻¹ δ))
//! B   = Σ_i α_i e_i Π_{j<i} (1 − α_j)
//! ```
//!
//! [`render`] bins footprints into square tiles and composites each tile in
//! parallel; [`render_naive`] loops over every gaussian for every pixel and
//! is the reference the tiled path is tested against.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scene::{covariance_3d, covariance_vjp, Gaussian, GaussianScene};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RasterError {
    #[error("gradient grid is {got:?} (H, W, C) but the render config expects {expected:?}")]
    ConfigMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("invalid render config: {0}")]
    InvalidConfig(String),
}

/// Grid geometry and compositing thresholds.
///
/// `alpha_min = 0`, `alpha_max = 1`, `t_stop = 0` and `cutoff = None`
/// disable the corresponding shortcut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Metric x extent `[x_min, x_max]` (meters).
    pub x_range: [f64; 2],
    /// Metric y extent `[y_min, y_max]` (meters).
    pub y_range: [f64; 2],
    /// Meters per pixel.
    pub resolution: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub t_stop: f64,
    /// Tile edge in pixels.
    pub tile: usize,
    /// Added to the diagonal of every 2D covariance (px²).
    pub dilation: f64,
    /// Footprint radius in standard deviations (Mahalanobis distance).
    pub cutoff: Option<f64>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            x_range: [-50.0, 50.0],
            y_range: [-50.0, 50.0],
            resolution: 0.5,
            alpha_min: 1.0 / 255.0,
            alpha_max: 0.99,
            t_stop: 1e-4,
            tile: 16,
            dilation: 0.3,
            cutoff: Some(3.0),
        }
    }
}

impl RenderConfig {
    /// Same geometry with every compositing shortcut switched off.
    pub fn without_thresholds(&self) -> Self {
        Self {
            alpha_min: 0.0,
            alpha_max: 1.0,
            t_stop: 0.0,
            cutoff: None,
            ..self.clone()
        }
    }

    pub fn height(&self) -> usize {
        grid_cells(self.y_range[1] - self.y_range[0], self.resolution)
    }

    pub fn width(&self) -> usize {
        grid_cells(self.x_range[1] - self.x_range[0], self.resolution)
    }

    pub fn check(&self) -> Result<(), RasterError> {
        let bad = |m: &str| Err(RasterError::InvalidConfig(m.to_string()));
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return bad("resolution must be positive");
        }
        if !(self.x_range[1] > self.x_range[0] && self.y_range[1] > self.y_range[0]) {
            return bad("ranges must be increasing");
        }
        if !(self.x_range.iter().chain(&self.y_range).all(|v| v.is_finite())) {
            return bad("ranges must be finite");
        }
        if self.tile == 0 {
            return bad("tile must be positive");
        }
        if !(0.0..=1.0).contains(&self.alpha_min) || !(self.alpha_max > 0.0 && self.alpha_max <= 1.0) {
            return bad("alpha thresholds must lie in [0, 1]");
        }
        if !(self.t_stop >= 0.0 && self.t_stop < 1.0) {
            return bad("t_stop must lie in [0, 1)");
        }
        if !(self.dilation >= 0.0 && self.dilation.is_finite()) {
            return bad("dilation must be non-negative");
        }
        if matches!(self.cutoff, Some(k) if !(k > 0.0)) {
            return bad("cutoff must be positive");
        }
        Ok(())
    }

    /// World `(x, y)` of a pixel center.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.x_range[0] + (col as f64 + 0.5) * self.resolution,
            self.y_range[1] - (row as f64 + 0.5) * self.resolution,
        )
    }

    /// Continuous pixel coordinates `(col, row)` of a world point.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x - self.x_range[0]) / self.resolution,
            (self.y_range[1] - y) / self.resolution,
        )
    }
}

fn grid_cells(extent: f64, resolution: f64) -> usize {
    let n = extent / resolution;
    // Guards against 200.00000000001-style rounding turning into an extra cell.
    let rounded = n.round();
    if (n - rounded).abs() <= 1e-9 * rounded.max(1.0) {
        rounded as usize
    } else {
        n.ceil() as usize
    }
}

/// `H × W × C` raster, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl BevGrid {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = (row * self.width + col) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }
}

/// Per-gaussian gradients of a scalar loss.
///
/// The z component of every center gradient is zero: the compositing order
/// is the only place z enters, and it is piecewise constant.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub feature_dim: usize,
    pub center: Vec<Vector3<f64>>,
    pub scale: Vec<Vector3<f64>>,
    pub rotation: Vec<Vector4<f64>>,
    pub opacity: Vec<f64>,
    pub embedding: Vec<f64>,
    pub z_gradient_is_zero: bool,
}

impl GradientBundle {
    pub fn zeros(n: usize, feature_dim: usize) -> Self {
        Self {
            feature_dim,
            center: vec![Vector3::zeros(); n],
            scale: vec![Vector3::zeros(); n],
            rotation: vec![Vector4::zeros(); n],
            opacity: vec![0.0; n],
            embedding: vec![0.0; n * feature_dim],
            z_gradient_is_zero: true,
        }
    }

    pub fn len(&self) -> usize {
        self.opacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opacity.is_empty()
    }

    pub fn embedding_at(&self, i: usize) -> &[f64] {
        &self.embedding[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn all_finite(&self) -> bool {
        self.center.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.scale.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.rotation.iter().all(|v| v.iter().all(|x| x.is_finite()))
            && self.opacity.iter().all(|x| x.is_finite())
            && self.embedding.iter().all(|x| x.is_finite())
    }
}

/// Footprint of one gaussian on the BeV grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrthoProjection {
    /// Continuous pixel coordinates `(col, row)`.
    pub mean: Vector2<f64>,
    /// 2D covariance in px², dilation included.
    pub cov: Matrix2<f64>,
    /// World height, used only for ordering.
    pub depth: f64,
}

/// The 2×3 map from world offsets to pixel offsets.
fn ortho_matrix(cfg: &RenderConfig) -> nalgebra::Matrix2x3<f64> {
    let k = 1.0 / cfg.resolution;
    nalgebra::Matrix2x3::new(k, 0.0, 0.0, 0.0, -k, 0.0)
}

pub fn project_ortho(g: &Gaussian, cfg: &RenderConfig) -> OrthoProjection {
    let (col, row) = cfg.world_to_pixel(g.center.x, g.center.y);
    let m = ortho_matrix(cfg);
    let cov = m * covariance_3d(g) * m.transpose() + Matrix2::identity() * cfg.dilation;
    OrthoProjection {
        mean: Vector2::new(col, row),
        cov,
        depth: g.center.z,
    }
}

/// Pulls gradients on the projected mean and 2D covariance back onto the
/// gaussian's center, rotation and scale. `d_cov` uses the
/// independent-entries convention.
pub fn project_ortho_vjp(
    g: &Gaussian,
    cfg: &RenderConfig,
    d_mean: &Vector2<f64>,
    d_cov: &Matrix2<f64>,
) -> (Vector3<f64>, Vector4<f64>, Vector3<f64>) {
    let m = ortho_matrix(cfg);
    let d_center = m.transpose() * d_mean;
    let d_cov3: Matrix3<f64> = m.transpose() * d_cov * m;
    let (d_rot, d_scale) = covariance_vjp(g.rotation, &g.scale, &d_cov3);
    (d_center, d_rot, d_scale)
}

#[derive(Debug, Clone, Copy)]
struct Splat {
    mean: Vector2<f64>,
    /// Inverse 2D covariance `[[a, b], [b, c]]`.
    conic: [f64; 3],
    opacity: f64,
    /// Inclusive pixel bounds `(row0, row1, col0, col1)`; `None` if off-grid.
    bounds: Option<(usize, usize, usize, usize)>,
}

impl Splat {
    #[inline]
    fn mahalanobis(&self, px: f64, py: f64) -> (f64, f64, f64) {
        let dx = px - self.mean.x;
        let dy = py - self.mean.y;
        let [a, b, c] = self.conic;
        (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy, dx, dy)
    }
}

fn make_splat(g: &Gaussian, cfg: &RenderConfig, height: usize, width: usize) -> Splat {
    let p = project_ortho(g, cfg);
    let det = p.cov[(0, 0)] * p.cov[(1, 1)] - p.cov[(0, 1)] * p.cov[(1, 0)];
    let conic = [p.cov[(1, 1)] / det, -p.cov[(0, 1)] / det, p.cov[(0, 0)] / det];
    let bounds = match cfg.cutoff {
        None if height > 0 && width > 0 => Some((0, height - 1, 0, width - 1)),
        None => None,
        Some(k) => {
            let hx = k * p.cov[(0, 0)].sqrt();
            let hy = k * p.cov[(1, 1)].sqrt();
            let span = |center: f64, half: f64, n: usize| -> Option<(usize, usize)> {
                let lo = (center - half - 0.5).ceil().max(0.0);
                let hi = (center + half - 0.5).floor().min(n as f64 - 1.0);
                (lo <= hi && hi >= 0.0 && lo.is_finite() && hi.is_finite()).then(|| (lo as usize, hi as usize))
            };
            match (span(p.mean.y, hy, height), span(p.mean.x, hx, width)) {
                (Some((r0, r1)), Some((c0, c1))) => Some((r0, r1, c0, c1)),
                _ => None,
            }
        }
    };
    Splat {
        mean: p.mean,
        conic,
        opacity: g.opacity,
        bounds,
    }
}

/// Scene indices sorted front to back: descending z, then ascending index.
fn depth_order(scene: &GaussianScene) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scene.len()).collect();
    order.sort_by(|&a, &b| {
        let (za, zb) = (scene.gaussians[a].center.z, scene.gaussians[b].center.z);
        zb.total_cmp(&za).then(a.cmp(&b))
    });
    order
}

struct Prepared {
    splats: Vec<Splat>,
    order: Vec<usize>,
    embeddings: Vec<f64>,
}

fn prepare(scene: &GaussianScene, cfg: &RenderConfig) -> Prepared {
    let (h, w) = (cfg.height(), cfg.width());
    let splats = scene
        .gaussians
        .par_iter()
        .map(|g| make_splat(g, cfg, h, w))
        .collect();
    let mut embeddings = Vec::with_capacity(scene.len() * scene.feature_dim);
    for g in &scene.gaussians {
        embeddings.extend_from_slice(&g.embedding);
    }
    Prepared {
        splats,
        order: depth_order(scene),
        embeddings,
    }
}

struct TileLayout {
    tiles_x: usize,
    tiles_y: usize,
    /// Per tile, gaussian indices in compositing order.
    lists: Vec<Vec<u32>>,
}

fn bin_tiles(prep: &Prepared, cfg: &RenderConfig) -> TileLayout {
    let t = cfg.tile;
    let tiles_x = cfg.width().div_ceil(t);
    let tiles_y = cfg.height().div_ceil(t);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    for &i in &prep.order {
        if let Some((r0, r1, c0, c1)) = prep.splats[i].bounds {
            for ty in r0 / t..=r1 / t {
                for tx in c0 / t..=c1 / t {
                    lists[ty * tiles_x + tx].push(i as u32);
                }
            }
        }
    }
    TileLayout {
        tiles_x,
        tiles_y,
        lists,
    }
}

/// Alpha of a splat at a pixel, following the tiled-path rules. Returns
/// `None` when the contribution is skipped.
#[inline]
fn tiled_alpha(s: &Splat, px: f64, py: f64, cfg: &RenderConfig) -> Option<(f64, f64, f64, f64, bool)> {
    let (m, dx, dy) = s.mahalanobis(px, py);
    if let Some(k) = cfg.cutoff {
        if m > k * k {
            return None;
        }
    }
    let gauss = (-0.5 * m).exp();
    let raw = s.opacity * gauss;
    let clamped = raw > cfg.alpha_max;
    let alpha = if clamped { cfg.alpha_max } else { raw };
    if alpha < cfg.alpha_min {
        return None;
    }
    Some((alpha, gauss, dx, dy, clamped))
}

/// Tiled forward render.
pub fn render(scene: &GaussianScene, cfg: &RenderConfig) -> BevGrid {
    let (h, w, c) = (cfg.height(), cfg.width(), scene.feature_dim);
    let prep = prepare(scene, cfg);
    let layout = bin_tiles(&prep, cfg);
    let t = cfg.tile;
    let blocks: Vec<Vec<f64>> = (0..layout.tiles_x * layout.tiles_y)
        .into_par_iter()
        .map(|tile| {
            let (ty, tx) = (tile / layout.tiles_x, tile % layout.tiles_x);
            let (r0, c0) = (ty * t, tx * t);
            let (r1, c1) = ((r0 + t).min(h), (c0 + t).min(w));
            let list = &layout.lists[tile];
            let mut block = vec![0.0; (r1 - r0) * (c1 - c0) * c];
            if list.is_empty() {
                return block;
            }
            for r in r0..r1 {
                let py = r as f64 + 0.5;
                for col in c0..c1 {
                    let px = col as f64 + 0.5;
                    let out_start = ((r - r0) * (c1 - c0) + (col - c0)) * c;
                    let out = &mut block[out_start..out_start + c];
                    let mut trans = 1.0;
                    for &gi in list {
                        let gi = gi as usize;
                        let s = &prep.splats[gi];
                        let Some((alpha, ..)) = tiled_alpha(s, px, py, cfg) else {
                            continue;
                        };
                        let weight = alpha * trans;
                        let e = &prep.embeddings[gi * c..(gi + 1) * c];
                        for (o, &ev) in out.iter_mut().zip(e) {
                            *o += weight * ev;
                        }
                        trans *= 1.0 - alpha;
                        if trans < cfg.t_stop {
                            break;
                        }
                    }
                }
            }
            block
        })
        .collect();

    let mut grid = BevGrid::zeros(h, w, c);
    for (tile, block) in blocks.iter().enumerate() {
        let (ty, tx) = (tile / layout.tiles_x, tile % layout.tiles_x);
        let (r0, c0) = (ty * t, tx * t);
        let (r1, c1) = ((r0 + t).min(h), (c0 + t).min(w));
        let bw = (c1 - c0) * c;
        for r in r0..r1 {
            let dst = (r * w + c0) * c;
            grid.data[dst..dst + bw].copy_from_slice(&block[(r - r0) * bw..(r - r0 + 1) * bw]);
        }
    }
    grid
}

/// Reference renderer: every pixel visits every gaussian in global depth
/// order. Only the `alpha_max` clamp is applied.
pub fn render_naive(scene: &GaussianScene, cfg: &RenderConfig) -> BevGrid {
    let (h, w, c) = (cfg.height(), cfg.width(), scene.feature_dim);
    let prep = prepare(scene, cfg);
    // Depth-ordered copies so the inner loop streams through memory.
    let splats: Vec<&Splat> = prep.order.iter().map(|&i| &prep.splats[i]).collect();
    let mut embeddings = Vec::with_capacity(prep.embeddings.len());
    for &i in &prep.order {
        embeddings.extend_from_slice(&prep.embeddings[i * c..(i + 1) * c]);
    }
    let mut grid = BevGrid::zeros(h, w, c);
    grid.data
        .par_chunks_mut((w * c).max(1))
        .enumerate()
        .for_each(|(r, row)| {
            let py = r as f64 + 0.5;
            for col in 0..w {
                let px = col as f64 + 0.5;
                let out = &mut row[col * c..(col + 1) * c];
                let mut trans = 1.0;
                for (k, s) in splats.iter().enumerate() {
                    let (m, ..) = s.mahalanobis(px, py);
                    let gauss = (-0.5 * m).exp();
                    let alpha = (s.opacity * gauss).min(cfg.alpha_max);
                    if alpha == 0.0 {
                        continue;
                    }
                    let weight = alpha * trans;
                    let e = &embeddings[k * c..(k + 1) * c];
                    for (o, &ev) in out.iter_mut().zip(e) {
                        *o += weight * ev;
                    }
                    trans *= 1.0 - alpha;
                }
            }
        });
    grid
}

/// Per-tile partial gradients, aligned with the tile's gaussian list.
struct TilePartials {
    /// `dL/dμ` (2), `dL/dA` as `(a, b, c)` of the conic (3), `dL/do` (1).
    pose: Vec<[f64; 6]>,
    embedding: Vec<f64>,
}

struct Contribution {
    slot: usize,
    alpha: f64,
    trans: f64,
    gauss: f64,
    dx: f64,
    dy: f64,
    clamped: bool,
}

/// Analytic gradients of a scalar loss given `dL/dB`.
///
/// Contributions skipped by `alpha_min`, clamped at `alpha_max`, or cut by
/// the `t_stop` early exit receive no alpha gradient, matching the forward
/// pass exactly. Per-tile partials are summed in tile-index order so the
/// result does not depend on the number of worker threads.
pub fn render_backward(
    scene: &GaussianScene,
    cfg: &RenderConfig,
    d_grid: &BevGrid,
) -> Result<GradientBundle, RasterError> {
    let (h, w, c) = (cfg.height(), cfg.width(), scene.feature_dim);
    if d_grid.shape() != (h, w, c) {
        return Err(RasterError::ConfigMismatch {
            expected: (h, w, c),
            got: d_grid.shape(),
        });
    }
    let prep = prepare(scene, cfg);
    let layout = bin_tiles(&prep, cfg);
    let t = cfg.tile;

    let partials: Vec<TilePartials> = (0..layout.tiles_x * layout.tiles_y)
        .into_par_iter()
        .map(|tile| {
            let list = &layout.lists[tile];
            let mut part = TilePartials {
                pose: vec![[0.0; 6]; list.len()],
                embedding: vec![0.0; list.len() * c],
            };
            if list.is_empty() {
                return part;
            }
            let (ty, tx) = (tile / layout.tiles_x, tile % layout.tiles_x);
            let (r0, c0) = (ty * t, tx * t);
            let (r1, c1) = ((r0 + t).min(h), (c0 + t).min(w));
            let mut contribs: Vec<Contribution> = Vec::new();
            for r in r0..r1 {
                let py = r as f64 + 0.5;
                for col in c0..c1 {
                    let px = col as f64 + 0.5;
                    let g_pix = d_grid.pixel(r, col);
                    if g_pix.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    contribs.clear();
                    let mut trans = 1.0;
                    for (slot, &gi) in list.iter().enumerate() {
                        let s = &prep.splats[gi as usize];
                        let Some((alpha, gauss, dx, dy, clamped)) = tiled_alpha(s, px, py, cfg) else {
                            continue;
                        };
                        contribs.push(Contribution {
                            slot,
                            alpha,
                            trans,
                            gauss,
                            dx,
                            dy,
                            clamped,
                        });
                        trans *= 1.0 - alpha;
                        if trans < cfg.t_stop {
                            break;
                        }
                    }
                    // behind = Σ_{j>k} α_j Π_{k<i<j}(1−α_i) ⟨g, e_j⟩
                    let mut behind = 0.0;
                    for ct in contribs.iter().rev() {
                        let gi = list[ct.slot] as usize;
                        let e = &prep.embeddings[gi * c..(gi + 1) * c];
                        let ge: f64 = g_pix.iter().zip(e).map(|(a, b)| a * b).sum();
                        let weight = ct.alpha * ct.trans;
                        let de = &mut part.embedding[ct.slot * c..(ct.slot + 1) * c];
                        for (d, &gv) in de.iter_mut().zip(g_pix) {
                            *d += weight * gv;
                        }
                        let d_alpha = ct.trans * (ge - behind);
                        behind = ct.alpha * ge + (1.0 - ct.alpha) * behind;
                        if ct.clamped {
                            continue;
                        }
                        let s = &prep.splats[gi];
                        let [a, b, cc] = s.conic;
                        // α = o·G, G = exp(−½ m), m = δᵀAδ, δ = p − μ
                        let d_m = -0.5 * d_alpha * s.opacity * ct.gauss;
                        let p = &mut part.pose[ct.slot];
                        p[0] += -2.0 * d_m * (a * ct.dx + b * ct.dy);
                        p[1] += -2.0 * d_m * (b * ct.dx + cc * ct.dy);
                        p[2] += d_m * ct.dx * ct.dx;
                        p[3] += d_m * ct.dx * ct.dy;
                        p[4] += d_m * ct.dy * ct.dy;
                        p[5] += d_alpha * ct.gauss;
                    }
                }
            }
            part
        })
        .collect();

    let n = scene.len();
    let mut pose = vec![[0.0; 6]; n];
    let mut d_embedding = vec![0.0; n * c];
    for (tile, part) in partials.iter().enumerate() {
        for (slot, &gi) in layout.lists[tile].iter().enumerate() {
            let gi = gi as usize;
            for (acc, v) in pose[gi].iter_mut().zip(&part.pose[slot]) {
                *acc += v;
            }
            for (acc, v) in d_embedding[gi * c..(gi + 1) * c]
                .iter_mut()
                .zip(&part.embedding[slot * c..(slot + 1) * c])
            {
                *acc += v;
            }
        }
    }

    let chained: Vec<(Vector3<f64>, Vector4<f64>, Vector3<f64>)> = scene
        .gaussians
        .par_iter()
        .zip(prep.splats.par_iter())
        .zip(pose.par_iter())
        .map(|((g, s), p)| {
            let [a, b, cc] = s.conic;
            let conic = Matrix2::new(a, b, b, cc);
            // Off-diagonal entries of dL/dA each carry the δxδy term.
            let d_conic = Matrix2::new(p[2], p[3], p[3], p[4]);
            let d_cov = -(conic * d_conic * conic);
            let (mut d_center, d_rot, d_scale) = project_ortho_vjp(g, cfg, &Vector2::new(p[0], p[1]), &d_cov);
            d_center.z = 0.0;
            (d_center, d_rot, d_scale)
        })
        .collect();

    let mut out = GradientBundle::zeros(n, c);
    for (i, (d_center, d_rot, d_scale)) in chained.into_iter().enumerate() {
        out.center[i] = d_center;
        out.rotation[i] = d_rot;
        out.scale[i] = d_scale;
        out.opacity[i] = pose[i][5];
    }
    out.embedding = d_embedding;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quat::Quat;
    use approx::assert_relative_eq;

    fn gaussian(x: f64, y: f64, z: f64, o: f64, e: Vec<f64>) -> Gaussian {
        Gaussian {
            center: Vector3::new(x, y, z),
            scale: Vector3::new(1.0, 1.0, 1.0),
            rotation: Quat::IDENTITY,
            opacity: o,
            embedding: e,
        }
    }

    fn scene(gs: Vec<Gaussian>) -> GaussianScene {
        let c = gs.first().map_or(1, |g| g.embedding.len());
        let mut s = GaussianScene::new(c);
        for g in gs {
            s.push(g).unwrap();
        }
        s
    }

    #[test]
    fn default_grid_is_200_square() {
        let cfg = RenderConfig::default();
        assert_eq!((cfg.height(), cfg.width()), (200, 200));
        assert_eq!(cfg.pixel_center(0, 0), (-49.75, 49.75));
    }

    #[test]
    fn grid_size_rounds_up_partial_cells() {
        let cfg = RenderConfig {
            x_range: [0.0, 10.0],
            y_range: [0.0, 1.0],
            resolution: 0.3,
            ..Default::default()
        };
        assert_eq!((cfg.height(), cfg.width()), (4, 34));
    }

    #[test]
    fn projection_examples() {
        let cfg = RenderConfig::default();
        let p = project_ortho(&gaussian(0.0, 0.0, 3.0, 0.5, vec![1.0]), &cfg);
        assert_eq!(p.mean, Vector2::new(100.0, 100.0));
        assert_relative_eq!(p.cov, Matrix2::new(4.3, 0.0, 0.0, 4.3), epsilon = 1e-12);
        assert_eq!(p.depth, 3.0);
    }

    #[test]
    fn footprint_clips_at_edge() {
        let cfg = RenderConfig::default();
        let grid = render(&scene(vec![gaussian(50.0, 0.25, 0.0, 0.8, vec![1.0])]), &cfg);
        assert!(grid.get(99, 199, 0) > 0.0);
        assert_eq!(grid.get(99, 0, 0), 0.0);
        assert!(grid.data.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn single_splat_peak() {
        let cfg = RenderConfig::default();
        // (0.25, −0.25) is the center of pixel (row 100, col 100).
        let s = scene(vec![gaussian(0.25, -0.25, 0.0, 0.8, vec![1.0])]);
        for grid in [render(&s, &cfg), render_naive(&s, &cfg)] {
            assert_eq!(grid.get(100, 100, 0), 0.8);
        }
    }

    #[test]
    fn two_coincident_splats_composite_front_to_back() {
        let cfg = RenderConfig::default();
        let s = scene(vec![
            gaussian(0.25, -0.25, 0.0, 0.5, vec![0.0]),
            gaussian(0.25, -0.25, 1.0, 0.5, vec![1.0]),
        ]);
        assert_eq!(render(&s, &cfg).get(100, 100, 0), 0.5);
        assert_eq!(render_naive(&s, &cfg).get(100, 100, 0), 0.5);
    }

    #[test]
    fn empty_scene_renders_zeros() {
        let cfg = RenderConfig::default();
        let s = GaussianScene::new(3);
        assert!(render(&s, &cfg).data.iter().all(|&v| v == 0.0));
        assert!(render_naive(&s, &cfg).data.iter().all(|&v| v == 0.0));
        assert_eq!(render(&s, &cfg).shape(), (200, 200, 3));
    }

    #[test]
    fn opacity_gradient_at_peak() {
        let cfg = RenderConfig::default();
        let s = scene(vec![gaussian(0.25, -0.25, 0.0, 0.8, vec![1.0])]);
        let mut d = BevGrid::zeros(200, 200, 1);
        d.pixel_mut(100, 100)[0] = 1.0;
        let g = render_backward(&s, &cfg, &d).unwrap();
        assert_eq!(g.opacity[0], 1.0);
        assert_eq!(g.embedding[0], 0.8);
        assert_eq!(g.center[0].z, 0.0);
    }

    #[test]
    fn backward_rejects_wrong_shape() {
        let cfg = RenderConfig::default();
        let s = GaussianScene::new(2);
        let err = render_backward(&s, &cfg, &BevGrid::zeros(200, 200, 3)).unwrap_err();
        assert_eq!(
            err,
            RasterError::ConfigMismatch {
                expected: (200, 200, 2),
                got: (200, 200, 3)
            }
        );
    }

    #[test]
    fn config_json_uses_defaults_for_missing_fields() {
        let cfg: RenderConfig = serde_json::from_str(r#"{"resolution": 1.0}"#).unwrap();
        assert_eq!(cfg.width(), 100);
        assert_eq!(cfg.alpha_max, 0.99);
        assert!(serde_json::from_str::<RenderConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
