//! Per-pixel decoding of head outputs into world-frame gaussian poses.
//!
//! The chain for one feature-map pixel `(u, v)` of a camera is
//!
//! ```text
//! disparity d ──► depth z = (fx / f_ref) (1/d − 1)
//!             ──► p_c = K⁻¹ (z·u, z·v, z)
//!             ──► p̄_c = p_c + Δ
//!             ──► p_w = R p̄_c + t
//!
//! q_raw ──► q_allo = q_raw / ‖q_raw‖
//!       ──► q_e = q_ray ⊗ q_allo
//!       ──► q_w = q_R ⊗ q_e
//! ```
//!
//! where `q_ray` is the minimal rotation taking the optical axis `(0, 0, 1)`
//! onto the ray through the pixel and `q_R` is the camera-to-world rotation.
//! Every stage also returns its Jacobian so that gradients from the
//! rasterizer can be pulled back onto the raw head outputs.

use nalgebra::{Matrix3, Matrix4, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::quat::Quat;
use crate::raster::GradientBundle;
use crate::scene::{Gaussian, GaussianScene, SCALE_MIN};

/// Lower clamp applied to disparity before decoding depth.
pub const DISPARITY_MIN: f64 = 1e-3;

/// Norm below which a raw quaternion cannot be normalized.
pub const QUATERNION_EPS: f64 = 1e-12;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid camera calibration: {0}")]
    InvalidCalib(String),
    #[error("raw quaternion has zero norm{}", .pixel.map(|p| format!(" at pixel {p}")).unwrap_or_default())]
    ZeroQuaternion { pixel: Option<usize> },
    #[error("raw head grid is {got_w}x{got_h} but calibration expects {want_w}x{want_h}")]
    ShapeMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("raw head grid buffers are inconsistent: {0}")]
    MalformedGrid(String),
}

/// Pinhole calibration of one camera at feature-map resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalib {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Camera-to-world rotation.
    pub rotation: Matrix3<f64>,
    /// Camera origin in the world frame (meters).
    pub translation: Vector3<f64>,
    pub width: usize,
    pub height: usize,
    /// Reference focal length the disparity head is expressed in.
    pub f_ref: f64,
}

impl CameraCalib {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        width: usize,
        height: usize,
        f_ref: f64,
    ) -> Result<Self, GeometryError> {
        let calib = Self {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            width,
            height,
            f_ref,
        };
        calib.check(ORTHONORMAL_TOL)?;
        Ok(calib)
    }

    /// Checks focal lengths and rotation properness at the given tolerance.
    pub fn check(&self, tol: f64) -> Result<(), GeometryError> {
        for (name, value) in [("fx", self.fx), ("fy", self.fy), ("f_ref", self.f_ref)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(GeometryError::InvalidCalib(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if !(self.cx.is_finite() && self.cy.is_finite() && self.translation.iter().all(|v| v.is_finite())) {
            return Err(GeometryError::InvalidCalib("non-finite principal point or translation".into()));
        }
        let r = &self.rotation;
        let gram_err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(gram_err <= tol) {
            return Err(GeometryError::InvalidCalib(format!(
                "rotation is not orthonormal (max |RᵀR − I| = {gram_err:e})"
            )));
        }
        let det_err = (r.determinant() - 1.0).abs();
        if !(det_err <= tol) {
            return Err(GeometryError::InvalidCalib(format!(
                "rotation determinant is {} (expected 1)",
                r.determinant()
            )));
        }
        Ok(())
    }

    /// Replaces the rotation with its nearest proper rotation (polar factor).
    pub fn orthonormalize(&mut self) {
        let svd = self.rotation.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        self.rotation = r;
    }

    /// Quaternion of the camera-to-world rotation.
    pub fn rotation_quaternion(&self) -> Quat {
        Quat::from_rotation_matrix(&self.rotation)
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Feature-map coordinates of a row-major pixel index.
    pub fn pixel_coords(&self, index: usize) -> (f64, f64) {
        ((index % self.width) as f64, (index / self.width) as f64)
    }

    /// Unnormalized camera-frame ray `((u−cx)/fx, (v−cy)/fy, 1)`.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Metric depth from a post-sigmoid disparity, with `dz/dd`.
///
/// Disparity is clamped to `[DISPARITY_MIN, 1]`; the derivative is zero
/// wherever the clamp is active.
pub fn decode_depth(disparity: f64, calib: &CameraCalib) -> (f64, f64) {
    let ratio = calib.fx / calib.f_ref;
    let clamped = disparity.clamp(DISPARITY_MIN, 1.0);
    let depth = ratio * (1.0 / clamped - 1.0);
    let grad = if disparity < DISPARITY_MIN || disparity > 1.0 {
        0.0
    } else {
        -ratio / (clamped * clamped)
    };
    (depth, grad)
}

/// Inverse of [`decode_depth`] for `z >= 0`.
pub fn encode_depth(depth: f64, calib: &CameraCalib) -> f64 {
    1.0 / (depth * calib.f_ref / calib.fx + 1.0)
}

/// Camera-frame point at depth `z` on the ray through `(u, v)`, with the
/// Jacobian with respect to `(u, v, z)` (columns in that order).
pub fn backproject(u: f64, v: f64, z: f64, calib: &CameraCalib) -> (Vector3<f64>, Matrix3<f64>) {
    let ray = calib.ray(u, v);
    let point = ray * z;
    let jac = Matrix3::from_columns(&[
        Vector3::new(z / calib.fx, 0.0, 0.0),
        Vector3::new(0.0, z / calib.fy, 0.0),
        ray,
    ]);
    (point, jac)
}

/// Offset refinement. Its Jacobian with respect to either input is the identity.
pub fn apply_offset(point: &Vector3<f64>, offset: &Vector3<f64>) -> Vector3<f64> {
    point + offset
}

/// Camera-to-world point transform; the Jacobian is the rotation itself.
pub fn cam_to_world_point(point: &Vector3<f64>, calib: &CameraCalib) -> (Vector3<f64>, Matrix3<f64>) {
    (calib.rotation * point + calib.translation, calib.rotation)
}

/// Minimal (geodesic) rotation taking `(0, 0, 1)` onto the ray through `(u, v)`.
///
/// Uses the half-way form `q ∝ (1 + a·r, a × r)` with `a = (0, 0, 1)`; the
/// ray always has positive z so the antipodal case cannot arise.
pub fn ray_quaternion(u: f64, v: f64, calib: &CameraCalib) -> Quat {
    let r = calib.ray(u, v).normalize();
    Quat::new(1.0 + r.z, -r.y, r.x, 0.0).normalized()
}

/// World rotation `q_R ⊗ q_ray ⊗ normalize(q_raw)` in canonical form, and
/// its 4×4 Jacobian with respect to `q_raw`.
pub fn compose_rotation(
    q_ray: Quat,
    q_raw: Quat,
    calib: &CameraCalib,
) -> Result<(Quat, Matrix4<f64>), GeometryError> {
    compose_rotation_with(q_ray, q_raw, calib.rotation_quaternion())
}

/// [`compose_rotation`] with the camera quaternion already extracted.
pub fn compose_rotation_with(
    q_ray: Quat,
    q_raw: Quat,
    q_cam: Quat,
) -> Result<(Quat, Matrix4<f64>), GeometryError> {
    let norm = q_raw.norm();
    if !(norm >= QUATERNION_EPS) {
        return Err(GeometryError::ZeroQuaternion { pixel: None });
    }
    let n = q_raw.to_vector() / norm;
    let d_normalize = (Matrix4::identity() - n * n.transpose()) / norm;
    let chain = q_cam.left_matrix() * q_ray.left_matrix();
    let q_w = Quat::from_vector(&(chain * n));
    // Unit by construction; renormalizing only removes rounding drift and
    // leaves the tangent-space Jacobian unchanged.
    let q_w = q_w.normalized();
    let jac = chain * d_normalize;
    if q_w.w < 0.0 {
        Ok((q_w.neg(), -jac))
    } else {
        Ok((q_w, jac))
    }
}

/// Undecoded per-pixel head outputs for one camera.
///
/// All buffers are row-major over the `width × height` feature map;
/// `embedding` holds `feature_dim` values per pixel. The same layout is
/// reused for gradients with respect to these fields.
#[derive(Debug, Clone, PartialEq)]
pub struct RawHeadGrid {
    pub width: usize,
    pub height: usize,
    pub feature_dim: usize,
    /// Post-sigmoid disparity in `[0, 1]`.
    pub disparity: Vec<f64>,
    pub offset: Vec<[f64; 3]>,
    /// Allocentric rotation, unnormalized `(w, x, y, z)`.
    pub rotation: Vec<[f64; 4]>,
    /// Pre-activation scale; the decoded scale is `|scale|`.
    pub scale: Vec<[f64; 3]>,
    pub opacity_logit: Vec<f64>,
    pub embedding: Vec<f64>,
}

impl RawHeadGrid {
    pub fn zeros(width: usize, height: usize, feature_dim: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            feature_dim,
            disparity: vec![0.0; n],
            offset: vec![[0.0; 3]; n],
            rotation: vec![[0.0; 4]; n],
            scale: vec![[0.0; 3]; n],
            opacity_logit: vec![0.0; n],
            embedding: vec![0.0; n * feature_dim],
        }
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn embedding_at(&self, pixel: usize) -> &[f64] {
        &self.embedding[pixel * self.feature_dim..(pixel + 1) * self.feature_dim]
    }

    pub fn check(&self) -> Result<(), GeometryError> {
        let n = self.n_pixels();
        let lens = [
            ("disparity", self.disparity.len()),
            ("offset", self.offset.len()),
            ("rotation", self.rotation.len()),
            ("scale", self.scale.len()),
            ("opacity_logit", self.opacity_logit.len()),
        ];
        for (name, len) in lens {
            if len != n {
                return Err(GeometryError::MalformedGrid(format!(
                    "{name} has {len} entries, expected {n}"
                )));
            }
        }
        if self.embedding.len() != n * self.feature_dim {
            return Err(GeometryError::MalformedGrid(format!(
                "embedding has {} entries, expected {}",
                self.embedding.len(),
                n * self.feature_dim
            )));
        }
        Ok(())
    }
}

/// Jacobians of one decoded pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelJacobian {
    /// Decoded metric depth along the optical axis.
    pub depth: f64,
    /// `dz/dd`.
    pub depth_d_disparity: f64,
    /// `∂p_w/∂d`.
    pub center_d_disparity: Vector3<f64>,
    /// `∂q_w/∂q_raw`.
    pub rotation_d_raw: Matrix4<f64>,
    /// Diagonal of `∂s/∂scale_raw`.
    pub scale_d_raw: Vector3<f64>,
    /// `∂o/∂logit`.
    pub opacity_d_logit: f64,
}

/// Everything needed to pull per-gaussian gradients back to a camera's raw
/// head outputs. `∂p_w/∂Δ` is the camera rotation for every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeJacobians {
    pub rotation: Matrix3<f64>,
    pub feature_dim: usize,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<PixelJacobian>,
}

impl DecodeJacobians {
    /// Decoded depth of every pixel.
    pub fn depths(&self) -> Vec<f64> {
        self.pixels.iter().map(|p| p.depth).collect()
    }

    /// Maps gradients of this camera's gaussians (`first..first + n_pixels`
    /// in `grads`) and optional `dL/dz` per pixel onto the raw fields.
    ///
    /// The returned disparity gradient is with respect to post-sigmoid
    /// disparity.
    pub fn pull_back(
        &self,
        grads: &GradientBundle,
        first: usize,
        d_depth: Option<&[f64]>,
    ) -> RawHeadGrid {
        let n = self.pixels.len();
        let c = self.feature_dim;
        let mut out = RawHeadGrid::zeros(self.width, self.height, c);
        let r_t = self.rotation.transpose();
        for (i, jac) in self.pixels.iter().enumerate() {
            let g = first + i;
            let d_center = grads.center[g];
            let mut d_disp = d_center.dot(&jac.center_d_disparity);
            if let Some(dz) = d_depth {
                d_disp += dz[i] * jac.depth_d_disparity;
            }
            out.disparity[i] = d_disp;
            out.offset[i] = (r_t * d_center).into();
            out.rotation[i] = (jac.rotation_d_raw.transpose() * grads.rotation[g]).into();
            out.scale[i] = grads.scale[g].component_mul(&jac.scale_d_raw).into();
            out.opacity_logit[i] = grads.opacity[g] * jac.opacity_d_logit;
            out.embedding[i * c..(i + 1) * c].copy_from_slice(grads.embedding_at(g));
        }
        debug_assert_eq!(out.n_pixels(), n);
        out
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Decodes every pixel of one camera into a world-frame gaussian.
///
/// Output order is the pixel index regardless of how the work is split
/// across threads.
pub fn decode_camera(
    raw: &RawHeadGrid,
    calib: &CameraCalib,
) -> Result<(GaussianScene, DecodeJacobians), GeometryError> {
    raw.check()?;
    if raw.width != calib.width || raw.height != calib.height {
        return Err(GeometryError::ShapeMismatch {
            got_w: raw.width,
            got_h: raw.height,
            want_w: calib.width,
            want_h: calib.height,
        });
    }
    let q_cam = calib.rotation_quaternion();
    let decoded: Vec<Result<(Gaussian, PixelJacobian), GeometryError>> = (0..raw.n_pixels())
        .into_par_iter()
        .map(|i| decode_pixel(raw, calib, q_cam, i))
        .collect();
    let mut gaussians = Vec::with_capacity(decoded.len());
    let mut pixels = Vec::with_capacity(decoded.len());
    for item in decoded {
        let (g, j) = item?;
        gaussians.push(g);
        pixels.push(j);
    }
    let scene = GaussianScene::from_parts(raw.feature_dim, gaussians);
    let jac = DecodeJacobians {
        rotation: calib.rotation,
        feature_dim: raw.feature_dim,
        width: raw.width,
        height: raw.height,
        pixels,
    };
    Ok((scene, jac))
}

fn decode_pixel(
    raw: &RawHeadGrid,
    calib: &CameraCalib,
    q_cam: Quat,
    i: usize,
) -> Result<(Gaussian, PixelJacobian), GeometryError> {
    let (u, v) = calib.pixel_coords(i);
    let (depth, depth_d_disparity) = decode_depth(raw.disparity[i], calib);
    let (p_cam, bp_jac) = backproject(u, v, depth, calib);
    let p_ref = apply_offset(&p_cam, &Vector3::from(raw.offset[i]));
    let (center, world_jac) = cam_to_world_point(&p_ref, calib);
    let center_d_disparity = world_jac * bp_jac.column(2) * depth_d_disparity;

    let q_ray = ray_quaternion(u, v, calib);
    let (rotation, rotation_d_raw) = compose_rotation_with(q_ray, Quat::from_array(raw.rotation[i]), q_cam)
        .map_err(|_| GeometryError::ZeroQuaternion { pixel: Some(i) })?;

    let mut scale = Vector3::zeros();
    let mut scale_d_raw = Vector3::zeros();
    for k in 0..3 {
        let s = raw.scale[i][k];
        if s.abs() > SCALE_MIN {
            scale[k] = s.abs();
            scale_d_raw[k] = s.signum();
        } else {
            scale[k] = SCALE_MIN;
        }
    }

    let opacity = sigmoid(raw.opacity_logit[i]);
    let gaussian = Gaussian {
        center,
        scale,
        rotation,
        opacity,
        embedding: raw.embedding_at(i).to_vec(),
    };
    let jac = PixelJacobian {
        depth,
        depth_d_disparity,
        center_d_disparity,
        rotation_d_raw,
        scale_d_raw,
        opacity_d_logit: opacity * (1.0 - opacity),
    };
    Ok((gaussian, jac))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_8};

    fn calib(fx: f64, fy: f64, cx: f64, cy: f64, f_ref: f64) -> CameraCalib {
        CameraCalib::new(fx, fy, cx, cy, Matrix3::identity(), Vector3::zeros(), 1, 1, f_ref).unwrap()
    }

    #[test]
    fn decode_depth_hand_values() {
        let c = calib(500.0, 500.0, 0.0, 0.0, 500.0);
        assert_eq!(decode_depth(0.5, &c).0, 1.0);
        assert_eq!(decode_depth(1.0, &c).0, 0.0);
        let c = calib(1000.0, 1000.0, 0.0, 0.0, 500.0);
        assert_eq!(decode_depth(0.2, &c).0, 8.0);
    }

    #[test]
    fn decode_depth_clamps_with_zero_gradient() {
        let c = calib(500.0, 500.0, 0.0, 0.0, 500.0);
        let (z, dz) = decode_depth(0.0, &c);
        assert_relative_eq!(z, 999.0, epsilon = 1e-9);
        assert_eq!(dz, 0.0);
        let (_, dz) = decode_depth(0.5, &c);
        assert_eq!(dz, -4.0);
    }

    #[test]
    fn backproject_examples() {
        let c = calib(100.0, 100.0, 50.0, 50.0, 100.0);
        assert_eq!(backproject(50.0, 50.0, 4.0, &c).0, Vector3::new(0.0, 0.0, 4.0));
        assert_eq!(backproject(150.0, 50.0, 2.0, &c).0, Vector3::new(2.0, 0.0, 2.0));
        assert_eq!(backproject(13.0, 77.0, 0.0, &c).0, Vector3::zeros());
    }

    #[test]
    fn offset_and_world_transform() {
        assert_eq!(
            apply_offset(&Vector3::new(0.0, 0.0, 5.0), &Vector3::new(0.1, -0.2, 0.3)),
            Vector3::new(0.1, -0.2, 5.3)
        );
        let mut c = calib(1.0, 1.0, 0.0, 0.0, 1.0);
        c.translation = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(cam_to_world_point(&Vector3::zeros(), &c).0, Vector3::new(1.0, 2.0, 3.0));
        c.translation = Vector3::zeros();
        c.rotation = Quat::from_axis_angle(&Vector3::z(), FRAC_PI_2).to_rotation_matrix();
        assert_relative_eq!(
            cam_to_world_point(&Vector3::x(), &c).0,
            Vector3::y(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn ray_quaternion_examples() {
        let c = calib(100.0, 100.0, 50.0, 50.0, 100.0);
        assert_eq!(ray_quaternion(50.0, 50.0, &c), Quat::IDENTITY);
        // u - cx = fx gives the ray (1, 0, 1)/√2.
        let q = ray_quaternion(150.0, 50.0, &c);
        assert_relative_eq!(q.w, FRAC_PI_8.cos(), epsilon = 1e-15);
        assert_relative_eq!(q.y, FRAC_PI_8.sin(), epsilon = 1e-15);
        assert_eq!((q.x, q.z), (0.0, 0.0));
        let r = q.rotate(&Vector3::z());
        assert_relative_eq!(r, Vector3::new(FRAC_1_SQRT_2, 0.0, FRAC_1_SQRT_2), epsilon = 1e-15);
    }

    #[test]
    fn compose_identity_cases() {
        let q_allo = Quat::new(0.9, 0.1, -0.3, 0.2).normalized();
        let (q, _) = compose_rotation_with(Quat::IDENTITY, q_allo, Quat::IDENTITY).unwrap();
        assert_relative_eq!(q.to_vector(), q_allo.to_vector(), epsilon = 1e-15);
        let c = calib(1.0, 1.0, 0.0, 0.0, 1.0);
        let (q, _) = compose_rotation(ray_quaternion(0.0, 0.0, &c), Quat::IDENTITY, &c).unwrap();
        assert_eq!(q, Quat::IDENTITY);
    }

    #[test]
    fn compose_rejects_zero_quaternion() {
        assert_eq!(
            compose_rotation_with(Quat::IDENTITY, Quat::new(0.0, 0.0, 0.0, 0.0), Quat::IDENTITY),
            Err(GeometryError::ZeroQuaternion { pixel: None })
        );
    }

    #[test]
    fn compose_canonicalizes_sign() {
        let (q, _) = compose_rotation_with(Quat::IDENTITY, Quat::new(-2.0, 0.0, 0.0, 0.0), Quat::IDENTITY).unwrap();
        assert_eq!(q, Quat::IDENTITY);
    }

    #[test]
    fn calib_rejects_improper_rotation() {
        let mut r = Matrix3::identity();
        r[(2, 2)] = -1.0;
        assert!(CameraCalib::new(1.0, 1.0, 0.0, 0.0, r, Vector3::zeros(), 1, 1, 1.0).is_err());
        assert!(CameraCalib::new(0.0, 1.0, 0.0, 0.0, Matrix3::identity(), Vector3::zeros(), 1, 1, 1.0).is_err());
    }

    #[test]
    fn orthonormalize_fixes_small_drift() {
        let mut c = calib(1.0, 1.0, 0.0, 0.0, 1.0);
        c.rotation = Quat::new(0.9, 0.2, 0.1, -0.3).normalized().to_rotation_matrix();
        c.rotation[(0, 1)] += 1e-7;
        assert!(c.check(1e-9).is_err());
        assert!(c.check(1e-6).is_ok());
        c.orthonormalize();
        assert!(c.check(1e-12).is_ok());
    }

    #[test]
    fn decode_single_pixel_example() {
        let c = calib(100.0, 100.0, 0.0, 0.0, 100.0);
        let mut raw = RawHeadGrid::zeros(1, 1, 2);
        raw.disparity[0] = 0.5;
        raw.rotation[0] = [1.0, 0.0, 0.0, 0.0];
        raw.scale[0] = [0.5, -0.25, 1.0];
        raw.opacity_logit[0] = -50.0;
        raw.embedding = vec![0.5, -1.5];
        let (scene, jac) = decode_camera(&raw, &c).unwrap();
        let g = &scene.gaussians[0];
        assert_eq!(g.center, Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(g.rotation, Quat::IDENTITY);
        assert_eq!(g.scale, Vector3::new(0.5, 0.25, 1.0));
        assert!(g.opacity < 1e-20);
        assert_eq!(g.embedding, vec![0.5, -1.5]);
        assert_eq!(jac.pixels[0].scale_d_raw, Vector3::new(1.0, -1.0, 1.0));
    }

    #[test]
    fn decode_reports_bad_pixel() {
        let c = CameraCalib::new(10.0, 10.0, 0.5, 0.0, Matrix3::identity(), Vector3::zeros(), 2, 1, 10.0).unwrap();
        let mut raw = RawHeadGrid::zeros(2, 1, 1);
        raw.disparity = vec![0.5, 0.5];
        raw.rotation[0] = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(decode_camera(&raw, &c).unwrap_err(), GeometryError::ZeroQuaternion { pixel: Some(1) });
        let raw = RawHeadGrid::zeros(1, 2, 1);
        assert!(matches!(decode_camera(&raw, &c), Err(GeometryError::ShapeMismatch { .. })));
    }
}
