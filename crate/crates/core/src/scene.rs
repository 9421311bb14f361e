//! World-frame gaussian sets and 3D covariance math.

use nalgebra::{Matrix3, Vector3, Vector4};
use thiserror::Error;

use crate::quat::Quat;

/// Smallest scale (meters) a gaussian may carry along any axis.
pub const SCALE_MIN: f64 = 1e-6;
/// Relative slack on [`SCALE_MIN`] so the clamp value survives an f32 round trip.
const SCALE_TOL: f64 = 1e-6;

const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    FeatureDimMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub center: Vector3<f64>,
    /// Standard deviation along each principal axis (meters).
    pub scale: Vector3<f64>,
    pub rotation: Quat,
    pub opacity: f64,
    pub embedding: Vec<f64>,
}

/// An ordered set of gaussians sharing one embedding dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianScene {
    pub feature_dim: usize,
    pub gaussians: Vec<Gaussian>,
}

impl GaussianScene {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            gaussians: Vec::new(),
        }
    }

    pub(crate) fn from_parts(feature_dim: usize, gaussians: Vec<Gaussian>) -> Self {
        Self {
            feature_dim,
            gaussians,
        }
    }

    pub fn push(&mut self, g: Gaussian) -> Result<(), SceneError> {
        if g.embedding.len() != self.feature_dim {
            return Err(SceneError::FeatureDimMismatch {
                expected: self.feature_dim,
                got: g.embedding.len(),
            });
        }
        self.gaussians.push(g);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

/// Concatenates scenes in order.
///
/// An empty input yields an empty scene with feature dimension 0.
pub fn concat_scenes(scenes: &[GaussianScene]) -> Result<GaussianScene, SceneError> {
    let Some(first) = scenes.first() else {
        return Ok(GaussianScene::default());
    };
    let c = first.feature_dim;
    let mut out = GaussianScene::new(c);
    out.gaussians.reserve(scenes.iter().map(GaussianScene::len).sum());
    for s in scenes {
        if s.feature_dim != c {
            return Err(SceneError::FeatureDimMismatch {
                expected: c,
                got: s.feature_dim,
            });
        }
        out.gaussians.extend(s.gaussians.iter().cloned());
    }
    Ok(out)
}

/// `Σ = R(q) · diag(s²) · R(q)ᵀ`.
pub fn covariance_3d(g: &Gaussian) -> Matrix3<f64> {
    covariance_from(g.rotation, &g.scale)
}

pub fn covariance_from(rotation: Quat, scale: &Vector3<f64>) -> Matrix3<f64> {
    let r = rotation.to_rotation_matrix();
    let d = Matrix3::from_diagonal(&scale.component_mul(scale));
    r * d * r.transpose()
}

/// Pulls `dL/dΣ` back onto the quaternion and scale.
///
/// `d_cov` is the gradient with respect to a symmetric `Σ`, treating all
/// nine entries as independent. The quaternion gradient differentiates the
/// polynomial rotation-matrix form, so it is valid for any `q`.
pub fn covariance_vjp(rotation: Quat, scale: &Vector3<f64>, d_cov: &Matrix3<f64>) -> (Vector4<f64>, Vector3<f64>) {
    let r = rotation.to_rotation_matrix();
    let s2 = scale.component_mul(scale);
    let d = Matrix3::from_diagonal(&s2);
    // Σ = R D Rᵀ ⇒ dL/dR = (G + Gᵀ) R D, dL/dD = Rᵀ G R.
    let g_sym = d_cov + d_cov.transpose();
    let d_r = g_sym * r * d;
    let d_d = r.transpose() * d_cov * r;
    let d_scale = Vector3::new(
        2.0 * scale.x * d_d[(0, 0)],
        2.0 * scale.y * d_d[(1, 1)],
        2.0 * scale.z * d_d[(2, 2)],
    );
    let partials = rotation.rotation_matrix_partials();
    let d_q = Vector4::from_fn(|k, _| partials[k].component_mul(&d_r).sum());
    (d_q, d_scale)
}

/// Full Jacobian of the six unique covariance entries
/// `(xx, xy, xz, yy, yz, zz)` with respect to `(q_w, q_x, q_y, q_z, s_x, s_y, s_z)`.
pub fn covariance_jacobian(rotation: Quat, scale: &Vector3<f64>) -> [[f64; 7]; 6] {
    const ENTRIES: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    let mut out = [[0.0; 7]; 6];
    for (row, &(i, j)) in ENTRIES.iter().enumerate() {
        let mut sel = Matrix3::zeros();
        sel[(i, j)] = 1.0;
        let (d_q, d_s) = covariance_vjp(rotation, scale, &sel);
        out[row][..4].copy_from_slice(d_q.as_slice());
        out[row][4..].copy_from_slice(d_s.as_slice());
    }
    out
}

/// One broken invariant in a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub field: &'static str,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "gaussian {}: {}: {}", self.index, self.field, self.message)
    }
}

/// Lists every gaussian-level invariant violation; empty means valid.
pub fn validate(scene: &GaussianScene) -> Vec<Violation> {
    let mut out = Vec::new();
    for (index, g) in scene.gaussians.iter().enumerate() {
        let mut push = |field, message: String| out.push(Violation { index, field, message });
        if !g.center.iter().all(|v| v.is_finite()) {
            push("center", "non-finite component".into());
        }
        if !g.scale.iter().all(|&s| s.is_finite() && s >= SCALE_MIN * (1.0 - SCALE_TOL)) {
            push("scale", format!("components must be finite and >= {SCALE_MIN:e}, got {:?}", g.scale.as_slice()));
        }
        let norm = g.rotation.norm();
        if !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
            push("rotation", format!("quaternion norm is {norm}"));
        }
        // Sigmoid saturates to exactly 0 or 1 in floating point, so the
        // closed interval is accepted.
        if !(0.0..=1.0).contains(&g.opacity) {
            push("opacity", format!("{} is outside [0, 1]", g.opacity));
        }
        if g.embedding.len() != scene.feature_dim {
            push(
                "embedding",
                format!("length {} differs from feature dim {}", g.embedding.len(), scene.feature_dim),
            );
        } else if !g.embedding.iter().all(|v| v.is_finite()) {
            push("embedding", "non-finite component".into());
        }
    }
    out
}
