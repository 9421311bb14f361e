//! Hamilton quaternions, scalar-first `(w, x, y, z)`.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

/// A quaternion in Hamilton convention with the scalar part first.
///
/// The type does not force unit norm; operations that need a rotation say
/// so. `normalized` and `canonical` produce the unit, `w >= 0` form used on
/// every decoded gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let axis = axis.normalize();
        let (s, c) = (0.5 * angle).sin_cos();
        Self::new(c, axis.x * s, axis.y * s, axis.z * s)
    }

    pub fn norm(self) -> f64 {
        self.to_vector().norm()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn neg(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }

    pub fn conj(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Same rotation with a non-negative scalar part.
    pub fn canonical(self) -> Self {
        if self.w < 0.0 {
            self.neg()
        } else {
            self
        }
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn mul(self, rhs: Quat) -> Quat {
        let (a, b) = (self, rhs);
        Quat::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    /// Matrix `L(a)` with `a ⊗ b = L(a) · b` on `(w, x, y, z)` vectors.
    pub fn left_matrix(self) -> Matrix4<f64> {
        let Quat { w, x, y, z } = self;
        Matrix4::new(
            w, -x, -y, -z, //
            x, w, -z, y, //
            y, z, w, -x, //
            z, -y, x, w,
        )
    }

    /// Rotates `v` by this (unit) quaternion: `q ⊗ (0, v) ⊗ q*`.
    pub fn rotate(self, v: &Vector3<f64>) -> Vector3<f64> {
        let p = Quat::new(0.0, v.x, v.y, v.z);
        let r = self.mul(p).mul(self.conj());
        Vector3::new(r.x, r.y, r.z)
    }

    /// Rotation matrix of a unit quaternion.
    ///
    /// The polynomial form is used as-is for non-unit input, which is what
    /// the covariance Jacobians differentiate.
    pub fn to_rotation_matrix(self) -> Matrix3<f64> {
        let Quat { w, x, y, z } = self;
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Partial derivatives of [`Quat::to_rotation_matrix`] with respect to
    /// `w, x, y, z`, in that order.
    pub fn rotation_matrix_partials(self) -> [Matrix3<f64>; 4] {
        let Quat { w, x, y, z } = self;
        let dw = Matrix3::new(
            0.0, -2.0 * z, 2.0 * y, //
            2.0 * z, 0.0, -2.0 * x, //
            -2.0 * y, 2.0 * x, 0.0,
        );
        let dx = Matrix3::new(
            0.0, 2.0 * y, 2.0 * z, //
            2.0 * y, -4.0 * x, -2.0 * w, //
            2.0 * z, 2.0 * w, -4.0 * x,
        );
        let dy = Matrix3::new(
            -4.0 * y, 2.0 * x, 2.0 * w, //
            2.0 * x, 0.0, 2.0 * z, //
            -2.0 * w, 2.0 * z, -4.0 * y,
        );
        let dz = Matrix3::new(
            -4.0 * z, -2.0 * w, 2.0 * x, //
            2.0 * w, -4.0 * z, 2.0 * y, //
            2.0 * x, 2.0 * y, 0.0,
        );
        [dw, dx, dy, dz]
    }

    /// Unit quaternion of a proper rotation matrix (Shepperd's method).
    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Quat {
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat::new(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            Quat::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            Quat::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            Quat::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        };
        q.normalized().canonical()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn product_matches_left_matrix() {
        let a = Quat::new(0.3, -0.2, 0.9, 0.1);
        let b = Quat::new(-0.5, 0.4, 0.2, 0.7);
        let direct = a.mul(b).to_vector();
        let via_matrix = a.left_matrix() * b.to_vector();
        assert_relative_eq!(direct, via_matrix, epsilon = 1e-15);
    }

    #[test]
    fn matrix_round_trip() {
        let q = Quat::new(0.8, 0.1, -0.3, 0.5).normalized();
        let m = q.to_rotation_matrix();
        let back = Quat::from_rotation_matrix(&m);
        assert_relative_eq!(back.to_vector(), q.canonical().to_vector(), epsilon = 1e-12);
        for q in [
            Quat::from_axis_angle(&Vector3::x(), 3.0),
            Quat::from_axis_angle(&Vector3::y(), 3.0),
            Quat::from_axis_angle(&Vector3::z(), 3.0),
        ] {
            let back = Quat::from_rotation_matrix(&q.to_rotation_matrix());
            assert_relative_eq!(back.to_vector(), q.canonical().to_vector(), epsilon = 1e-12);
        }
    }

    #[test]
    fn rotate_agrees_with_matrix() {
        let q = Quat::from_axis_angle(&Vector3::z(), FRAC_PI_2);
        let v = q.rotate(&Vector3::x());
        assert_relative_eq!(v, Vector3::y(), epsilon = 1e-15);
        assert_relative_eq!(q.to_rotation_matrix() * Vector3::x(), v, epsilon = 1e-15);
    }

    #[test]
    fn rotation_partials_match_differences() {
        let q = Quat::new(0.7, -0.4, 0.3, 0.2);
        let h = 1e-6;
        let partials = q.rotation_matrix_partials();
        for (k, analytic) in partials.iter().enumerate() {
            let mut plus = q.to_array();
            let mut minus = q.to_array();
            plus[k] += h;
            minus[k] -= h;
            let numeric = (Quat::from_array(plus).to_rotation_matrix()
                - Quat::from_array(minus).to_rotation_matrix())
                / (2.0 * h);
            assert_relative_eq!(*analytic, numeric, epsilon = 1e-8);
        }
    }
}
