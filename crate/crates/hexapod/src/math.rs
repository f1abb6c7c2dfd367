//! Frame-and-matrix toolbox: homogeneous transforms, elementary rotations,
//! the skew operator, Kronecker products, left pseudoinverses and the map
//! from body-angle rates to the body twist.
//!
//! All rotations are right-handed. Composed body orientations use the
//! yaw-pitch-roll order `RotZ * RotY * RotX`, matching the rest of the stack.

use nalgebra::{DMatrix, Matrix3, Matrix4, Matrix6, Vector3, Vector4, Vector6};
use thiserror::Error;

/// General dense matrix used for Jacobians and other variable-size blocks.
pub type MatMN = DMatrix<f64>;
/// 3-vector (mm or mm/s depending on context).
pub type Vec3 = Vector3<f64>;
/// 6-vector twist or degree-of-freedom rate.
pub type Vec6 = Vector6<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum MathError {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("matrix is rank deficient: rank {rank} < {needed} required columns")]
    RankDeficient { rank: usize, needed: usize },
}

/// Rotation axis selector for [`rotation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// A rigid-body transform stored as a 4×4 homogeneous matrix.
///
/// Invariants: the bottom row is exactly `[0 0 0 1]` and the rotation block
/// stays orthonormal with determinant +1. Every constructor in this module
/// preserves them, so composition chains can run for thousands of ticks
/// without re-orthonormalisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform4 {
    m: Matrix4<f64>,
}

impl Transform4 {
    pub fn identity() -> Self {
        Self {
            m: Matrix4::identity(),
        }
    }

    /// Wraps a raw matrix after checking the transform invariants.
    pub fn from_matrix(m: Matrix4<f64>) -> Result<Self, MathError> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(MathError::NonFinite("transform entries"));
        }
        let t = Self { m };
        if !t.is_valid(1e-9) {
            return Err(MathError::NonFinite("transform invariants violated"));
        }
        Ok(t)
    }

    fn from_parts(rot: Matrix3<f64>, trans: Vec3) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&trans);
        Self { m }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.m.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vec3 {
        self.m.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Rigid inverse: transpose the rotation block, counter-rotate the offset.
    pub fn inverse(&self) -> Self {
        let r = self.rotation().transpose();
        let t = -r * self.translation();
        Self::from_parts(r, t)
    }

    /// Applies the transform to a point (homogeneous coordinate 1).
    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation() * p + self.translation()
    }

    /// Applies the transform to a direction (homogeneous coordinate 0).
    pub fn apply_dir(&self, d: &Vec3) -> Vec3 {
        self.rotation() * d
    }

    pub fn apply_homogeneous(&self, v: &Vector4<f64>) -> Vector4<f64> {
        self.m * v
    }

    /// Checks the bottom-row and orthonormality invariants.
    pub fn is_valid(&self, tol: f64) -> bool {
        let bottom_ok = self.m[(3, 0)] == 0.0
            && self.m[(3, 1)] == 0.0
            && self.m[(3, 2)] == 0.0
            && self.m[(3, 3)] == 1.0;
        let r = self.rotation();
        let ortho = (r.transpose() * r - Matrix3::identity()).norm() <= tol;
        let det_ok = (r.determinant() - 1.0).abs() <= tol;
        bottom_ok && ortho && det_ok
    }
}

impl std::ops::Mul for Transform4 {
    type Output = Transform4;

    fn mul(self, rhs: Transform4) -> Transform4 {
        let rot = self.rotation() * rhs.rotation();
        let trans = self.rotation() * rhs.translation() + self.translation();
        Transform4::from_parts(rot, trans)
    }
}

impl std::ops::Mul for &Transform4 {
    type Output = Transform4;

    fn mul(self, rhs: &Transform4) -> Transform4 {
        *self * *rhs
    }
}

/// Pure translation transform.
pub fn translation(dx: f64, dy: f64, dz: f64) -> Result<Transform4, MathError> {
    if !(dx.is_finite() && dy.is_finite() && dz.is_finite()) {
        return Err(MathError::NonFinite("translation offsets"));
    }
    Ok(Transform4::from_parts(
        Matrix3::identity(),
        Vec3::new(dx, dy, dz),
    ))
}

/// Elementary rotation about a body axis, zero translation.
pub fn rotation(axis: Axis, angle: f64) -> Result<Transform4, MathError> {
    if !angle.is_finite() {
        return Err(MathError::NonFinite("rotation angle"));
    }
    let (s, c) = angle.sin_cos();
    let rot = match axis {
        Axis::X => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        Axis::Y => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        Axis::Z => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
    };
    Ok(Transform4::from_parts(rot, Vec3::zeros()))
}

/// Yaw-pitch-roll rotation matrix `RotZ(rz) * RotY(ry) * RotX(rx)`.
pub fn rot_zyx(rx: f64, ry: f64, rz: f64) -> Matrix3<f64> {
    let (sx, cx) = rx.sin_cos();
    let (sy, cy) = ry.sin_cos();
    let (sz, cz) = rz.sin_cos();
    let rot_z = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    let rot_y = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rot_x = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
    rot_z * rot_y * rot_x
}

/// Body pose transform `Trans(x,y,z) * RotZ * RotY * RotX` from a 6-DOF vector
/// ordered `(x, y, z, rot_x, rot_y, rot_z)`.
pub fn pose_transform(dof: &Vec6) -> Transform4 {
    Transform4::from_parts(
        rot_zyx(dof[3], dof[4], dof[5]),
        Vec3::new(dof[0], dof[1], dof[2]),
    )
}

/// Recovers the 6-DOF vector `(x, y, z, rot_x, rot_y, rot_z)` of a transform,
/// inverting [`pose_transform`]. At the pitch singularity (`|rot_y| = π/2`)
/// the split between roll and yaw is conventional (roll forced to zero).
pub fn pose_dof(t: &Transform4) -> Vec6 {
    let r = t.rotation();
    let p = t.translation();
    // r20 = -sin(ry)
    let sy = -r[(2, 0)];
    let ry = sy.clamp(-1.0, 1.0).asin();
    let cy = (1.0 - sy * sy).sqrt();
    let (rx, rz) = if cy > 1e-9 {
        (r[(2, 1)].atan2(r[(2, 2)]), r[(1, 0)].atan2(r[(0, 0)]))
    } else {
        (0.0, (-r[(0, 1)]).atan2(r[(1, 1)]))
    };
    Vec6::new(p.x, p.y, p.z, rx, ry, rz)
}

/// Antisymmetric matrix `S` with `S * v == r × v` for every `v`.
pub fn skew(r: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -r.z, r.y, r.z, 0.0, -r.x, -r.y, r.x, 0.0)
}

/// Kronecker product: block matrix whose `(i, j)` block is `a[(i, j)] * b`.
pub fn kron(a: &MatMN, b: &MatMN) -> MatMN {
    a.kronecker(b)
}

/// Left pseudoinverse `(AᵀA)⁻¹Aᵀ`, computed through an SVD for stability.
///
/// Fails when the smallest singular value indicates rank below the column
/// count; the error carries the numerical rank found.
pub fn left_pseudoinverse(a: &MatMN) -> Result<MatMN, MathError> {
    const RANK_TOL: f64 = 1e-10;
    let ncols = a.ncols();
    let svd = a.clone().svd(true, true);
    let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL).count();
    if rank < ncols {
        return Err(MathError::RankDeficient {
            rank,
            needed: ncols,
        });
    }
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let mut sigma_inv = MatMN::zeros(ncols, u.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > RANK_TOL {
            sigma_inv[(i, i)] = 1.0 / s;
        }
    }
    Ok(v_t.transpose() * sigma_inv * u.transpose())
}

/// Columns of the matrix mapping `(rot_x', rot_y', rot_z')` rates to the world
/// angular velocity under the `RotZ * RotY * RotX` composition.
pub fn euler_rate_columns(ry: f64, rz: f64) -> Matrix3<f64> {
    let (sy, cy) = ry.sin_cos();
    let (sz, cz) = rz.sin_cos();
    // RotZ*RotY * x_hat, RotZ * y_hat, z_hat
    Matrix3::new(
        cz * cy, -sz, 0.0, //
        sz * cy, cz, 0.0, //
        -sy, 0.0, 1.0,
    )
}

/// 6×6 map from body DOF rates `(ẋ, ẏ, ż, rot_x', rot_y', rot_z')` to the body
/// twist `(v; ω)` in the world frame. The linear block is identity; the
/// angular block follows the `RotZ * RotY * RotX` composition. The matrix is
/// singular at `rot_y = ±π/2` and is returned unmodified there.
pub fn euler_rate_map(_rot_x: f64, rot_y: f64, rot_z: f64) -> Matrix6<f64> {
    let mut psi = Matrix6::identity();
    psi.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&euler_rate_columns(rot_y, rot_z));
    psi
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn translation_zero_is_identity() {
        let t = translation(0.0, 0.0, 0.0).unwrap();
        assert_eq!(t, Transform4::identity());
    }

    #[test]
    fn translation_moves_origin() {
        let t = translation(1.0, 2.0, 3.0).unwrap();
        let p = t.apply_point(&Vec3::zeros());
        assert_eq!(p, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(t.rotation(), Matrix3::identity());
    }

    #[test]
    fn translation_rejects_non_finite() {
        assert!(matches!(
            translation(f64::NAN, 0.0, 0.0),
            Err(MathError::NonFinite(_))
        ));
    }

    #[test]
    fn rotation_zero_is_identity() {
        let t = rotation(Axis::Z, 0.0).unwrap();
        assert_eq!(t, Transform4::identity());
    }

    #[test]
    fn rotation_quarter_turn_about_z() {
        let t = rotation(Axis::Z, FRAC_PI_2).unwrap();
        let p = t.apply_point(&Vec3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(p, Vec3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn rotation_composition_matches_direct_product() {
        // Pitch-then-roll factor pair checked against the explicit product.
        let mut rng_state = 0x1234_5678_u64;
        let mut next = move || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((rng_state >> 33) as f64 / (1u64 << 31) as f64 - 0.5) * 2.0 * PI
        };
        for _ in 0..50 {
            let (alpha, beta) = (next(), next());
            let composed = rotation(Axis::Y, alpha).unwrap() * rotation(Axis::X, beta).unwrap();
            let direct = rotation(Axis::Y, alpha).unwrap().rotation()
                * rotation(Axis::X, beta).unwrap().rotation();
            assert_relative_eq!(composed.rotation(), direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn skew_of_zero_is_zero() {
        assert_eq!(skew(&Vec3::zeros()), Matrix3::zeros());
    }

    #[test]
    fn skew_axis_case() {
        let s = skew(&Vec3::new(1.0, 0.0, 0.0));
        let v = s * Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(v, Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn kron_identity_blocks() {
        let i2 = MatMN::identity(2, 2);
        assert_eq!(kron(&i2, &i2), MatMN::identity(4, 4));
    }

    #[test]
    fn kron_row_times_column() {
        let a = MatMN::from_row_slice(1, 2, &[1.0, 2.0]);
        let b = MatMN::from_row_slice(2, 1, &[0.0, 1.0]);
        let k = kron(&a, &b);
        assert_eq!(k, MatMN::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 2.0]));
    }

    /// Reference Kronecker product by the elementwise definition.
    fn kron_loop(a: &MatMN, b: &MatMN) -> MatMN {
        let (m, n) = a.shape();
        let (p, q) = b.shape();
        let mut out = MatMN::zeros(m * p, n * q);
        for i in 0..m {
            for j in 0..n {
                for k in 0..p {
                    for l in 0..q {
                        out[(i * p + k, j * q + l)] = a[(i, j)] * b[(k, l)];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn left_pseudoinverse_square_inverts() {
        let a = MatMN::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let pinv = left_pseudoinverse(&a).unwrap();
        assert_relative_eq!(pinv * a, MatMN::identity(2, 2), epsilon = 1e-10);
    }

    #[test]
    fn left_pseudoinverse_tall_matches_normal_equations() {
        let a = MatMN::from_row_slice(2, 1, &[1.0, 1.0]);
        let pinv = left_pseudoinverse(&a).unwrap();
        assert_relative_eq!(pinv[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(pinv[(0, 1)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn left_pseudoinverse_reports_rank() {
        let a = MatMN::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        match left_pseudoinverse(&a) {
            Err(MathError::RankDeficient { rank, needed }) => {
                assert_eq!(rank, 1);
                assert_eq!(needed, 2);
            }
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn euler_rate_map_identity_at_zero() {
        assert_relative_eq!(
            euler_rate_map(0.0, 0.0, 0.0),
            Matrix6::identity(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn euler_rate_map_pure_yaw_rate() {
        let psi = euler_rate_map(0.0, 0.0, 0.0);
        let rates = Vec6::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.7);
        let twist = psi * rates;
        assert_relative_eq!(
            twist.fixed_rows::<3>(3).into_owned(),
            Vec3::new(0.0, 0.0, 0.7),
            epsilon = 1e-15
        );
    }

    #[test]
    fn euler_rate_map_matches_rotation_finite_difference() {
        // ω recovered from dR/dt * Rᵀ along a perturbed angle trajectory.
        let cases = [
            (0.3, -0.4, 1.1, 0.2, -0.5, 0.9),
            (-1.0, 0.7, -2.0, 0.4, 0.1, -0.3),
            (0.05, 1.2, 0.6, -0.8, 0.6, 0.2),
        ];
        let h = 1e-6;
        for &(rx, ry, rz, wx, wy, wz) in &cases {
            let rates = Vec3::new(wx, wy, wz);
            let r_plus = rot_zyx(rx + wx * h, ry + wy * h, rz + wz * h);
            let r_minus = rot_zyx(rx - wx * h, ry - wy * h, rz - wz * h);
            let r_dot = (r_plus - r_minus) / (2.0 * h);
            let omega_hat = r_dot * rot_zyx(rx, ry, rz).transpose();
            let omega_fd = Vec3::new(
                omega_hat[(2, 1)] - omega_hat[(1, 2)],
                omega_hat[(0, 2)] - omega_hat[(2, 0)],
                omega_hat[(1, 0)] - omega_hat[(0, 1)],
            ) * 0.5;
            let psi = euler_rate_map(rx, ry, rz);
            let twist = psi * Vec6::new(0.0, 0.0, 0.0, wx, wy, wz);
            let omega = twist.fixed_rows::<3>(3).into_owned();
            assert_relative_eq!(omega, omega_fd, epsilon = 1e-4);
        }
    }

    #[test]
    fn pose_dof_roundtrips() {
        let dof = Vec6::new(10.0, -4.0, 33.0, 0.3, -0.7, 2.1);
        let recovered = pose_dof(&pose_transform(&dof));
        assert_relative_eq!(recovered, dof, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn composition_preserves_invariants(
            a in -3.2_f64..3.2, b in -3.2_f64..3.2, c in -3.2_f64..3.2,
            x in -500.0_f64..500.0, y in -500.0_f64..500.0, z in -500.0_f64..500.0,
        ) {
            let t = translation(x, y, z).unwrap()
                * rotation(Axis::Z, a).unwrap()
                * rotation(Axis::Y, b).unwrap()
                * rotation(Axis::X, c).unwrap();
            prop_assert!(t.is_valid(1e-9));
            let round = t.inverse() * t;
            prop_assert!((round.matrix() - Matrix4::<f64>::identity()).norm() < 1e-10);
        }

        #[test]
        fn skew_matches_cross_product(
            rx in -10.0_f64..10.0, ry in -10.0_f64..10.0, rz in -10.0_f64..10.0,
            vx in -10.0_f64..10.0, vy in -10.0_f64..10.0, vz in -10.0_f64..10.0,
        ) {
            let r = Vec3::new(rx, ry, rz);
            let v = Vec3::new(vx, vy, vz);
            let s = skew(&r);
            prop_assert!((s * v - r.cross(&v)).norm() < 1e-12);
            prop_assert!((s + s.transpose()).norm() == 0.0);
        }

        #[test]
        fn kron_matches_loop_reference(seed in 0u64..1000) {
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
            let mut next = move || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state % 2000) as f64 / 100.0 - 10.0
            };
            let a = MatMN::from_fn(3, 2, |_, _| next());
            let b = MatMN::from_fn(2, 2, |_, _| next());
            prop_assert_eq!(kron(&a, &b), kron_loop(&a, &b));
        }

        #[test]
        fn pseudoinverse_left_inverse_property(seed in 0u64..500) {
            let mut state = seed.wrapping_mul(0x2545F4914F6CDD1D).wrapping_add(7);
            let mut next = move || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state % 2000) as f64 / 100.0 - 10.0
            };
            let a = MatMN::from_fn(9, 6, |_, _| next());
            // Random 9x6 matrices are full column rank with probability 1.
            if let Ok(pinv) = left_pseudoinverse(&a) {
                let residual = (pinv * &a - MatMN::identity(6, 6)).norm();
                prop_assert!(residual < 1e-8, "residual {}", residual);
            }
        }
    }
}
