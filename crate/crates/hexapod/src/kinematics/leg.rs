//! Per-leg inverse and forward kinematics.
//!
//! Legs are 3-DOF chains: a coxa joint rotating about the body z-axis, then
//! femur and tibia joints rotating about the local y-axis. The leg frame
//! shares the body x direction and flips y and z, with its origin at the
//! joint mount, so leg-frame z is positive downwards.

use crate::math::{rotation, translation, Axis, Transform4, Vec3};

use super::geometry::RobotGeometry;
use super::{Frame, JointAngles, KinematicsError, LegEndpoint};

/// Transform binding the leg coordinate system to the body coordinate system:
/// maps leg-frame coordinates into body-frame coordinates.
pub fn body_to_leg(geom: &RobotGeometry, leg: usize) -> Result<Transform4, KinematicsError> {
    let mount = geom
        .legs
        .get(leg)
        .ok_or(KinematicsError::InvalidLeg(leg))?;
    let mut m = nalgebra::Matrix4::<f64>::identity();
    m[(1, 1)] = -1.0;
    m[(2, 2)] = -1.0;
    m[(0, 3)] = mount.x_j;
    m[(1, 3)] = mount.y_j;
    Ok(Transform4::from_matrix(m).expect("sign-flip transform is rigid"))
}

/// Transform from the body frame to the coxa link frame (origin at the coxa
/// joint, x pointing along the coxa).
pub fn body_to_coxa(geom: &RobotGeometry, leg: usize, theta: f64) -> Transform4 {
    let mount = &geom.legs[leg];
    translation(mount.x_j, mount.y_j, 0.0).unwrap()
        * rotation(Axis::Z, mount.epsilon + theta).unwrap()
}

/// Transform from the coxa frame to the femur frame.
pub fn coxa_to_femur(geom: &RobotGeometry, phi: f64) -> Transform4 {
    translation(geom.l_c, 0.0, 0.0).unwrap() * rotation(Axis::Y, phi).unwrap()
}

/// Transform from the femur frame to the tibia frame.
pub fn femur_to_tibia(geom: &RobotGeometry, psi: f64) -> Transform4 {
    translation(geom.l_f, 0.0, 0.0).unwrap() * rotation(Axis::Y, psi).unwrap()
}

/// Forward kinematics to the body frame.
pub fn leg_fk_body(angles: &JointAngles, geom: &RobotGeometry, leg: usize) -> Vec3 {
    let chain = body_to_coxa(geom, leg, angles.theta)
        * coxa_to_femur(geom, angles.phi)
        * femur_to_tibia(geom, angles.psi);
    chain.apply_point(&Vec3::new(geom.l_t, 0.0, 0.0))
}

/// Forward kinematics: joint angles to the foot position in the leg frame.
pub fn leg_fk(
    angles: &JointAngles,
    geom: &RobotGeometry,
    leg: usize,
) -> Result<LegEndpoint, KinematicsError> {
    let body = leg_fk_body(angles, geom, leg);
    let to_leg = body_to_leg(geom, leg)?.inverse();
    Ok(LegEndpoint::new(to_leg.apply_point(&body), Frame::Leg))
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if w <= -std::f64::consts::PI {
        w += two_pi;
    }
    w
}

/// Inverse kinematics: leg-frame foot position to joint angles.
///
/// The triangle closure around femur and tibia admits one knee configuration
/// (tibia angle in `[0, π]`), so the solution is unique on the reachable set.
pub fn leg_ik(
    endpoint: &LegEndpoint,
    geom: &RobotGeometry,
    leg: usize,
) -> Result<JointAngles, KinematicsError> {
    endpoint.expect_frame(Frame::Leg)?;
    if leg >= crate::LEG_COUNT {
        return Err(KinematicsError::InvalidLeg(leg));
    }
    let p = endpoint.position;
    let epsilon = geom.legs[leg].epsilon;

    let radial = (p.x * p.x + p.y * p.y).sqrt();
    let true_x = radial - geom.l_c;
    if true_x < 0.0 {
        return Err(KinematicsError::Unreachable {
            leg,
            detail: format!("endpoint behind coxa: radial reach {radial:.3} mm < l_c"),
        });
    }
    let im = (true_x * true_x + p.z * p.z).sqrt();
    let lo = (geom.l_f - geom.l_t).abs();
    let hi = geom.l_f + geom.l_t;
    // Tiny slack absorbs roundoff at the workspace boundary.
    const EDGE_SLACK: f64 = 1e-9;
    if im < lo - EDGE_SLACK || im > hi + EDGE_SLACK {
        return Err(KinematicsError::Unreachable {
            leg,
            detail: format!(
                "femur-tibia reach violated: {im:.3} mm outside [{lo:.3}, {hi:.3}]"
            ),
        });
    }

    let theta = wrap_angle(-p.y.atan2(p.x) - epsilon);
    let cos_inner = ((geom.l_f * geom.l_f + im * im - geom.l_t * geom.l_t)
        / (2.0 * im * geom.l_f))
        .clamp(-1.0, 1.0);
    let phi = std::f64::consts::FRAC_PI_2 - true_x.atan2(p.z) - cos_inner.acos();
    let cos_knee = ((geom.l_f * geom.l_f + geom.l_t * geom.l_t - im * im)
        / (2.0 * geom.l_f * geom.l_t))
        .clamp(-1.0, 1.0);
    let psi = std::f64::consts::PI - cos_knee.acos();

    let angles = JointAngles { theta, phi, psi };
    for (name, value) in [("coxa", theta), ("femur", phi), ("tibia", psi)] {
        if value.abs() > geom.actuator_limit {
            return Err(KinematicsError::Unreachable {
                leg,
                detail: format!(
                    "{name} angle {value:.4} rad outside actuator limit ±{:.4}",
                    geom.actuator_limit
                ),
            });
        }
    }
    Ok(angles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn geom() -> RobotGeometry {
        RobotGeometry::default()
    }

    #[test]
    fn ik_femur_level_tibia_vertical() {
        let g = geom();
        for leg in 0..crate::LEG_COUNT {
            let p = LegEndpoint::new(Vec3::new(g.l_c + g.l_f, 0.0, g.l_t), Frame::Leg);
            let a = leg_ik(&p, &g, leg).unwrap();
            assert_relative_eq!(a.theta, -g.legs[leg].epsilon, epsilon = 1e-12);
            assert_relative_eq!(a.phi, 0.0, epsilon = 1e-12);
            assert_relative_eq!(a.psi, FRAC_PI_2, epsilon = 1e-12);
        }
    }

    #[test]
    fn ik_fully_stretched() {
        let g = geom();
        let p = LegEndpoint::new(Vec3::new(g.l_c + g.l_f + g.l_t, 0.0, 0.0), Frame::Leg);
        // Leg 1 has epsilon = -pi/2, so theta = pi/2 stays inside the limits.
        let a = leg_ik(&p, &g, 1).unwrap();
        assert_relative_eq!(a.phi, 0.0, epsilon = 1e-9);
        assert_relative_eq!(a.psi, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn ik_rejects_point_behind_coxa() {
        let g = geom();
        let p = LegEndpoint::new(Vec3::new(10.0, 0.0, 50.0), Frame::Leg);
        assert!(matches!(
            leg_ik(&p, &g, 0),
            Err(KinematicsError::Unreachable { .. })
        ));
    }

    #[test]
    fn ik_rejects_out_of_reach() {
        let g = geom();
        let p = LegEndpoint::new(Vec3::new(500.0, 0.0, 0.0), Frame::Leg);
        assert!(matches!(
            leg_ik(&p, &g, 0),
            Err(KinematicsError::Unreachable { .. })
        ));
    }

    #[test]
    fn fk_inverts_ik_examples() {
        let g = geom();
        let a = JointAngles {
            theta: -g.legs[0].epsilon,
            phi: 0.0,
            psi: FRAC_PI_2,
        };
        let p = leg_fk(&a, &g, 0).unwrap();
        assert_relative_eq!(
            p.position,
            Vec3::new(g.l_c + g.l_f, 0.0, g.l_t),
            epsilon = 1e-12
        );

        let stretched = JointAngles {
            theta: 0.0,
            phi: 0.0,
            psi: 0.0,
        };
        let p = leg_fk(&stretched, &g, 1).unwrap();
        // theta=0 leaves the leg along the mount direction; with epsilon=-pi/2
        // the leg-frame azimuth is +pi/2 worth of direction, but the radial
        // distance is what the planar reach fixes.
        let radial = (p.position.x.powi(2) + p.position.y.powi(2)).sqrt();
        assert_relative_eq!(radial, g.l_c + g.l_f + g.l_t, epsilon = 1e-9);
        assert_relative_eq!(p.position.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fk_matches_planar_trig_chain() {
        let g = geom();
        let mut seed = 99u64;
        let mut next = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed % 10000) as f64 / 10000.0
        };
        for _ in 0..200 {
            let leg = (next() * 6.0) as usize % 6;
            let theta = (next() - 0.5) * 1.5;
            let phi = (next() - 0.5) * 2.0;
            let psi = next() * 2.5;
            let a = JointAngles { theta, phi, psi };
            let p = leg_fk(&a, &g, leg).unwrap().position;
            // Independent planar chain: radial reach and drop depend only on
            // femur and tibia angles.
            let reach = g.l_c + g.l_f * phi.cos() + g.l_t * (phi + psi).cos();
            let drop = g.l_f * phi.sin() + g.l_t * (phi + psi).sin();
            let radial = (p.x * p.x + p.y * p.y).sqrt() * reach.signum();
            assert_relative_eq!(radial, reach, epsilon = 1e-9, max_relative = 1e-9);
            assert_relative_eq!(p.z, drop, epsilon = 1e-9);
            // Azimuth in leg frame is the negated coxa rotation.
            if reach > 1.0 {
                let azimuth = p.y.atan2(p.x);
                let expected = -(g.legs[leg].epsilon + theta);
                let diff = (azimuth - expected).sin().abs();
                assert!(diff < 1e-9, "azimuth mismatch: {diff}");
            }
        }
    }

    #[test]
    fn body_to_leg_matches_sign_flips() {
        let mut g = geom();
        g.legs[0].x_j = 0.0;
        g.legs[0].y_j = 0.0;
        let t = body_to_leg(&g, 0).unwrap();
        let p = Vec3::new(3.0, 4.0, 5.0);
        let once = t.apply_point(&p);
        assert_eq!(once, Vec3::new(3.0, -4.0, -5.0));
        assert_eq!(t.apply_point(&once), p);
    }

    #[test]
    fn joint_is_leg_origin() {
        let g = geom();
        for leg in 0..crate::LEG_COUNT {
            let joint = Vec3::new(g.legs[leg].x_j, g.legs[leg].y_j, 0.0);
            let in_leg = body_to_leg(&g, leg).unwrap().inverse().apply_point(&joint);
            assert_relative_eq!(in_leg, Vec3::zeros(), epsilon = 1e-12);
        }
    }

    proptest! {
        /// Round trip on the reachable set: sample angles, push through FK,
        /// recover through IK, and compare both angles and endpoint.
        #[test]
        fn fk_ik_roundtrip(
            leg in 0usize..6,
            theta in -0.9_f64..0.9,
            phi in -1.2_f64..1.2,
            psi in 0.05_f64..2.4,
        ) {
            let g = geom();
            let angles = JointAngles { theta, phi, psi };
            // Exclude configurations folded past the coxa: the planar reach
            // must stay positive for the single-branch inverse to apply.
            let reach = g.l_c + g.l_f * phi.cos() + g.l_t * (phi + psi).cos();
            prop_assume!(reach > g.l_c + 1.0);
            let p = leg_fk(&angles, &g, leg).unwrap();
            let recovered = match leg_ik(&p, &g, leg) {
                Ok(r) => r,
                Err(e) => return Err(TestCaseError::fail(format!("ik failed: {e}"))),
            };
            prop_assert!((recovered.theta - theta).abs() < 1e-9);
            prop_assert!((recovered.phi - phi).abs() < 1e-9);
            prop_assert!((recovered.psi - psi).abs() < 1e-9);
            let p2 = leg_fk(&recovered, &g, leg).unwrap();
            prop_assert!((p.position - p2.position).norm() < 1e-9);
        }
    }
}
