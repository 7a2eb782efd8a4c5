//! Exact maps among the hyperboloid model, the Poincare ball and
//! compactified Euclidean space, plus the hyperbolic utilities used by the
//! junction-persistence analysis.
//!
//! The Euclidean chart is the radial compactification `u = p / (1 + |p|)`,
//! a smooth bijection R^3 -> B^3; any other conformal identification differs
//! from it by a boundary-fixing reparametrization, so persistence radii
//! reported through it are chart-tagged.

use nalgebra::{Matrix3, Vector3, Vector4};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("point is not on the hyperboloid: <x,x> = {form}, x4 = {x4}")]
    NotOnHyperboloid { form: f64, x4: f64 },
    #[error("point lies on or beyond the ideal boundary (|u| = {norm})")]
    OnIdealBoundary { norm: f64 },
}

const HYPERBOLOID_TOL: f64 = 1e-10;
const IDEAL_TOL: f64 = 1e-12;

/// Point on the upper hyperboloid sheet `<x,x> = -1`, `x4 >= 1` in Minkowski
/// space R^{3,1}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperboloidPoint {
    pub x: Vector4<f64>,
}

impl HyperboloidPoint {
    pub fn new(x: Vector4<f64>) -> Result<Self, ModelError> {
        let form = minkowski_form(&x, &x);
        if (form + 1.0).abs() > HYPERBOLOID_TOL || x.w < 1.0 - HYPERBOLOID_TOL {
            return Err(ModelError::NotOnHyperboloid { form, x4: x.w });
        }
        Ok(Self { x })
    }
}

/// Point of the open Poincare ball `|u| < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallPoint {
    pub u: Vector3<f64>,
}

impl BallPoint {
    pub fn new(u: Vector3<f64>) -> Result<Self, ModelError> {
        let norm = u.norm();
        if norm >= 1.0 {
            return Err(ModelError::OnIdealBoundary { norm });
        }
        Ok(Self { u })
    }
}

/// Lorentzian inner product `x1 y1 + x2 y2 + x3 y3 - x4 y4`.
pub fn minkowski_form(x: &Vector4<f64>, y: &Vector4<f64>) -> f64 {
    x.x * y.x + x.y * y.y + x.z * y.z - x.w * y.w
}

/// Stereographic projection of the hyperboloid onto the ball:
/// `u = (x1, x2, x3) / (1 + x4)`.
pub fn to_ball(p: &HyperboloidPoint) -> BallPoint {
    let d = 1.0 + p.x.w;
    BallPoint {
        u: Vector3::new(p.x.x / d, p.x.y / d, p.x.z / d),
    }
}

/// Inverse projection: `x = (2u, 1 + |u|^2) / (1 - |u|^2)`.
pub fn to_hyperboloid(p: &BallPoint) -> Result<HyperboloidPoint, ModelError> {
    let n2 = p.u.norm_squared();
    if p.u.norm() >= 1.0 - IDEAL_TOL {
        return Err(ModelError::OnIdealBoundary { norm: p.u.norm() });
    }
    let d = 1.0 - n2;
    Ok(HyperboloidPoint {
        x: Vector4::new(
            2.0 * p.u.x / d,
            2.0 * p.u.y / d,
            2.0 * p.u.z / d,
            (1.0 + n2) / d,
        ),
    })
}

/// Jacobian of [`to_hyperboloid`] at `u` (4 rows, 3 columns).
fn lift_jacobian(u: &Vector3<f64>) -> [Vector4<f64>; 3] {
    let n2 = u.norm_squared();
    let d = 1.0 - n2;
    let d2 = d * d;
    let mut cols = [Vector4::zeros(); 3];
    for k in 0..3 {
        // d/du_k of 2 u_i / d  =  2 delta_ik / d + 4 u_i u_k / d^2
        let mut col = Vector4::zeros();
        for i in 0..3 {
            let delta = if i == k { 1.0 } else { 0.0 };
            col[i] = 2.0 * delta / d + 4.0 * u[i] * u[k] / d2;
        }
        // d/du_k of (1 + n2) / d = 2 u_k / d + 2 u_k (1 + n2) / d^2
        col[3] = 2.0 * u[k] / d + 2.0 * u[k] * (1.0 + n2) / d2;
        cols[k] = col;
    }
    cols
}

/// Evaluate both sides of the pullback identity with the exact Jacobian:
/// returns `(g_M(dx, dx), g_P(du, du))` where `dx` is the pushforward of
/// `du` under the inverse stereographic projection.
pub fn pullback_check(p: &BallPoint, du: &Vector3<f64>) -> Result<(f64, f64), ModelError> {
    if p.u.norm() >= 1.0 - IDEAL_TOL {
        return Err(ModelError::OnIdealBoundary { norm: p.u.norm() });
    }
    let cols = lift_jacobian(&p.u);
    let dx = cols[0] * du.x + cols[1] * du.y + cols[2] * du.z;
    let g_m = minkowski_form(&dx, &dx);
    let d = 1.0 - p.u.norm_squared();
    let g_p = 4.0 * du.norm_squared() / (d * d);
    Ok((g_m, g_p))
}

/// Same comparison with a finite-difference differential at step `1e-6`;
/// the independent route for cross-checking the exact Jacobian.
pub fn pullback_check_fd(p: &BallPoint, du: &Vector3<f64>) -> Result<(f64, f64), ModelError> {
    let step = 1e-6;
    let plus = BallPoint::new(p.u + du * step).map_err(|_| ModelError::OnIdealBoundary {
        norm: (p.u + du * step).norm(),
    })?;
    let minus = BallPoint::new(p.u - du * step).map_err(|_| ModelError::OnIdealBoundary {
        norm: (p.u - du * step).norm(),
    })?;
    let xp = to_hyperboloid(&plus)?;
    let xm = to_hyperboloid(&minus)?;
    let dx = (xp.x - xm.x) / (2.0 * step);
    let g_m = minkowski_form(&dx, &dx);
    let d = 1.0 - p.u.norm_squared();
    let g_p = 4.0 * du.norm_squared() / (d * d);
    Ok((g_m, g_p))
}

/// Radial compactification `u = p / (1 + |p|)`: the crate's canonical chart
/// from Euclidean space onto the open ball.
pub fn euclid_to_ball(p: &Vector3<f64>) -> BallPoint {
    BallPoint {
        u: p / (1.0 + p.norm()),
    }
}

/// Inverse chart `p = u / (1 - |u|)`.
pub fn ball_to_euclid(p: &BallPoint) -> Result<Vector3<f64>, ModelError> {
    let norm = p.u.norm();
    if norm >= 1.0 {
        return Err(ModelError::OnIdealBoundary { norm });
    }
    Ok(p.u / (1.0 - norm))
}

/// Lobachevsky's angle of parallelism `Pi(d) = 2 atan(e^{-d})`, strictly
/// decreasing with `Pi(0) = pi/2`.
pub fn angle_of_parallelism(d: f64) -> f64 {
    2.0 * (-d).exp().atan()
}

/// Distance threshold `d*` beyond which `Pi(d) < pi/3`; solves
/// `2 atan(e^{-d}) = pi/3`, giving `d* = log(3)/2`.
pub fn parallelism_threshold_120() -> f64 {
    0.5 * 3.0f64.ln()
}

/// Poincare-ball radius of the hyperbolic ball of radius `d` about the
/// origin: `tanh(d/2)`.
pub fn hyperbolic_radius_to_ball(d: f64) -> f64 {
    (d / 2.0).tanh()
}

/// Hyperbolic distance in the Poincare ball.
pub fn hyperbolic_distance(a: &BallPoint, b: &BallPoint) -> f64 {
    let num = 2.0 * (a.u - b.u).norm_squared();
    let den = (1.0 - a.u.norm_squared()) * (1.0 - b.u.norm_squared());
    (1.0 + num / den).acosh()
}

/// Rotation matrix from a unit axis and angle (Rodrigues formula); shared by
/// tests and verification rigs.
pub fn rotation_about(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    let k = axis.normalize();
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_ball_point(rng: &mut ChaCha8Rng, max_norm: f64) -> BallPoint {
        loop {
            let u = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if u.norm() < 1.0 {
                return BallPoint { u: u * max_norm };
            }
        }
    }

    #[test]
    fn apex_maps_to_center() {
        let apex = HyperboloidPoint::new(Vector4::new(0.0, 0.0, 0.0, 1.0)).unwrap();
        assert_eq!(to_ball(&apex).u, Vector3::zeros());
        let back = to_hyperboloid(&BallPoint::new(Vector3::zeros()).unwrap()).unwrap();
        assert_eq!(back.x, Vector4::new(0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn worked_point_on_z_axis() {
        let p = HyperboloidPoint::new(Vector4::new(0.0, 0.0, 4.0 / 3.0, 5.0 / 3.0)).unwrap();
        let u = to_ball(&p);
        assert!((u.u - Vector3::new(0.0, 0.0, 0.5)).norm() < 1e-15);
        let back = to_hyperboloid(&u).unwrap();
        assert!((back.x - p.x).norm() < 1e-14);
    }

    #[test]
    fn round_trips_hold_to_1e12() {
        // x4 <= 10 corresponds to |u| <= sqrt(9/11) ~ 0.9045.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let b = random_ball_point(&mut rng, 0.904);
            let x = to_hyperboloid(&b).unwrap();
            assert!(x.x.w <= 10.0 + 1e-9);
            let form = minkowski_form(&x.x, &x.x);
            assert!((form + 1.0).abs() < 1e-12);
            let back = to_ball(&x);
            assert!((back.u - b.u).norm() < 1e-12);
        }
    }

    #[test]
    fn near_ideal_boundary_is_an_error() {
        let u = BallPoint {
            u: Vector3::new(1.0 - 1e-13, 0.0, 0.0),
        };
        assert!(matches!(
            to_hyperboloid(&u),
            Err(ModelError::OnIdealBoundary { .. })
        ));
    }

    #[test]
    fn pullback_at_center_is_four() {
        let origin = BallPoint::new(Vector3::zeros()).unwrap();
        let (gm, gp) = pullback_check(&origin, &Vector3::x()).unwrap();
        assert!((gm - 4.0).abs() < 1e-12);
        assert!((gp - 4.0).abs() < 1e-12);
    }

    #[test]
    fn pullback_of_zero_vector_vanishes() {
        let p = BallPoint::new(Vector3::new(0.3, -0.2, 0.1)).unwrap();
        let (gm, gp) = pullback_check(&p, &Vector3::zeros()).unwrap();
        assert_eq!(gm, 0.0);
        assert_eq!(gp, 0.0);
    }

    #[test]
    fn pullback_agreement_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let p = random_ball_point(&mut rng, 0.85);
            let du = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let (gm, gp) = pullback_check(&p, &du).unwrap();
            assert!(
                (gm - gp).abs() <= 1e-12 * gp.abs().max(1.0),
                "exact Jacobian disagrees: {gm} vs {gp}"
            );
            let (gm_fd, gp_fd) = pullback_check_fd(&p, &du).unwrap();
            assert!((gm_fd - gp_fd).abs() <= 1e-6 * gp_fd.abs().max(1.0));
        }
    }

    #[test]
    fn euclid_chart_worked_values() {
        assert_eq!(euclid_to_ball(&Vector3::zeros()).u, Vector3::zeros());
        let u = euclid_to_ball(&Vector3::new(3.0, 0.0, 0.0));
        assert!((u.u - Vector3::new(0.75, 0.0, 0.0)).norm() < 1e-15);
        let back = ball_to_euclid(&u).unwrap();
        assert!((back - Vector3::new(3.0, 0.0, 0.0)).norm() < 1e-12);
        // Radial profile tends to the ideal boundary.
        let far = euclid_to_ball(&Vector3::new(1e12, 0.0, 0.0));
        assert!(far.u.norm() < 1.0 && far.u.norm() > 1.0 - 1e-11);
    }

    #[test]
    fn angle_of_parallelism_values() {
        assert!((angle_of_parallelism(0.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!(angle_of_parallelism(50.0) < 1e-15);
        let d_star = parallelism_threshold_120();
        assert!((d_star - 0.5493061443340549).abs() < 1e-15);
        assert!((angle_of_parallelism(d_star) - std::f64::consts::FRAC_PI_3).abs() < 1e-14);
        // Strictly decreasing.
        let mut prev = angle_of_parallelism(0.0);
        for k in 1..100 {
            let cur = angle_of_parallelism(k as f64 * 0.1);
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn hyperbolic_distance_values_and_triangle_inequality() {
        let o = BallPoint::new(Vector3::zeros()).unwrap();
        assert_eq!(hyperbolic_distance(&o, &o), 0.0);
        let p = BallPoint::new(Vector3::new(0.5, 0.0, 0.0)).unwrap();
        assert!((hyperbolic_distance(&o, &p) - 3.0f64.ln()).abs() < 1e-12);
        assert!((hyperbolic_distance(&p, &o) - 3.0f64.ln()).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let a = random_ball_point(&mut rng, 0.95);
            let b = random_ball_point(&mut rng, 0.95);
            let c = random_ball_point(&mut rng, 0.95);
            let ab = hyperbolic_distance(&a, &b);
            let bc = hyperbolic_distance(&b, &c);
            let ac = hyperbolic_distance(&a, &c);
            assert!(ac <= ab + bc + 1e-9);
            assert!(ab >= 0.0);
        }
    }

    #[test]
    fn ball_radius_of_parallelism_threshold() {
        // tanh(log(3)/4) = (sqrt(3)-1)/(sqrt(3)+1).
        let r = hyperbolic_radius_to_ball(parallelism_threshold_120());
        let expect = (3.0f64.sqrt() - 1.0) / (3.0f64.sqrt() + 1.0);
        assert!((r - expect).abs() < 1e-15);
    }
}
