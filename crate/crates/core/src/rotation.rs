//! Rotation utilities: the continuous 6D parameterisation, BVH Euler
//! conversions and minimal rotations between directions.

// `!(x <= tol)` style checks are deliberate: NaN has to fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RotationError {
    #[error("matrix is not a proper rotation (orthonormality error {0:.3e})")]
    NotARotation(f64),
    #[error("degenerate 6D input: {0}")]
    DegenerateInput(&'static str),
}

const ORTHONORMAL_TOL: f64 = 1e-6;
const DEGENERATE_NORM: f64 = 1e-9;

fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    let e = (r.transpose() * r - Matrix3::identity()).abs().max();
    e.max((r.determinant() - 1.0).abs())
}

/// Returns true when `r` is orthonormal with determinant +1 within `tol`.
pub fn is_rotation(r: &Matrix3<f64>, tol: f64) -> bool {
    orthonormality_error(r) <= tol
}

/// First two columns of the rotation matrix, concatenated.
pub fn encode_6d(r: &Matrix3<f64>) -> Result<[f64; 6], RotationError> {
    let err = orthonormality_error(r);
    if !(err <= ORTHONORMAL_TOL) {
        return Err(RotationError::NotARotation(err));
    }
    Ok([r[(0, 0)], r[(1, 0)], r[(2, 0)], r[(0, 1)], r[(1, 1)], r[(2, 1)]])
}

/// Gram-Schmidt reconstruction of a rotation from its 6D encoding.
///
/// The result is always a proper rotation, even for a scaled or noisy input.
pub fn decode_6d(v: &[f64]) -> Result<Matrix3<f64>, RotationError> {
    assert!(v.len() >= 6, "6D rotation needs six values");
    let a1 = Vector3::new(v[0], v[1], v[2]);
    let a2 = Vector3::new(v[3], v[4], v[5]);
    let n1 = a1.norm();
    if !(n1 > DEGENERATE_NORM) {
        return Err(RotationError::DegenerateInput("first column vanishes"));
    }
    let b1 = a1 / n1;
    let ortho = a2 - b1 * b1.dot(&a2);
    let n2 = ortho.norm();
    if !(n2 > DEGENERATE_NORM) {
        return Err(RotationError::DegenerateInput("columns are parallel or the second vanishes"));
    }
    let b2 = ortho / n2;
    let b3 = b1.cross(&b2);
    Ok(Matrix3::from_columns(&[b1, b2, b3]))
}

/// Rotation by `degrees` about a principal axis (0 = X, 1 = Y, 2 = Z).
pub fn axis_rotation(axis: usize, degrees: f64) -> Matrix3<f64> {
    let (s, c) = degrees.to_radians().sin_cos();
    match axis {
        0 => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
        1 => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
        2 => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
        _ => panic!("axis index out of range: {axis}"),
    }
}

/// Composes Euler angles in BVH channel order: `R = R_a0 * R_a1 * R_a2`.
pub fn euler_to_matrix(axes: &[usize], degrees: &[f64]) -> Matrix3<f64> {
    axes.iter()
        .zip(degrees)
        .fold(Matrix3::identity(), |acc, (&a, &d)| acc * axis_rotation(a, d))
}

/// Result of extracting Euler angles from a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerAngles {
    pub degrees: Vec<f64>,
    /// Set when the middle angle is within a hair of +-90 degrees.
    pub gimbal: bool,
}

fn missing_axis(a: usize, b: usize) -> usize {
    3 - a - b
}

/// Extracts Euler angles for the given channel axis order.
///
/// Three distinct axes reproduce `r` exactly (principal branch, middle
/// angle in [-90, 90]). With fewer axes the remaining ones are padded,
/// the full decomposition is taken and the padded angles are dropped, so the
/// result is the closest representable rotation only when `r` actually lies
/// in the reachable subgroup.
pub fn matrix_to_euler(r: &Matrix3<f64>, axes: &[usize]) -> EulerAngles {
    let (i, j, k, used) = match axes {
        [] => return EulerAngles { degrees: Vec::new(), gimbal: false },
        [a] => {
            let b = (a + 1) % 3;
            (*a, b, missing_axis(*a, b), 1)
        }
        [a, b] => (*a, *b, missing_axis(*a, *b), 2),
        [a, b, c] => (*a, *b, *c, 3),
        _ => panic!("at most three rotation axes"),
    };
    assert!(i != j && j != k && i != k, "repeated Euler axes are not supported");
    // +1 for cyclic orders (XYZ, YZX, ZXY), -1 otherwise.
    let e = if (j + 3 - i) % 3 == 1 { 1.0 } else { -1.0 };

    let sb = (e * r[(i, k)]).clamp(-1.0, 1.0);
    let beta = sb.asin();
    let gimbal = beta.cos() < 1e-6;
    let (alpha, gamma) = if gimbal {
        (f64::atan2(e * r[(k, j)], r[(j, j)]), 0.0)
    } else {
        (
            f64::atan2(-e * r[(j, k)], r[(k, k)]),
            f64::atan2(-e * r[(i, j)], r[(i, i)]),
        )
    };
    let all = [alpha.to_degrees(), beta.to_degrees(), gamma.to_degrees()];
    EulerAngles {
        degrees: all[..used].to_vec(),
        gimbal,
    }
}

/// Smallest rotation taking unit direction `from` onto unit direction `to`.
///
/// For anti-parallel inputs the axis is the first of X, Y, Z (in that order)
/// whose projection orthogonal to `from` has non-negligible length.
pub fn rotation_between(from: &Vector3<f64>, to: &Vector3<f64>) -> Matrix3<f64> {
    let a = from.normalize();
    let b = to.normalize();
    let axis = a.cross(&b);
    let sin = axis.norm();
    let cos = a.dot(&b);
    if sin > 1e-12 {
        let angle = sin.atan2(cos);
        return Rotation3::from_axis_angle(&Unit::new_unchecked(axis / sin), angle).into_inner();
    }
    if cos > 0.0 {
        return Matrix3::identity();
    }
    let perpendicular = (0..3)
        .map(|i| {
            let e = Vector3::ith(i, 1.0);
            e - a * a.dot(&e)
        })
        .find(|p| p.norm() > 1e-6)
        .expect("a unit vector has a perpendicular basis direction");
    Rotation3::from_axis_angle(&Unit::new_normalize(perpendicular), std::f64::consts::PI).into_inner()
}
