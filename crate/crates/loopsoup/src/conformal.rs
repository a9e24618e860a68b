//! A small family of conformal maps of the plane, enough to exercise
//! covariance of the Brownian loop measure under analytic changes of
//! coordinates. Points are (re, im) pairs; each map knows its derivative and
//! (on its stated branch) its inverse.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub type Point = (f64, f64);

fn c_mul(a: Point, b: Point) -> Point {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

fn c_abs(a: Point) -> f64 {
    a.0.hypot(a.1)
}

/// f(z) = a·z + b, or f(z) = z²/2 restricted to Re z > 0 (where it is
/// injective and the principal square root inverts it).
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConformalMap {
    Affine { a: Point, b: Point },
    HalfPlaneSquare,
}

impl ConformalMap {
    pub fn scale(s: f64) -> Self {
        ConformalMap::Affine {
            a: (s, 0.0),
            b: (0.0, 0.0),
        }
    }

    pub fn apply(&self, z: Point) -> Point {
        match *self {
            ConformalMap::Affine { a, b } => {
                let az = c_mul(a, z);
                (az.0 + b.0, az.1 + b.1)
            }
            ConformalMap::HalfPlaneSquare => {
                let z2 = c_mul(z, z);
                (z2.0 / 2.0, z2.1 / 2.0)
            }
        }
    }

    /// |f'(z)|. Errors where the derivative vanishes (the map is not
    /// conformal there).
    pub fn deriv_abs(&self, z: Point) -> Result<f64> {
        let d = match *self {
            ConformalMap::Affine { a, .. } => c_abs(a),
            ConformalMap::HalfPlaneSquare => c_abs(z),
        };
        if d <= 0.0 {
            return Err(Error::MapNotInvertible { x: z.0, y: z.1 });
        }
        Ok(d)
    }

    /// Inverse on the map's branch. For `HalfPlaneSquare` this is the
    /// principal square root of 2w, valid because the forward map was
    /// restricted to Re z > 0.
    pub fn invert(&self, w: Point) -> Result<Point> {
        match *self {
            ConformalMap::Affine { a, b } => {
                let den = a.0 * a.0 + a.1 * a.1;
                if den <= 0.0 {
                    return Err(Error::MapNotInvertible { x: w.0, y: w.1 });
                }
                let num = (w.0 - b.0, w.1 - b.1);
                // division by a = multiplication by conj(a)/|a|^2
                Ok((
                    (num.0 * a.0 + num.1 * a.1) / den,
                    (num.1 * a.0 - num.0 * a.1) / den,
                ))
            }
            ConformalMap::HalfPlaneSquare => {
                let u = (2.0 * w.0, 2.0 * w.1);
                let r = c_abs(u);
                if r <= 0.0 {
                    return Err(Error::MapNotInvertible { x: w.0, y: w.1 });
                }
                // principal root: positive real part
                let re = ((r + u.0) / 2.0).sqrt();
                let im = if u.1 >= 0.0 {
                    ((r - u.0) / 2.0).sqrt()
                } else {
                    -((r - u.0) / 2.0).sqrt()
                };
                Ok((re, im))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn affine_round_trip() {
        let f = ConformalMap::Affine {
            a: (2.0, 1.0),
            b: (-0.5, 3.0),
        };
        let z = (1.25, -0.75);
        let w = f.apply(z);
        let back = f.invert(w).unwrap();
        assert_relative_eq!(back.0, z.0, epsilon = 1e-12);
        assert_relative_eq!(back.1, z.1, epsilon = 1e-12);
        assert_relative_eq!(f.deriv_abs(z).unwrap(), (5.0f64).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn half_square_round_trip_on_right_half_plane() {
        let f = ConformalMap::HalfPlaneSquare;
        for &z in &[(1.0, 0.0), (2.0, 1.5), (0.5, -3.0)] {
            let w = f.apply(z);
            let back = f.invert(w).unwrap();
            assert_relative_eq!(back.0, z.0, epsilon = 1e-12);
            assert_relative_eq!(back.1, z.1, epsilon = 1e-12);
            assert_relative_eq!(f.deriv_abs(z).unwrap(), c_abs(z), epsilon = 1e-12);
        }
    }

    #[test]
    fn degenerate_points_error() {
        assert!(ConformalMap::HalfPlaneSquare.deriv_abs((0.0, 0.0)).is_err());
        let f = ConformalMap::Affine {
            a: (0.0, 0.0),
            b: (0.0, 0.0),
        };
        assert!(f.deriv_abs((1.0, 1.0)).is_err());
    }
}
