//! Mass profiles m: R² → [0, ∞). A profile can be a constant, a formula in the
//! coordinates, or the pushforward of another profile under a conformal map
//! (m̃(w) = |f'(f⁻¹(w))|⁻¹ · m(f⁻¹(w)), which is what makes the massive
//! Brownian loop measure transform covariantly).

use crate::conformal::{ConformalMap, Point};
use crate::error::{Error, Result};
use crate::expr::Expr;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub enum MassField {
    Constant(f64),
    Formula { src: String, expr: Expr },
    Transported {
        inner: Box<MassField>,
        map: ConformalMap,
    },
}

impl MassField {
    pub fn constant(m: f64) -> Result<Self> {
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "mass must be finite and >= 0, got {m}"
            )));
        }
        Ok(MassField::Constant(m))
    }

    pub fn zero() -> Self {
        MassField::Constant(0.0)
    }

    /// Parse `"0.5"` or a formula like `"exp(-x^2-y^2)"`.
    pub fn parse(src: &str) -> Result<Self> {
        if let Ok(v) = src.trim().parse::<f64>() {
            return MassField::constant(v);
        }
        Ok(MassField::Formula {
            src: src.to_owned(),
            expr: Expr::parse(src)?,
        })
    }

    /// Pushforward under a conformal map: the returned profile lives on the
    /// image and pulls evaluation points back through the inverse branch.
    pub fn transported(self, map: ConformalMap) -> Self {
        MassField::Transported {
            inner: Box::new(self),
            map,
        }
    }

    pub fn eval(&self, p: Point) -> Result<f64> {
        match self {
            MassField::Constant(m) => Ok(*m),
            MassField::Formula { expr, src } => {
                let v = expr.eval(p.0, p.1);
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "mass formula '{src}' evaluates to {v} at ({}, {}); must be finite and >= 0",
                        p.0, p.1
                    )));
                }
                Ok(v)
            }
            MassField::Transported { inner, map } => {
                let z = map.invert(p)?;
                Ok(inner.eval(z)? / map.deriv_abs(z)?)
            }
        }
    }

    /// m²(p), the rate that actually enters killing functionals.
    pub fn sq(&self, p: Point) -> Result<f64> {
        let m = self.eval(p)?;
        Ok(m * m)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, MassField::Constant(m) if *m == 0.0)
    }
}

impl Serialize for MassField {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        // configs round-trip constants/formulas as plain strings; transported
        // profiles are runtime objects and serialize structurally
        match self {
            MassField::Constant(m) => s.serialize_str(&format!("{m}")),
            MassField::Formula { src, .. } => s.serialize_str(src),
            MassField::Transported { .. } => Err(serde::ser::Error::custom(
                "transported mass profiles are not serializable; store the base profile and map",
            )),
        }
    }
}

impl<'de> Deserialize<'de> for MassField {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        MassField::parse(&s).map_err(serde::de::Error::custom)
    }
}
