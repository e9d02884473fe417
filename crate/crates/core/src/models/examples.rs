//! Closed-form two-parameter examples with analytic Jacobians.

use nalgebra::DMatrix;

use crate::error::Error;
use crate::model::{ModelOutputSpec, ParametricModel};

/// f(θ) = exp(θ1 + θ2). Only the sum is identifiable.
pub fn example1() -> ParametricModel {
    ParametricModel::new("example1", 2, ModelOutputSpec::scalar("f"), |t| Ok(vec![(t[0] + t[1]).exp()]))
        .with_jacobian(|t| {
            let e = (t[0] + t[1]).exp();
            Ok(DMatrix::from_row_slice(1, 2, &[e, e]))
        })
}

/// f(θ) = exp(θ1·θ2). Only the product is identifiable.
pub fn example2() -> ParametricModel {
    ParametricModel::new("example2", 2, ModelOutputSpec::scalar("f"), |t| Ok(vec![(t[0] * t[1]).exp()]))
        .with_jacobian(|t| {
            let e = (t[0] * t[1]).exp();
            Ok(DMatrix::from_row_slice(1, 2, &[t[1] * e, t[0] * e]))
        })
}

/// f(θ) = (θ1 + ln(1 + θ2), θ1 + θ2), defined for θ2 > −1.
pub fn example3() -> ParametricModel {
    let spec = ModelOutputSpec::vector(vec!["f1".into(), "f2".into()]).expect("two labels");
    ParametricModel::new("example3", 2, spec, |t| {
        if t[1] <= -1.0 {
            return Err(Error::NonFinite(format!("log(1 + {}) undefined", t[1])));
        }
        Ok(vec![t[0] + t[1].ln_1p(), t[0] + t[1]])
    })
    .with_jacobian(|t| {
        if t[1] <= -1.0 {
            return Err(Error::NonFinite(format!("log(1 + {}) undefined", t[1])));
        }
        Ok(DMatrix::from_row_slice(2, 2, &[1.0, 1.0 / (1.0 + t[1]), 1.0, 1.0]))
    })
}
