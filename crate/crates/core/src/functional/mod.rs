//! Test functionals `u(x, mu)` with closed-form derivatives and the Itô random
//! fields built from them.

mod catalogue;
mod field;
mod inner;

pub use catalogue::{
    eval_functional, lions_derivative, lions_hessian_v, lions_second, space_derivatives, MeasureFunctional, Prepared,
    SpaceDerivatives,
};
pub use field::{
    field_value, make_ito_field, FieldComponent, FieldKind, FieldTrajectory, ItoRandomField, Multiplier, NoiseMode,
};
pub(crate) use inner::Univariate;
pub use inner::{InnerFunction, Monomial, MAX_DIM};

#[cfg(test)]
pub(crate) mod tests;
