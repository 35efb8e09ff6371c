//! Numeric Wasserstein calculus: empirical and mollified projections,
//! finite-difference Lions derivatives and `W_2` distances.

mod mollifier;
mod projection;
mod wasserstein;

pub use mollifier::{mollified_projection, mollified_projection_tracked, MollifiedProjection, MollifierKernel};
pub use projection::{
    empirical_projection, numeric_lions_derivative, numeric_lions_second, FiniteDifferenceScheme, SecondLionsEstimate,
};
pub use wasserstein::{wasserstein2, wasserstein2_squared, MAX_ASSIGNMENT_SIZE};
