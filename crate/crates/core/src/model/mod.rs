//! Foundational value types shared by every other module: time grids,
//! Brownian paths, empirical measures and the seed policy.

mod brownian;
mod grid;
mod measure;
mod seed;

pub use brownian::{sample_brownian, BrownianPath};
pub use grid::{make_time_grid, TimeGrid};
pub use measure::{measure_moments, EmpiricalMeasure, MeasureView, Moment};
pub use seed::{NoiseStream, SeedPolicy, StreamRole};
