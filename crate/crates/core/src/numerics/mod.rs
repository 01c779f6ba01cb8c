//! Linear-algebra kernels and random variate samplers.

mod rng;
mod sampling;
mod sym;

pub use rng::RngStream;
pub use sampling::{
    draw_chisq, draw_mvn, draw_mvn_factored, draw_scaled_inv_chisq, standard_normal, standard_normal_vector,
};
pub use sym::{cholesky, conditional_by_sweep, sweep, Conditional, SymMatrix, PSD_TOL};
