//! Optimum-preserving variable orders and linearization for QUBO problems.
//!
//! The pipeline is: extract an order whose implications `x_i = 1 ⇒ x_j = 1`
//! keep the minimum ([`ordering`]), then move every positive coupling along
//! an ordered pair onto the diagonal ([`linearize`]). The result has the
//! same minimum and minimizers and fewer quadratic terms.
//!
//! Knapsack encoders ([`mkp`]), instance generators ([`synth`]), solvers
//! ([`solver`]) and experiment harnesses ([`experiments`]) build on these.

pub mod error;
pub mod experiments;
pub mod linearize;
pub mod mkp;
pub mod ordering;
pub mod qubo;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use linearize::{extract_and_linearize, linearize, penalty_value, LinearizationReport};
pub use ordering::{
    extract_order_dense, extract_order_sparse, in_ordered_subspace, score_pair, verify_order,
    OrderDag,
};
pub use qubo::{Assignment, QuboMatrix};
