//! Price of anarchy and price of stability for minimum-cost perfect
//! matchings under alpha-stability in metric graphs.
//!
//! The pipeline is: build a [`MetricInstance`], find the optimum, run the
//! flip-based [`run_greedy`] from it, and analyse the resulting
//! [`FlipTrace`] with a [`FlipForest`].

// `!(a < b)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flipforest;
pub mod greedy;
pub mod harness;
pub mod instances;
pub mod matchings;

pub use error::{Error, Result};
pub use flipforest::{closed_form_effect, AbstractTree, FlipForest, Shape};
pub use greedy::{check_trace_lemmas, run_greedy, FlipTrace};
pub use harness::{run_experiment, run_sweep, ExperimentRecord, Family, SweepConfig};
pub use instances::{Edge, MetricInstance, Vertex};
pub use matchings::{cost, exact_poa, exact_pos, min_cost_matching, PerfectMatching};
