//! Capacitated k-median with `(1+ε)` capacity violation.
//!
//! The solver follows an LP-rounding pipeline: the basic relaxation strengthened
//! by configuration constraints on selected facility sets, a three-phase
//! clustering of clients, local solutions per cluster, dependent rounding over an
//! integral polytope, facility removal, and a final b-matching assignment.
//!
//! ```
//! use capkm::{instance::gen_gap_instance, pipeline::{solve, SolveConfig}};
//!
//! let inst = gen_gap_instance(3, 1.0).unwrap();
//! let report = solve(&inst, &SolveConfig::new(1.0)).unwrap();
//! assert!(report.solution.open.len() <= inst.k());
//! ```

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod clustering;
pub mod error;
pub mod instance;
pub mod localsol;
pub mod optcore;
pub mod oracle;
pub mod pipeline;
pub mod relaxation;
pub mod rounding;
pub mod tol;

pub use error::{Error, ParseError, Result};
pub use instance::Instance;

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident) => {
            #[doc = include_str!(concat!("../../../book/src/", stringify!($name), ".md"))]
            mod $name {}
        };
    }
    chapter!(introduction);
    chapter!(instances);
    chapter!(solving);
    chapter!(oracle);
    chapter!(kernels);
    chapter!(command_line);
}
