//! Linear-programming and minimum-cost-flow kernels.

mod flow;
mod lp;

pub use flow::{
    max_weight_transport, mcf_assign, transport_solve, Assignment, FlowNetwork, TransportPlan,
    TransportProblem, BALANCE_SLACK,
};

pub use lp::{lp_solve, lp_solve_warm, LinearProgram, LpResult, LpStatus, Relation, Row};
