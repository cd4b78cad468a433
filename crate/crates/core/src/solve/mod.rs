//! Optimisation kernel: the trip-vehicle assignment and a simplex LP solver.

mod assignment;
mod brute;
pub mod lp;

pub use assignment::{
    edge_cost, optimal_score, solve_assignment, Assignment, AssignmentProblem, Objective, SolveError, SCORE_SCALE,
};
pub use brute::{brute_force_assignment, MAX_REQUESTS, MAX_VEHICLES};
pub use lp::{solve_lp, Constraint, LinearProgram, LpError, LpOutcome, Relation};
