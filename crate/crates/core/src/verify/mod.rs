//! Independent certification of synthesized controllers: worst-case
//! disturbances, robust feasibility audits and small-gain margins.

mod gain;
mod worst_case;

pub use gain::{compensator_gain, small_gain_margin, GainReport, Verdict};
pub use worst_case::{
    attack_coefficients, attack_matrix, box_worst_case, box_worst_case_oracle, check_robust_feasibility,
    worst_case_disturbance, FeasibilityAudit, WorstCaseResult,
};
