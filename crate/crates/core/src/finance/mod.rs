//! Asian option pricing and kinetic obstacle problems.

mod asian;
mod obstacle;

pub use asian::{mc_asian_oracle, price_asian, AsianGrid, AsianModel, AsianPrice, Averaging, McEstimate, Payoff};
pub use obstacle::{
    energy_functional, hm1_lines, inactive, kolmogorov_boundary, obstacle_family, psor_obstacle_1d,
    solve_obstacle, stability_bound_check, toy_comparison, velocity_toy, w_norm, with_grid_obstacle,
    ComplementarityReport, EnergyReport, ObstacleProblem, ObstacleSolution, StabilityReport, StabilityRow,
    ToyComparison,
};
