//! Deterministic finite element solvers.

mod bar;
mod mesh;
mod plane_stress;

pub use bar::{solve_bar, BarProblem};
pub use mesh::{bar_mesh, plate_with_hole, Mesh, PlateGeometry};
pub use plane_stress::{
    solve_plane_stress_le, solve_plane_stress_nh, unit_element_stiffness, LinearElasticSolver, NeoHookeanSolver,
    NewtonSettings, PlaneStressProblem,
};
pub(crate) use plane_stress::shape;
