//! Simulation of simple hybrid forced mechanical systems.
//!
//! Continuous forced Lagrangian/Hamiltonian dynamics punctuated by impacts on
//! (possibly time-dependent) switching surfaces, with momentum-map tracking
//! across inelastic collisions, Routh reduction to shape coordinates, and
//! reconstruction of full trajectories from reduced ones.

pub mod classify;
pub mod config;
pub mod error;
pub mod exec;
pub mod guard;
pub mod linalg;
pub mod mech;
pub mod models;
pub mod ode;
pub mod reduced;
pub mod state;
pub mod symcheck;
pub mod symmetry;

pub use config::NumericsConfig;
pub use error::{Error, Result};
pub use exec::{
    integrate_arc, map_record_to_tangent, run_hybrid_flow, run_hybrid_flow_hamiltonian,
    ArcCrossing, FlowArc, FlowSide, HybridFlowRecord, ImpactEvent, Termination,
};
pub use guard::{
    apply_impact, newtonian_impact, newtonian_impact_momentum, Guard, HybridSystem, ImpactLaw,
    Transition,
};
pub use mech::MechanicalSystem;
pub use reduced::{reconstruct, run_reduced_hybrid_flow, ReducedFlowRecord, ReducedImpactEvent};
pub use state::{CotangentState, StateDerivative, TangentState};
pub use symmetry::{
    momentum_map, routh_reduce, CyclicStructure, MomentumValue, ReducedSystem,
};
