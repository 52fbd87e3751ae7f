//! Continuous-time averaged plant: the simplified converter model used by
//! the safety filter, the fixed-step integrator, and the full network with
//! both grid variants and fault injection.

mod model;
mod network;

pub use model::{rk4_step, NonStationaryState, SimplifiedModel, StationaryState};
pub use network::{
    gfl_grid_step, sm_grid_derivative, FaultMode, GflGridState, GridKind, Plant, PlantInputs,
    PlantParams, SmGridState,
};
