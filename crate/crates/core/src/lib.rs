//! Opinion dynamics on influence networks and optimal control of the
//! ferment level: threshold, sigmoid and max-min formulations, control-node
//! selection and turnpike diagnostics.

pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod maxmin;
pub mod ocp;
pub mod psi;
pub mod selection;
pub mod selfcheck;
pub mod solver;
pub mod turnpike;

pub use dynamics::{InfluenceModel, Trajectory};
pub use error::{FermentError, Result};
pub use graph::{GraphFamily, GraphSpec, InfluenceGraph};
pub use psi::Sigmoid;
