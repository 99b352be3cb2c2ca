//! Electro-thermal simulation of passive RRAM crossbar arrays.
//!
//! The pipeline runs bottom-up:
//! * [`geometry`] voxelizes a crossbar inside a low-conductivity thermal house;
//! * [`field_solver`] solves current continuity and the heat equation on it;
//! * [`extraction`] turns single-cell excitations into thermal resistances
//!   and a thermal coupling matrix;
//! * [`thermal_network`] evaluates the compact coupled network and emits it
//!   as a circuit-simulator subcircuit;
//! * [`crossbar_circuit`] runs read/VMM inference with thermally accelerated
//!   conductance drift.

pub mod crossbar_circuit;
pub mod error;
pub mod extraction;
pub mod field_solver;
pub mod geometry;
pub mod thermal_network;
pub mod units;

pub use error::{Error, Result};
