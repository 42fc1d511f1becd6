//! Safety-critical autonomy stack for a quadruped robot with a roller arm
//! inspecting the layers of a distillation column.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: tray, manway and base-state types shared by everything else.
//! - [`qp`]: dense convex QP solver (operator splitting + polishing) and a
//!   branch-and-bound driver for small mixed-integer QPs.
//! - [`safety`]: reduced-order CBF safety filter for base velocity commands.
//! - [`footstep`]: quasi-static gait, Raibert targets, foothold replanning and
//!   swing trajectories.
//! - [`body`]: inverse-dynamics QP, impedance and gravity-compensation
//!   torque laws over a pluggable dynamics model.
//! - [`contact`]: contact-sequence MIQP for intermediate motions, trajectory
//!   stitching and the CoM guard.
//! - [`perception`]: simulated manway-vertex measurements, frame transform,
//!   averaging and validation.
//! - [`mission`]: the inspection state machine.
//! - [`sim`]: deterministic tick-loop simulator, trace writer and invariant
//!   checker.
//!
//! Batch workloads (closed-loop rollouts, Monte Carlo, MIQP enumeration) run
//! through [`exec::Execution`], which uses rayon when the `parallel` feature
//! is enabled and falls back to a sequential loop otherwise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod body;
pub mod contact;
pub mod error;
pub mod exec;
pub mod footstep;
pub mod geometry;
pub mod mission;
pub mod perception;
pub mod qp;
pub mod safety;
pub mod sim;

pub use error::{Error, Result};
pub use exec::Execution;
