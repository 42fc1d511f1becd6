//! Full-body control: dynamics models, the inverse-dynamics QP, reference
//! integration, torque laws and transition trajectory playback.

pub mod composite;
pub mod fbc;
pub mod model;
pub mod trajectory;

pub use composite::{Limb, PlanarComposite};
pub use fbc::{
    desired_acceleration, fbc_qp_settings, friction_rows, ik_references, impedance_torque, integrate_reference,
    solve_fbc, transition_torque, ControllerWeights, FbcSolution, FbcStatus, IkTarget, ImpedanceGains,
};
pub use model::{ContactLayout, DynamicsModel, LinkParams, SlidingLeg, TwoLinkArm, GRAVITY};
pub use trajectory::{JointTrajectory, TrajectoryKnot};
