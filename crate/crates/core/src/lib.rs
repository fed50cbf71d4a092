//! VTOL maneuver regulation built on a feedback-linearizing tracking
//! controller.
//!
//! The crate provides the reduced position/yaw model ([`dynamics`]),
//! reference maneuvers ([`maneuver`]), the tracking law and its exact
//! inversion ([`tracking`]), the projection-based regulation law
//! ([`regulation`]), the Lyapunov certificate that supplies the projection
//! metric ([`lyapunov`]) and a deterministic experiment harness
//! ([`harness`]).

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod lyapunov;
pub mod maneuver;
pub mod regulation;
pub mod tracking;

pub use dynamics::{ControlInput, DisturbanceInput, ReducedState, SaturationFlags, VehicleParams};
pub use error::{Error, Result};
pub use lyapunov::{certify, LyapunovCertificate};
pub use maneuver::{Maneuver, ManeuverSpec, ReferencePoint};
pub use regulation::{project, project_brute_force, regulation_control, ProjectionConfig, ProjectionState};
pub use tracking::{feedback_linearize, tracking_virtual_input, Gains, IntegratorState, VirtualInput};
