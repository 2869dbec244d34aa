pub mod error;
pub mod linreg;
pub mod model;
pub mod power;
pub mod profile;
pub mod sched;
pub mod sim;
pub mod transfer;

pub use error::{Error, ErrorClass, Result};
pub use model::{load_fleet, FileRef, Fleet, MachineSpec, Sharing, TaskRecord, TaskSpec};
pub use profile::{FunctionProfile, Prediction, ProfileStore};
