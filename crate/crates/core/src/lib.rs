//! Numerical methods for the bosonic Fokker–Planck equation in velocity space.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod model;
pub mod oracle2d;
pub mod quad;
pub mod radial;
pub mod solver1d;
pub mod special;
pub mod stepping;
pub mod transform;
pub mod tridiag;

pub use error::{Error, Result};
pub use harness::{ConvergenceReport, ConvergenceRow, InitialDatum, Preset, PresetId};
pub use model::{CriticalMass, MinimizerSpec, ModelParams};
pub use radial::RadialState;
pub use stepping::{Evolution, Integrator, Observer, SolverConfig, StepReport};
pub use transform::{Grid, Profile, ProfileKind};
