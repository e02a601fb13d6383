pub mod base;
pub mod cocycle;
pub mod domination;
pub mod error;
pub mod linalg;
pub mod path;
pub mod perturb;
pub mod rotation;
pub mod stability;
pub mod su11;

pub use base::{BasePoint, InvariantMeasure, PeriodicOrbit, RotationAngle, SymbolicSystem, SystemKind};
pub use cocycle::{Fibered, Generator, MatrixCocycle, PatchMode};
pub use domination::{domination_report, finest_splitting, Bundle, SplittingReport, Verdict};
pub use error::{Error, Result};
pub use linalg::Mat;
pub use path::{CocyclePath, RotationField};
pub use perturb::{
    elliptic_search, equalize_moduli, joint_elliptic_search, monotone_rotation_family, perturb_to_singular_values,
    simple_spectrum_search, RotationFamilySpec,
};
pub use rotation::{modelock_probe, path_rotation_number, relative_rotation_number, RotationEnclosure, RotationOptions};
pub use stability::{conjugate_projective_pair, FiberedConjugacy};
pub use su11::{ak_consistency_check, ak_delta_trace, ak_rotation_number, tau, to_su11, SU11Matrix};
