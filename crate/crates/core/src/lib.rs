//! Invariant SU(3)- and G2-structures on coframe algebras: exterior algebra
//! kernels, stable forms, intrinsic torsion, the Hitchin flow and a
//! multistart search for coupled structures.

pub mod algebra;
pub mod error;
pub mod flow;
pub mod forms;
pub mod g2;
pub mod io;
pub(crate) mod linalg;
pub mod ode;
pub(crate) mod optim;
pub mod search;
pub mod stable;
pub mod torsion;

pub use algebra::{CoframeAlgebra, DiffTerm};
pub use error::{Error, Result};
pub use flow::{FlowState, FlowTrace, RestrictedFlowState, RestrictedTrace, Termination};
pub use forms::{Endomorphism, KForm, MetricData, Tolerance};
pub use g2::{G2Class, G2Torsion, Profile};
pub use search::{SearchProblem, SearchResult};
pub use stable::Su3Structure;
pub use torsion::{CoupledReport, TorsionClass, TorsionForms};
