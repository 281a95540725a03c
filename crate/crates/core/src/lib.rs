//! Iteration invariants of isolated fixed points of Hamiltonian germs.
//!
//! The crate is organized bottom-up:
//!
//! * [`symplin`]: symplectic matrices, clustered spectra, admissible/good iterations.
//! * [`pathindex`]: mean index, Conley–Zehnder index and Maslov index of symplectic paths.
//! * [`hamflow`]: Hamiltonian germs, flows, monodromy, fixed points, actions, gap tables.
//! * [`genfun`]: generating functions of near-identity germs and their iterations.
//! * [`cubhom`]: Z₂ cubical relative homology and local Morse homology.
//! * [`locinv`]: local Floer homology and persistence under iteration.
//! * [`isolation`]: the discrete L¹ constant `c(k)` and periodic-point searches.
//! * [`corpus`]: the named germ registry used by the scenario runner.

pub mod corpus;
pub mod cubhom;
pub mod domain;
pub mod error;
pub mod genfun;
pub mod hamflow;
pub mod isolation;
pub mod locinv;
pub mod ode;
pub mod pathindex;
pub mod ranks;
pub mod symplin;

pub use error::{Error, Result};
pub use domain::BoxDomain;
pub use genfun::{GermMap, ScalarField};
pub use hamflow::{Degeneracy, FixedPointRecord, FnHamiltonian, Hamiltonian, HamiltonianGerm};
pub use locinv::{LocalFloer, PersistenceReport, Route};
pub use pathindex::SymplecticPath;
pub use ranks::GradedRanks;
pub use symplin::SymplecticMatrix;
