//! Diagonalization of symmetric polynomial matrices and sums-of-squares
//! certificates for positive semidefiniteness.

pub mod bench;
pub mod cli;
pub mod error;
pub mod gram;
pub mod lm;
pub mod poly;
pub mod polymat;
pub mod schmudgen;
pub mod sos;

pub use error::{Error, Result};
pub use poly::Polynomial;
pub use polymat::PolyMatrix;
pub use schmudgen::Diagonalization;
pub use sos::{Certificate, Domain};
