//! Numerical laboratory for p-capacities of domains perforated along a sphere.
//!
//! The library is organized around a single setup: small cavities of equal
//! p-capacity are anchored to the unit sphere at eps-separated points, and the
//! p-equilibrium potential of the resulting cavity cloud is studied inside a
//! ball B(0,R). Closed-form radial quantities live in [`analytic`], anchor
//! sets and cavity clouds in [`geometry`], graded triangulations in [`mesh`],
//! the p-Dirichlet energy minimizer in [`solver`], explicit trial fields in
//! [`ansatz`], and the experiment harnesses in [`experiments`].

pub mod analytic;
pub mod ansatz;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod solver;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("mesh error: {0}")]
    Mesh(String),
    #[error("solver error: {0}")]
    Solve(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error ({path}): {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
