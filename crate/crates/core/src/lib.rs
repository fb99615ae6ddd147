//! Stochastic symmetrisation of neural networks along group homomorphisms.
//!
//! The crate is organised bottom-up:
//!
//! * [`stream`] and [`stochmap`]: seeded stochastic maps and their calculus;
//! * [`groups`] and [`equivariance`]: concrete groups, actions and coset bundles;
//! * [`symcore`]: the symmetrisation combinator, base-case and recursive `γ`,
//!   and the expectation operator;
//! * [`nn`]: an MLP with manual backprop, differentiable Gram-Schmidt and Adam;
//! * [`bench`]: the orthogonally-equivariant matrix-inversion benchmark;
//! * [`checks`]: property suites reused by the command line.

pub mod bench;
pub mod checks;
pub mod config;
pub mod equivariance;
pub mod error;
pub mod groups;
pub mod linalg;
pub mod nn;
pub mod space;
pub mod stochmap;
pub mod stream;
pub mod symcore;

pub use error::{Error, Result};
pub use space::{Point, Space};
pub use stochmap::{Distribution, StochasticMap};
pub use stream::RandomStream;
