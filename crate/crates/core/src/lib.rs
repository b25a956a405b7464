//! Numerical laboratory for quantum sampling algorithms.
//!
//! Builds frustration-free parent Hamiltonians of detailed-balance Markov
//! chains (Glauber dynamics on the Ising chain, Metropolis–Hastings on
//! weighted independent sets, uniform-proposal search) and simulates
//! adiabatic preparation of the Gibbs states they stabilize: spectral gaps,
//! adiabatic metric and path lengths, time-dependent Schrödinger evolution,
//! fidelities, and state-preparation-time scaling.
//!
//! Module map:
//! - [`lattice`]: configuration spaces, classical Hamiltonians, Gibbs vectors.
//! - [`markov`]: detailed-balance generators, spectra, mixing diagnostics.
//! - [`parent`]: the similarity transform turning a generator into a parent
//!   Hamiltonian, gap utilities, symmetry-sector projection.
//! - [`adiabatic`]: metric tensor, schedules, path lengths, TDSE integration.
//! - [`freefermion`]: exact solution of the Ising-chain parent Hamiltonian.
//! - [`indepset`]: the constrained chain model in the zero-momentum sector.
//! - [`stargraph`]: the star-graph model in the permutation-symmetric sector.
//! - [`search`]: the unstructured-search family and its two-level reduction.
//! - [`fit`]: least-squares power-law and exponential fits.
//! - [`linalg`]: sparse matrices, Lanczos, deflated CG, Krylov propagation.

pub mod adiabatic;
pub mod fit;
pub mod freefermion;
pub mod indepset;
pub mod lattice;
pub mod linalg;
pub mod markov;
pub mod parent;
pub mod search;
pub mod stargraph;
