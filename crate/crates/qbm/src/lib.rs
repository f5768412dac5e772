//! Dissipative dynamics of a harmonic oscillator coupled to an independent-oscillator
//! bath, treated entirely with classical linear phase-space methods.
//!
//! The crate is organised around one physical model: a system oscillator of mass `m`
//! and frequency `Ω` coupled bilinearly to a continuum of bath oscillators through a
//! spectral coupling density `g_ω²`, with the counter-term that makes the
//! coupling-complete Hamiltonian a sum of squares. Everything else is derived from
//! that model along two exactly equivalent routes:
//!
//! * [`propagator`] — discretize the bath ([`bath`]), build the full linear system
//!   and evolve it exactly through its normal modes (or a symplectic stepper).
//!   Gaussian and cat-state Wigner functions transport exactly under the resulting
//!   reduced phase-space channel ([`gaussian`]).
//! * [`langevin`] — integrate out the bath analytically, leaving a generalized
//!   Langevin equation with a memory kernel, an initial-condition slip term and a
//!   colored stochastic force ([`model`] supplies the kernel and noise statistics).
//!
//! [`master`] extracts the coefficients of the exact time-local (but time-dependent)
//! Fokker–Planck generator of the reduced Gaussian dynamics and verifies that they
//! do not depend on the initial state. [`cli`] wires the whole thing into a scenario
//! runner with JSON configs and CSV outputs.
//!
//! Units: the library is written for `m = Ω = ħ = k_B = 1` internally, but every
//! formula carries its dimensional factors through [`model::PhysicalParams`].

pub mod bath;
pub mod cli;
pub mod error;
pub mod gaussian;
pub mod langevin;
pub mod master;
pub mod model;
pub mod propagator;
pub mod quad;

pub use error::{Error, Result};
