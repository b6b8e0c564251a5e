//! Simulation and signal-processing toolkit for OFDM integrated sensing and
//! communication (ISAC) networks.
//!
//! The crate is organised around the three sensing functions of an ISAC
//! base station plus network-level management:
//!
//! * [`scene`] holds the ground-truth world and its scenario-file loader.
//! * [`phy`] synthesizes MIMO-OFDM channels and monostatic sensing echoes.
//! * [`estimation`] provides range-Doppler maps, MUSIC, CA-CFAR and sparse
//!   path extraction.
//! * [`ser`] reconstructs static scatterers from first-order NLoS paths.
//! * [`dts`] detects, estimates, tracks and classifies moving targets.
//! * [`omr`] estimates electromagnetic contrast under the Born approximation.
//! * [`netmgmt`] covers BS placement, on-off control and resource allocation.
//!
//! With the default `parallel` feature the inner loops (beam scans, operator
//! assembly, dictionary searches, Monte-Carlo trials) run on rayon; without it
//! the same code paths run sequentially and produce identical results.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dts;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod netmgmt;
pub mod omr;
pub mod par;
pub mod phy;
pub mod rng;
pub mod scene;
pub mod ser;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Vacuum permittivity, F/m.
pub const VACUUM_PERMITTIVITY: f64 = 8.854187817e-12;
