//! Deterministic and Monte Carlo solvers for the coupled three-species
//! (photon / electron / positron) linear Boltzmann transport system on
//! convex 3D domains, with an adjoint-based inverse treatment-planning
//! optimizer on top.
//!
//! The crate is organized around a small set of strategy families, each
//! behind a trait and selectable by name at runtime (see the `registry`
//! functions in [`geometry`], [`xs`] and [`source`]):
//!
//! * convex domain shapes (`ball`, `box`),
//! * collision kernel families (`zero`, `isotropic`, `screened`,
//!   `transfer`, `table`),
//! * volume / inflow source shapes (`constant`, `gaussian`,
//!   `per-region`, `boundary-patch`).
//!
//! Module map:
//!
//! * [`geometry`] — escape times, boundary hits, inflow/outflow classification
//! * [`grid`] — tensor phase-space grids, quadrature, fields, interpolation
//! * [`source`] — internal and boundary source families
//! * [`xs`] — cross sections, sub-criticality validation, collision operator
//! * [`transport`] — characteristic sweeps, lifts, traces, source iteration,
//!   adjoint solves
//! * [`timedep`] — operator-splitting time integration
//! * [`dose`] — flux-to-dose mapping and its adjoint
//! * [`planning`] — objectives, gradients, optimality systems, projected
//!   gradient refinement
//! * [`oracle`] — analog Monte Carlo dose, boundary-regularity probe,
//!   Green-identity checks
//! * [`config`] — scenario configuration (dotted key-value text format)

pub mod config;
pub mod dose;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod oracle;
pub mod planning;
pub mod quadrature;
pub mod source;
pub mod timedep;
pub mod transport;
pub mod vec3;
pub mod xs;

/// Number of transported species (photons, electrons, positrons).
pub const SPECIES: usize = 3;
