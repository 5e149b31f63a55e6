//! Exact-arithmetic toolkit for finite windows of the Bruhat-Tits tree of GL2
//! over a local field.
//!
//! Everything here is integer-exact: no floats, no approximate residues. The
//! library reconstructs, at a chosen finite radius, the combinatorics that
//! drive harmonic-cochain cohomology on the tree and the Van der Put transform
//! of formal units, and it emits self-verifying JSON certificates for the
//! closed-form answers.
//!
//! Module map:
//! - [`localfield`]: the two scalar backends (p-adic rationals, rational
//!   functions over a finite field) behind one exact interface.
//! - [`intlin`]: dense integer linear algebra (Smith form, kernels, solvers).
//! - [`bttree`]: canonical lattice-class labels, distances, finite windows.
//! - [`groups`]: GL2 subgroups, finite quotients, coset and generator data.
//! - [`cochains`]: cochain vectors, the edge-to-vertex sum, orbit invariants.
//! - [`vdput`]: ends, geodesic pairings, transforms of formal units, cocycles.
//! - [`oracle`]: brute-force finite group cohomology used as a cross-check.
//! - [`verify`]: certificate builders and the certificate file format.

pub mod bttree;
pub mod cochains;
pub mod groups;
pub mod intlin;
pub mod localfield;
pub mod oracle;
pub mod vdput;
pub mod verify;
