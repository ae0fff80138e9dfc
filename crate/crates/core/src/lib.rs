//! Finite, checkable machinery for building continuous selections of
//! set-valued mappings by extending them stepwise over the skeletons of
//! nerves of covers.
//!
//! Everything here operates at desk scale: domains are finite grids,
//! covers are finite families of point sets, and mapping values are
//! concrete regions of Euclidean space.  Each construction step is paired
//! with a sampled verification of the invariant it is supposed to
//! establish, so a run either produces a selection together with an audit
//! trail, or fails loudly at the step whose hypothesis broke.
//!
//! Module map:
//!
//! * [`complex`] - abstract simplicial complexes, skeleta, simplicial maps.
//! * [`realization`] - barycentric points, carriers, stars, piecewise-linear
//!   maps on dyadic subdivision lattices.
//! * [`covers`] - finite covers of grid domains, nerves, partitions of
//!   unity, canonical maps, refinements.
//! * [`regions`] - geometric regions in Euclidean space and cellwise
//!   set-valued mappings.
//! * [`fillers`] - sphere-to-ball extension oracles and derived fillers.
//! * [`engine`] - skeletal selections: the zero-skeletal seed, transfer,
//!   lift, assembly, and local selection.
//! * [`moduli`] - scale moduli, their recursions, and the outer drivers
//!   (Cauchy refinement, near-selection, epsilon-selection, exact
//!   selection).
//! * [`report`] - machine-readable audit records shared by the drivers.
//! * [`scenarios`] - built-in demonstration instances used by the test
//!   suite and the command-line interface.

pub mod complex;
pub mod covers;
pub mod engine;
pub mod fillers;
pub mod geom;
pub mod moduli;
pub mod realization;
pub mod regions;
pub mod report;
pub mod scenarios;
pub mod select;

pub use complex::{Simplex, SimplicialComplex, SimplicialMap, VertexId};
