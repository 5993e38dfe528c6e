//! Neumann-Laplacian eigenpairs along one-parameter domain homotopies.
//!
//! The pipeline is: [`geometry`] describes a D4 fundamental domain at a
//! parameter `t`, [`mesh`] triangulates it (or pushes a reference mesh through
//! the homotopy), [`fem`] assembles the P1 pencil, [`eigsolve`] finds the
//! lowest eigenpairs, and [`track`] threads the spectra into trajectories and
//! classifies close approaches. [`oracle`] supplies closed-form spectra and
//! perturbation formulas; [`report`] writes CSV, SVG and manifests.

// `!(x > y)` comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod eigsolve;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod mesh;
pub mod oracle;
pub mod report;
pub mod sparse;
pub mod track;

pub use config::{GridSpec, RunConfig};
pub use eigsolve::{relative_gap, smallest_eigenpairs, Spectrum, SpectrumMeta};
pub use error::{Error, Result};
pub use fem::{assemble, residual, Pencil};
pub use geometry::{
    bc_for_family, fundamental_domain, BoundaryTag, DomainSpec, HomotopyMap, PlanePoint, Shape,
    SymmetryFamily,
};
pub use mesh::{push_forward, sample_field, triangulate, Mesh, MeshQuality, Provenance};
pub use oracle::{disc_modes, square_modes, ModeLabel, SquareOrientation};
pub use track::{
    build_correspondence, match_modes, refine_event, sweep, Event, EventKind, SweepOptions,
    TrajectorySet,
};
pub use report::{emit_summary, line_restriction, nodal_band, renormalization_ratios, RunManifest};
