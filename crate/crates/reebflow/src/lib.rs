//! Contact forms on 3-manifold charts and the dynamics that certify them:
//! model solid-torus structures, tight Dehn-surgery planning, branched-cover
//! pullbacks with contact verification, and Reeb-flow orbit analysis.
//!
//! The crate is organized around six pieces:
//!
//! * [`expr`], [`chart`], [`form`] — exterior calculus on coordinate charts:
//!   scalar fields with exact first and second derivatives, one-forms,
//!   `d`, wedge, pullback, contact checks, and pointwise Reeb extraction.
//! * [`models`] — the model solid-torus family, the standard transverse
//!   tube, and the three-torus example, with their closed-form slope data.
//! * [`surgery`] — integer/rational Dehn-surgery arithmetic, the tight
//!   surgery planner, gluing verification, and lens-space invariants.
//! * [`cover`] — branched-covering maps, the integrable and equivariant
//!   pullback constructions, bump perturbations, and cover homology.
//! * [`dynamics`] — Reeb-flow integration, Poincare sections, periodic
//!   orbits, Floquet classification, rotation numbers, and the orbit
//!   hypothesis report.
//! * [`report`] — run configs, machine-readable verification reports, and
//!   the dispatch behind the CLI.
//!
//! All value types are immutable after construction and safe to share
//! across threads; grid sweeps parallelize internally.

pub mod chart;
pub mod cover;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod form;
pub mod jet;
pub mod models;
pub mod registry;
pub mod report;
pub mod surgery;

pub use chart::{Chart, ChartMap};
pub use error::{CoverError, DynError, EvalError, FormError, ModelError, SurgeryError};
pub use expr::ScalarField;
pub use form::{contact_check, ContactReport, GridSpec, OneForm, TwoFormValue};
