//! Toolkit for checking whether a region bounded by cylinders of real
//! algebraic hypersurfaces is a real algebraic region (RA-region), for
//! classifying its boundary points, for building the associated real
//! algebraic manifold with its moment-map-like projection, and for
//! extracting Reeb digraphs of coordinate projections.
//!
//! All verification is numerical and restricted to a user-supplied bounding
//! box; verdicts are "certified within box", never global proofs.

pub mod decomposition;
pub mod geometry;
pub mod momentmap;
pub mod poly;
pub mod problem;
pub mod reeb;
pub mod region;
pub mod report;

pub use poly::{Polynomial, Rational, VarSet};
pub use report::{ConditionReport, Overall, Verdict};
