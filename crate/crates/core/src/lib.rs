//! Constructible exterior calculus on open regions of R^n, with a
//! Mayer-Vietoris cohomology engine verified against a brute-force cubical
//! homology oracle.
//!
//! The crate is organized around the pipeline:
//!
//! * [`expr`] — symbolic kernel: semialgebraic-core expressions with
//!   top-level logarithms, exact rational constants, differentiation,
//!   normalization, and semi-decided equality;
//! * [`geometry`] — ribbons and regions (finite unions of ribbons),
//!   intersections, the bounded rescale onto the unit cube, and explicit
//!   contraction homotopies;
//! * [`forms`] — zoned differential forms, the extended derivative, and
//!   pullback;
//! * [`fiber`] — the `omega = omega' + dt ^ omega''` decomposition,
//!   symbolic fiber antiderivatives, and the homotopy operators with their
//!   chain identity;
//! * [`oracle`] — rational cubical homology of rasterized regions with
//!   explicit cycle bases;
//! * [`integrate`] — quadrature of forms over simplices and chains, Stokes
//!   residuals, and period matrices;
//! * [`cohomology`] — partitions of unity, the Mayer-Vietoris splitting,
//!   primitives on cells, and the recursive Betti/representative engine.

pub mod cohomology;
pub mod corpus;
pub mod expr;
pub mod fiber;
pub mod forms;
pub mod geometry;
pub mod integrate;
pub mod oracle;
pub mod sample;

pub use expr::{ScalarExpr, SemiCondition, Zone};
pub use forms::{SmoothMap, ZonedForm};
pub use geometry::{Region, Ribbon};
