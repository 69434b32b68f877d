//! Constraint engine for functions computed by hierarchical architectures.
//!
//! Given a rooted-tree or layered feedforward description of how a function
//! is composed from lower-arity pieces, this crate generates the algebraic
//! constraints (equalities among formal partial derivatives, strict
//! inequalities, and generic non-vanishing conditions) that every such
//! composition must satisfy, and verifies candidate functions against them:
//! exactly for polynomials, numerically via finite differences for other
//! closed-form smooth functions.
//!
//! The main modules follow the pipeline:
//!
//! * [`expr`] — exact sparse polynomials and the expression language;
//! * [`arch`] — architecture model (trees, networks) and structural queries;
//! * [`diffpoly`] — polynomials in formal derivative symbols;
//! * [`constraints`] — constraint generation (tree rules, elimination, presets);
//! * [`bounds`] — derivative-order bounds and constraint counts;
//! * [`checker`] — exact verification and weight-ratio recovery;
//! * [`numcheck`] — finite-difference verification for smooth functions;
//! * [`varieties`] — coefficient equations for bounded-degree polynomials;
//! * [`oracle`] — composition of architectures with concrete node functions;
//! * [`cli`] — the command-line surface.

pub mod arch;
pub mod bounds;
pub mod checker;
pub mod cli;
pub mod constraints;
pub mod diffpoly;
pub mod expr;
pub mod numcheck;
pub mod oracle;
pub mod varieties;

pub(crate) mod zerocheck;
