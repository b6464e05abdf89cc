//! Spec documents and the component expression language.

pub mod expr;
pub mod spec;
pub mod validate;

pub use expr::{parse_expression, Expr, ParseError};
pub use spec::{parse_manifold_spec, ManifoldSpec, SpecError};
pub use validate::{validate_spec, ValidationReport};
