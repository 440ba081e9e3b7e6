//! Shipped test problems.

pub mod completion;
pub mod quadratic;

pub use completion::{
    completion_smoothness, generate_completion, CompletionInstance, CompletionObjective,
    CompletionParams, Scaling,
};
pub use quadratic::{
    make_quadratic, random_center, FiniteSumQuadratic, NoisyQuadratic, Quadratic, QuadraticInstance,
};
