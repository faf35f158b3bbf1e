//! Supervised learners built in-crate: gradient-boosted trees, linear and
//! logistic regression, and the grid search that tunes them.

pub mod gbt;
pub mod grid;
pub mod linear;

pub use gbt::{FitData, GbtModel, GbtParams, Task, Tree, TreeNode};
pub use grid::{
    tune_regression_against, tune_slearner_tol, tune_supervised, tune_tlearner_tol, HyperGrid,
    TunedFit,
};
pub use linear::{fit_linear, fit_logistic, LinearModel, Link};
