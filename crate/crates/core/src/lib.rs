//! Learning the peridynamic horizon with a physics-informed network.
// `!(x > 0.0)` deliberately rejects NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod datagen;
pub mod diagnostics;
pub mod experiment;
pub mod kernels;
pub mod network;
pub mod nonlocal;
pub mod parallel;
pub mod plot;
pub mod training;
