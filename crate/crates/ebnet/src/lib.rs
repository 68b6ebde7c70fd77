//! Expert binary convolution networks.
//!
//! A self-contained toolkit for training and running binary neural networks
//! whose convolutions select one data-specific expert filter bank per input:
//!
//! - [`bitcore`]: bit-plane packed sign tensors and XNOR/popcount kernels,
//!   plus the float reference convolution used as their correctness oracle.
//! - [`graph`]: a small f64 layer graph with straight-through estimators,
//!   expert binary convolutions, double-skip binary blocks and the standard
//!   BN/PReLU/pool/linear plumbing.
//! - [`arch`]: the `N0N1N2N3-E-G0:G1:G2:G3` architecture notation, network
//!   builder, BOP/FLOP/size cost model and coordinate-wise search driver.
//! - [`trainer`]: the four-step optimization policy, Adam, learning-rate
//!   schedule, evaluation and expert-utilization reporting.
//! - [`data`]: CIFAR-10 binary batches, MNIST idx files and image folders.
//! - [`cli`]: the checkpoint format and the `ebnet` command-line surface.

pub mod arch;
pub mod bitcore;
pub mod cli;
pub mod data;
pub mod error;
pub mod graph;
pub mod trainer;

pub use error::{Error, Result};
