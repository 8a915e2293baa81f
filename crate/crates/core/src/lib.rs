//! Collaborative-driving simulation library.
//!
//! - [`rfmodel`]: cone antennas, free-space path gain, SINR and capacity.
//! - [`beamalign`]: DSRC-assisted two-step beam alignment and the exhaustive
//!   search baseline.
//! - [`formation`]: group formation protocol over a lossy simulated network.
//! - [`nncore`]: dense networks, backpropagation, Adam and gradient checks.
//! - [`gnnbeam`]: GNN beamforming, training and evaluation.
//! - [`baselines`]: WMMSE, brute-force oracle and random decisions.
//! - [`sim`]: scenario engine, configuration and CSV / plot output.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod beamalign;
pub mod formation;
pub mod gnnbeam;
pub mod nncore;
pub mod rfmodel;
pub mod sim;
