//! Streaming inference server for cardiac MR imaging pipelines.
//!
//! A client streams k-space readouts or images over ICSP ([`wire`]). The
//! server assembles a gadget chain from a configuration document
//! ([`chain`]), buffers and triggers reconstruction per slice ([`stages`],
//! [`recon`]), hands image groups to an out-of-process model worker
//! ([`bridge`]) and turns model outputs into biomarker reports ([`cmr`]).
//! [`sim`] is the scanner-side counterpart used for testing.

pub mod bridge;
pub mod chain;
pub mod cmr;
pub mod recon;
pub mod sim;
pub mod stages;
pub mod wire;

#[cfg(test)]
mod testutil;
