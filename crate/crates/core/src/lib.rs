//! Core data model, prompt rendering, parsing, metrics and rewards for
//! multi-strategy emotional support response generation.
//!
//! This crate is `no_std` (with `alloc`). File IO, network backends and the
//! command line live in the `multistrat` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod backend;
pub mod corpus;
pub mod instances;
pub mod metrics;
pub mod orchestrate;
pub mod parse;
pub mod prompts;
pub mod reasoning;
pub mod reward;
pub mod selfplay;
pub mod strategy;

pub use strategy::StrategyLabel;
