//! Encrypted, position-anchored pattern matching for inspection middleboxes.
//!
//! A gateway holding a [`MasterKey`](crypto::MasterKey) encrypts every payload
//! byte against its position ([`gateway`]) and compiles a ruleset into an
//! encrypted pattern database plus a two-level encrypted prefix filter
//! ([`compile`]). The middlebox ([`engine`]) sees only ciphertexts: it filters
//! candidate positions, queries the pattern trapdoors at those positions, and
//! learns a rule's action only when the packet carries the rule's bytes at an
//! allowed position.

pub mod bench;
mod codec;
pub mod compile;
pub mod config;
pub mod corpus;
pub mod crypto;
pub mod engine;
pub mod error;
pub mod gateway;
pub mod oracle;
pub mod rules;
pub mod service;
pub mod wire;

pub use error::{Error, Result};
