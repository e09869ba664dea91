//! Layered forensic artifact analysis.
//!
//! A [`engine::Session`] holds an artifact tree rooted at one upload. Each
//! artifact is parsed by the identifier registered for its detected type,
//! which yields facts and child artifacts; children are analyzed in turn.
//! Facts feed a small Datalog engine whose suggestion rules propose the next
//! analysis step, and record what the analyst has already looked at.

pub mod config;
pub mod engine;
pub mod formats;
pub mod inference;
pub mod llm;
pub mod payload;
pub mod store;
pub mod text;
