//! Perception-annotated theory-of-mind benchmarks and the perception-first
//! answering pipeline.
//!
//! * [`world`] replays story events and derives who perceived each sentence.
//! * [`storygen`] and [`convo`] generate annotated stories and conversations.
//! * [`pipeline`] holds the answering methods.
//! * [`backend`] abstracts the model behind them.
//! * [`eval`] grades answers and aggregates scores.

pub mod backend;
pub mod convo;
pub mod eval;
pub mod item;
pub mod pipeline;
pub mod storygen;
pub mod world;
