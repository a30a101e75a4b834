//! Blocking HTTP clients: the chat-completions runner that fills the raw
//! response log, and the embedding sidecar provider.

pub mod chat;
pub mod sidecar;

pub use chat::{run_plan, RunOptions, RunSummary};
pub use sidecar::SidecarEmbedder;
