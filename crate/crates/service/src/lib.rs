//! Session service for the negotiation engine: per-session storage, headless
//! simulation and replay, and the HTTP + event-stream API.

pub mod headless;
pub mod server;
pub mod store;
