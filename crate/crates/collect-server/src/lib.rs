//! Collection service for live PIN-entry sessions. The browser collector
//! posts sensor batches and key events; each session is persisted as an
//! append-only file that the ingest module reads directly.

pub mod http;
pub mod store;

pub use http::{router, serve, ServeError, ServerConfig};
pub use store::{Session, SessionState, SessionStore, StoreError};
