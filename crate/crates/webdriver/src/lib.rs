//! Live-page driver speaking the W3C WebDriver protocol.
//!
//! [`WebDriverSession`] implements [`demodocus_core::crawler::PageDriver`]
//! with six commands: New Session, Navigate To, Execute Script, Element
//! Click, Perform Actions and Delete Session. Page content and interactive
//! targets are read by injected scripts (see [`scripts`]).

pub mod codec;
#[cfg(feature = "mock")]
pub mod mock;
pub mod scripts;
mod session;

pub use codec::{Command, Response, WireError};
pub use session::{resolve_endpoint, LiveTarget, SessionOptions, Timeouts, WebDriverError, WebDriverSession, ENDPOINT_ENV};
