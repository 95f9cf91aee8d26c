//! Domain types shared by every subsystem.

mod onion;
mod timestamp;
mod uri;

pub use onion::{has_onion_suffix, validate_onion_address, OnionAddress, OnionError, OnionVersion};
pub use timestamp::{Timestamp14, TimestampError};
pub use uri::{canonicalize_uri, CanonicalUri, Host, Scheme, UriError};
