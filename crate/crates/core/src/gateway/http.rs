//! Shared blocking HTTP stack for provider calls and live forum ingest.

use std::time::Duration;

use crate::error::{Error, Result};

pub const USER_AGENT: &str = concat!("lonecorp/", env!("CARGO_PKG_VERSION"));

pub fn blocking_client() -> Result<reqwest::blocking::Client> {
    blocking_client_with_timeout(Duration::from_secs(120))
}

pub fn blocking_client_with_timeout(timeout: Duration) -> Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .user_agent(USER_AGENT)
        .timeout(timeout)
        .connect_timeout(Duration::from_secs(15))
        .build()
        .map_err(|e| Error::Http(e.to_string()))
}
