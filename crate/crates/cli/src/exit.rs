//! Exit statuses and the mapping from failures onto them.

use ttvr_client::ClientError;
use ttvr_core::wire::ErrorCode;
use ttvr_server::StartError;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_BACKEND: u8 = 3;
pub const EXIT_LOCKED: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub exit: u8,
    pub message: String,
}

impl CliError {
    pub fn new(exit: u8, message: impl Into<String>) -> Self {
        Self {
            exit,
            message: message.into(),
        }
    }

    pub fn other(message: impl Into<String>) -> Self {
        Self::new(EXIT_OTHER, message)
    }
}

impl From<StartError> for CliError {
    fn from(e: StartError) -> Self {
        let exit = match &e {
            _ if e.is_locked() => EXIT_LOCKED,
            StartError::Config(_) => EXIT_CONFIG,
            StartError::Archive(_) => EXIT_OTHER,
        };
        Self::new(exit, e.to_string())
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        let exit = match (&e, e.code()) {
            (ClientError::Unreachable { .. }, _) => EXIT_BACKEND,
            (ClientError::Url(_), _) => EXIT_CONFIG,
            (_, Some(ErrorCode::Config | ErrorCode::BadRequest)) => EXIT_CONFIG,
            (_, Some(ErrorCode::Backend)) => EXIT_BACKEND,
            (_, Some(ErrorCode::Locked)) => EXIT_LOCKED,
            _ => EXIT_OTHER,
        };
        Self::new(exit, e.to_string())
    }
}
