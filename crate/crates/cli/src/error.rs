use std::fmt;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, msg: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, msg: msg.into() }
    }

    /// Prefixes the message with a file or field name.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.msg = format!("{what}: {}", self.msg);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (exit {})", self.msg, self.code)
    }
}

impl std::error::Error for CliError {}

impl From<btot_core::Error> for CliError {
    fn from(e: btot_core::Error) -> Self {
        use btot_core::Error as E;
        let code = match &e {
            E::Config(_) => EXIT_USAGE,
            _ if e.is_numeric() => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        Self { code, msg: format!("error: {e}") }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(format!("error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(format!("error: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
