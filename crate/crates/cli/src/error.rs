// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::path::Path;

/// Process exit classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Usage = 2,
    Data = 3,
    Runtime = 4,
}

/// A command failure. Rendered as one machine-parseable line:
/// `error[<Code>]: <message>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub class: ExitClass,
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(class: ExitClass, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            class,
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(ExitClass::Usage, "Usage", message)
    }

    pub fn data(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(ExitClass::Data, code, message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::new(ExitClass::Runtime, "Io", format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        self.class as i32
    }

    /// The message with line breaks folded, so the rendering stays one line.
    pub fn line(&self) -> String {
        let msg = self.message.replace(['\n', '\r'], " ");
        format!("error[{}]: {msg}", self.code)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

/// Wraps a parser error with the file it came from.
pub fn in_file(path: &Path, err: impl fmt::Display) -> CliError {
    CliError::data("Parse", format!("{}: {err}", path.display()))
}
