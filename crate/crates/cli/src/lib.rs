//! Library surface of the batch CLI, shared by the binary and the
//! integration/acceptance suites.

pub mod commands;
pub mod config;
pub mod manifest;

/// Overall result of a command run.
pub enum Outcome {
    Clean,
    /// Some scans failed; processing continued for the rest.
    Partial,
}
