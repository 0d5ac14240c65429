//! Shared error plumbing.
//!
//! Each analysis module defines its own error enum; all of them implement
//! [`ModuleError`] so callers (the CLI in particular) can emit
//! machine-readable diagnostics with a stable `module/code` pair instead of
//! string-matching display messages.

/// Common surface for module errors: a stable module name plus a stable,
/// machine-readable error code.
pub trait ModuleError: std::error::Error {
    /// Module that raised the error, e.g. `"ingest"`.
    fn module(&self) -> &'static str;

    /// Stable snake_case code for the error variant, e.g. `"schema_violation"`.
    fn code(&self) -> &'static str;
}
