//! Acceptance checks for `rqsim` live in `tests/acceptance.rs`. They are kept
//! in a separate package so they run after the library's own test targets.
