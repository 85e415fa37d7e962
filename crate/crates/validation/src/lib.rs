//! End-to-end acceptance checks for the estimators, simulation and CLI.
//!
//! The checks live in `tests/acceptance.rs`; run them with
//! `cargo test -p psppi-validation --test acceptance`.
