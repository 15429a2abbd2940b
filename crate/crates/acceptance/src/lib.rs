//! Acceptance gate for the `fluxleak` workspace. Everything lives in `tests/acceptance.rs`.
