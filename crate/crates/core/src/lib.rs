//! Delay analysis for a single network node, built on deterministic
//! network calculus and calibrated from packet measurements.
//!
//! The crate has five parts:
//!
//! - [`minplus`] — exact algebra on ultimately-affine piecewise-linear
//!   curves: pointwise minimum, min-plus convolution, sub-additive closure
//!   and horizontal deviation. This is the numeric oracle everything else
//!   is checked against.
//! - [`models`] — parametric arrival curves (token bucket, peak-rate
//!   four-tuple, periodic staircase, spaced-burst source) and the
//!   closed-form delay bounds they give against a rate-latency server.
//! - [`estimator`] — recovers the rate-latency parameters `(R, e)` of a
//!   node from a measured per-packet trace, plus the IO-delay correction.
//! - [`simulator`] — a deterministic FIFO node and traffic source that
//!   produce traces, per-packet delays and backlog processes, used to
//!   validate estimates and bounds end to end.
//! - [`io`] — the shared file formats (traces, configs, IO-delay tables)
//!   and the bundled reference datasets.
//!
//! All internal quantities are in canonical units: seconds and bits
//! (`f64`). Persisted files use integer nanoseconds and bytes; conversion
//! happens at the I/O boundary.

// Validation sites use `!(x > 0.0)` on purpose: unlike `x <= 0.0` it also
// rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod estimator;
pub mod io;
pub mod minplus;
pub mod models;
pub mod simulator;

/// Seconds per nanosecond, the trace-file time unit.
pub const NS: f64 = 1e-9;

/// Convert integer nanoseconds (file unit) to seconds (internal unit).
#[inline]
pub fn ns_to_s(ns: u64) -> f64 {
    ns as f64 * NS
}

/// Convert seconds to the nearest integer nanosecond.
///
/// Times in this crate stay far below the ~1e15 ns range where the
/// round trip through `f64` would stop being exact.
#[inline]
pub fn s_to_ns(s: f64) -> u64 {
    debug_assert!(s >= 0.0 && s.is_finite());
    (s * 1e9).round() as u64
}
