//! Estimation of rate-latency service parameters from a measured trace.
//!
//! The node is modelled as a constant-rate server: if packet `i` arrives
//! at `T_i` and carries `L_i` bits, its virtual finishing time under rate
//! `R` follows the recurrence
//!
//! ```text
//! t*_i = max(T_i, t*_{i-1}) + L_i / R
//! ```
//!
//! For the right `R`, the slack `s_i = T*_i - t*_i` between measured and
//! virtual departures stays level inside a backlog period; if `R` is too
//! optimistic the slack keeps growing there. [`estimate`] searches for the
//! largest `R` whose slack sequence passes that test and then reads the
//! error term off the worst slack: `e = max_i s_i`, which makes
//! `T*_i <= t*_i + e` hold for every packet.
//!
//! The search walks down from the nominal rate `C` by a small
//! multiplicative step until a rate is accepted, then bisects the final
//! bracket for resolution. The acceptance predicate is monotone near the
//! frontier but not globally — at rates well below the true service rate
//! the virtual queue spills across real idle gaps and the slack test
//! starts firing on the resets — so a plain bisection over all of
//! `(0, C]` can converge onto the wrong island. The descent step keeps
//! every probe on the contiguous rejection zone above the frontier, where
//! the argument is sound; [`SearchStrategy::DescendOnly`] skips the
//! refinement for a bare rendition of the decrease-until-stable loop.
//!
//! Departure timestamps additionally contain the node's IO delay, which
//! the virtual-server argument cannot see. [`apply_io_correction`] adds
//! the worst IO delay measured for the packet length class on top of the
//! estimated error term.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimationError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid trace at record {index}: {reason}")]
    InvalidTrace { index: usize, reason: String },
    #[error("trace has {got} packets, need at least {need}")]
    TooFewPackets { got: usize, need: usize },
    #[error("no service rate in (0, {nominal_bps} bps] passes the slack test: {diagnostic}")]
    NoFeasibleRate { nominal_bps: f64, diagnostic: String },
    #[error("IO delay table is empty")]
    EmptyIoTable,
}

/// One measured packet: identifier, length and the two timestamps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacketRecord {
    pub id: u64,
    pub length_bits: u64,
    /// Arrival at the node, seconds.
    pub arrival_s: f64,
    /// Departure from the node, seconds.
    pub departure_s: f64,
}

/// An ordered per-packet trace satisfying the FIFO sanity rules:
/// arrivals non-decreasing, departures non-decreasing, and every packet
/// departing strictly after it arrived.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredTrace {
    records: Vec<PacketRecord>,
}

impl MeasuredTrace {
    pub fn from_records(records: Vec<PacketRecord>) -> Result<Self, EstimationError> {
        for (i, r) in records.iter().enumerate() {
            if r.length_bits == 0 {
                return Err(EstimationError::InvalidTrace {
                    index: i,
                    reason: "zero-length packet".into(),
                });
            }
            if r.departure_s <= r.arrival_s {
                return Err(EstimationError::InvalidTrace {
                    index: i,
                    reason: format!(
                        "departure {} s not after arrival {} s",
                        r.departure_s, r.arrival_s
                    ),
                });
            }
            if i > 0 {
                if r.arrival_s < records[i - 1].arrival_s {
                    return Err(EstimationError::InvalidTrace {
                        index: i,
                        reason: "arrivals not in order".into(),
                    });
                }
                if r.departure_s < records[i - 1].departure_s {
                    return Err(EstimationError::InvalidTrace {
                        index: i,
                        reason: "departures not in order (FIFO violated)".into(),
                    });
                }
            }
        }
        Ok(MeasuredTrace { records })
    }

    pub fn records(&self) -> &[PacketRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Virtual finishing times under service rate `rate_bps`, one per packet.
///
/// Uses each packet's own length, so mixed-length traces are fine. An
/// empty trace yields an empty vector.
pub fn virtual_finishing_times(
    trace: &MeasuredTrace,
    rate_bps: f64,
) -> Result<Vec<f64>, EstimationError> {
    if !(rate_bps > 0.0) {
        return Err(EstimationError::Domain(format!(
            "service rate must be positive, got {rate_bps} bps"
        )));
    }
    let mut out = Vec::with_capacity(trace.records.len());
    let mut prev = f64::NEG_INFINITY;
    for r in &trace.records {
        let start = r.arrival_s.max(prev);
        let finish = start + r.length_bits as f64 / rate_bps;
        out.push(finish);
        prev = finish;
    }
    Ok(out)
}

/// How [`estimate`] walks the rate axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchStrategy {
    /// Multiply by `factor` until accepted, then bisect the last bracket
    /// down to the configured resolution.
    DescendAndRefine { factor: f64 },
    /// Multiply by `factor` until accepted and return that rate as is.
    DescendOnly { factor: f64 },
}

/// Knobs for [`estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Rate resolution as a fraction of the nominal rate.
    pub resolution_rel: f64,
    /// Slack increases below this are treated as measurement jitter, not
    /// as evidence against the candidate rate.
    pub jitter_floor_s: f64,
    pub strategy: SearchStrategy,
    /// Warn when the worst slack exceeds the runner-up by more than this.
    pub outlier_threshold_s: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            resolution_rel: 1e-4,
            jitter_floor_s: 50e-9,
            strategy: SearchStrategy::DescendAndRefine { factor: 0.999 },
            outlier_threshold_s: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimationWarning {
    /// The error term is set by a single packet far above the rest.
    OutlierDominatedError { max_s: f64, runner_up_s: f64 },
    /// The raw worst slack was negative (rate underestimated); clamped.
    NegativeSlackClamped { raw_s: f64 },
}

/// Output of [`estimate`]: the service-curve parameters plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    /// Estimated service rate, bits per second.
    pub rate_hat_bps: f64,
    /// Estimated error term, seconds (worst slack, clamped at zero).
    pub error_hat_s: f64,
    /// Error term after IO correction ([`apply_io_correction`]).
    pub error_with_io_s: Option<f64>,
    /// The IO delay that was added, if any.
    pub io_delay_applied_s: Option<f64>,
    /// Acceptance-predicate evaluations performed by the search.
    pub iterations: u32,
    /// Per-packet slack `T*_i - t*_i` at the accepted rate.
    pub slack_profile: Vec<f64>,
    pub warnings: Vec<EstimationWarning>,
}

/// Result of probing one candidate rate.
#[derive(Debug, Clone)]
pub struct SlackCheck {
    pub slacks: Vec<f64>,
    pub accepted: bool,
    /// First packet index where the slack grew inside a backlog period.
    pub first_violation: Option<usize>,
}

/// Evaluate the acceptance test at one candidate rate.
///
/// Two complementary slack-monotonicity checks, both against the jitter
/// floor:
///
/// 1. *In-run*: while the virtual server is backlogged (`B(t) > 0`, the
///    packet arrived before its predecessor's virtual finish), the slack
///    must not grow — a climb there means the real node drains slower
///    than the candidate rate.
/// 2. *Head-to-head*: packets that find the virtual server idle start a
///    new busy run; their slack is the per-run baseline and must not grow
///    from one run to the next — a climb there means even the
///    idle-respecting virtual schedule outruns the node.
///
/// Comparing run baselines (rather than a head against the tail of the
/// previous run) keeps legitimate sawtooth resets — slack dips during a
/// run and recovers at the next — from being read as violations, and
/// keeps the whole test invariant under constant departure offsets.
pub fn acceptance_check(
    trace: &MeasuredTrace,
    rate_bps: f64,
    config: &SearchConfig,
) -> Result<SlackCheck, EstimationError> {
    let vft = virtual_finishing_times(trace, rate_bps)?;
    let records = trace.records();
    let slacks: Vec<f64> = records
        .iter()
        .zip(&vft)
        .map(|(r, t)| r.departure_s - t)
        .collect();
    // Increases exactly at the floor count as jitter, not as evidence;
    // the picosecond cushion keeps f64 rounding of large timestamps from
    // tipping that comparison.
    let allowance = config.jitter_floor_s + 1e-12;
    let mut first_violation = None;
    let mut prev_head_slack: Option<f64> = None;
    if !records.is_empty() {
        prev_head_slack = Some(slacks[0]);
    }
    for i in 1..records.len() {
        let fresh = records[i].arrival_s >= vft[i - 1];
        if fresh {
            if let Some(head) = prev_head_slack {
                if slacks[i] > head + allowance {
                    first_violation = Some(i);
                    break;
                }
            }
            prev_head_slack = Some(slacks[i]);
        } else if slacks[i] > slacks[i - 1] + allowance {
            first_violation = Some(i);
            break;
        }
    }
    Ok(SlackCheck {
        accepted: first_violation.is_none(),
        slacks,
        first_violation,
    })
}

/// Estimate `(R, e)` from a measured trace against a nominal rate `C`.
///
/// Returns the largest rate (within the search resolution) whose slack
/// sequence passes [`acceptance_check`]; the error term is the worst slack
/// at that rate, so `T*_i <= t*_i + e` holds for the whole trace.
pub fn estimate(
    trace: &MeasuredTrace,
    nominal_bps: f64,
    config: &SearchConfig,
) -> Result<EstimationResult, EstimationError> {
    if !(nominal_bps > 0.0) {
        return Err(EstimationError::Domain(format!(
            "nominal rate must be positive, got {nominal_bps} bps"
        )));
    }
    if trace.len() < 2 {
        return Err(EstimationError::TooFewPackets {
            got: trace.len(),
            need: 2,
        });
    }

    let mut iterations = 0u32;
    let mut probe = |rate: f64| -> Result<bool, EstimationError> {
        iterations += 1;
        Ok(acceptance_check(trace, rate, config)?.accepted)
    };

    let (factor, refine) = match config.strategy {
        SearchStrategy::DescendAndRefine { factor } => (factor, true),
        SearchStrategy::DescendOnly { factor } => (factor, false),
    };
    if !(factor > 0.0 && factor < 1.0) {
        return Err(EstimationError::Domain(format!(
            "descent factor must be in (0, 1), got {factor}"
        )));
    }

    // Descend from the nominal rate to the first accepted probe.
    let floor = nominal_bps * 1e-9;
    let mut lo = nominal_bps;
    let mut hi = None; // smallest rejected rate seen
    while !probe(lo)? {
        hi = Some(lo);
        lo *= factor;
        if lo < floor {
            return Err(EstimationError::NoFeasibleRate {
                nominal_bps,
                diagnostic: "slack grows inside backlog periods at every probed rate; \
                             the trace may violate FIFO or carry clock skew"
                    .into(),
            });
        }
    }

    // Sharpen inside the final bracket, where the predicate is monotone.
    let rate_hat = match (refine, hi) {
        (true, Some(mut hi)) => {
            let step = nominal_bps * config.resolution_rel;
            while hi - lo > step {
                let mid = 0.5 * (lo + hi);
                if probe(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        }
        _ => lo,
    };

    let check = acceptance_check(trace, rate_hat, config)?;
    let raw_max = check
        .slacks
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut warnings = Vec::new();
    let error_hat = if raw_max < 0.0 {
        warnings.push(EstimationWarning::NegativeSlackClamped { raw_s: raw_max });
        0.0
    } else {
        raw_max
    };
    if check.slacks.len() >= 10 {
        let mut sorted = check.slacks.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let runner_up = sorted[sorted.len() - 2];
        if raw_max - runner_up > config.outlier_threshold_s {
            warnings.push(EstimationWarning::OutlierDominatedError {
                max_s: raw_max,
                runner_up_s: runner_up,
            });
        }
    }

    Ok(EstimationResult {
        rate_hat_bps: rate_hat,
        error_hat_s: error_hat,
        error_with_io_s: None,
        io_delay_applied_s: None,
        iterations,
        slack_profile: check.slacks,
        warnings,
    })
}

/// Measured IO delay per packet-length class and load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IoDelayEntry {
    pub length_bytes: u32,
    pub load: f64,
    pub delay_s: f64,
}

/// IO delays of the node under test, keyed by packet-length class.
///
/// Lengths not present in the table map to the nearest class by byte
/// distance, ties toward the larger (more conservative) class.
#[derive(Debug, Clone, PartialEq)]
pub struct IoDelayTable {
    entries: Vec<IoDelayEntry>,
}

impl IoDelayTable {
    pub fn from_entries(entries: Vec<IoDelayEntry>) -> Result<Self, EstimationError> {
        if entries.is_empty() {
            return Err(EstimationError::EmptyIoTable);
        }
        for e in &entries {
            if !(e.delay_s > 0.0) {
                return Err(EstimationError::Domain(format!(
                    "IO delay for {} B at load {} must be positive, got {}",
                    e.length_bytes, e.load, e.delay_s
                )));
            }
        }
        Ok(IoDelayTable { entries })
    }

    pub fn entries(&self) -> &[IoDelayEntry] {
        &self.entries
    }

    /// The length class used for a given packet length.
    pub fn nearest_class(&self, length_bytes: u32) -> u32 {
        let mut best = self.entries[0].length_bytes;
        for e in &self.entries {
            let d = e.length_bytes.abs_diff(length_bytes);
            let best_d = best.abs_diff(length_bytes);
            if d < best_d || (d == best_d && e.length_bytes > best) {
                best = e.length_bytes;
            }
        }
        best
    }

    /// Maximum IO delay over all loads for the length's class, seconds.
    pub fn max_for_length(&self, length_bytes: u32) -> f64 {
        let class = self.nearest_class(length_bytes);
        self.entries
            .iter()
            .filter(|e| e.length_bytes == class)
            .map(|e| e.delay_s)
            .fold(0.0, f64::max)
    }
}

/// Look up the IO delay to add for a packet length.
///
/// The correction always uses the per-length maximum over loads — the
/// worst case is what widens the error term; the `load` argument keeps the
/// call shape aligned with the table layout but does not narrow the
/// result.
pub fn io_delay_lookup(
    table: &IoDelayTable,
    length_bytes: u32,
    load: f64,
) -> Result<f64, EstimationError> {
    let _ = load;
    Ok(table.max_for_length(length_bytes))
}

/// Add the per-length maximum IO delay on top of the estimated error term.
pub fn apply_io_correction(
    result: &EstimationResult,
    table: &IoDelayTable,
    length_bytes: u32,
) -> Result<EstimationResult, EstimationError> {
    let io = table.max_for_length(length_bytes);
    let mut out = result.clone();
    out.error_with_io_s = Some(result.error_hat_s + io);
    out.io_delay_applied_s = Some(io);
    Ok(out)
}
