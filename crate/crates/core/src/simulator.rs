//! Deterministic event-driven FIFO node plus the burst traffic source.
//!
//! The source emits bursts of `n` packets each period: either spaced
//! `tau = l / r_p` apart the way a real forwarding device transmits them
//! ([`SourceKind::RealSource`]) or all at the same instant
//! ([`SourceKind::IdealPeriodic`]).
//!
//! The node has three stages, all in integer nanoseconds so runs are
//! reproducible bit for bit:
//!
//! 1. *Ingress link* (optional, rate `p_in`): store-and-forward reception
//!    serialized on the wire — a packet is eligible for service once its
//!    last bit is in, and two packets cannot be received concurrently.
//! 2. *Server*: FIFO service at rate `R`, `finish = max(eligible,
//!    prev_finish) + L/R`.
//! 3. *Departure*: `finish + e_proc` plus optional bounded uniform jitter
//!    (seeded), clamped to keep departures FIFO-ordered.
//!
//! The trace timestamps a packet's arrival when the node has fully
//! received it (the eligible instant) — the way a capture point on the
//! node clocks packets — so per-packet delay is `departure - eligible`
//! and decomposes exactly into queueing, transmission and processing
//! parts.

use crate::estimator::{MeasuredTrace, PacketRecord};
use crate::models::{
    self, BoundModel, FourTupleFlow, ModelError, PeriodicStaircaseFlow, RateLatencyServer,
    RealSourceFlow,
};
use crate::{ns_to_s, s_to_ns};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("arrivals not time-ordered at index {index}")]
    UnorderedArrivals { index: usize },
    #[error("invalid server config: {0}")]
    BadServer(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The node under simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServerConfig {
    /// Service rate `R`, bits per second.
    pub rate_bps: f64,
    /// Fixed per-packet processing delay added at departure, seconds.
    pub proc_delay_s: f64,
    /// Ingress link speed; `None` models an infinitely fast ingress.
    pub ingress_bps: Option<f64>,
    /// Upper bound of the uniform departure jitter, seconds (0 = off).
    pub jitter_bound_s: f64,
    /// Seed for the jitter generator.
    pub seed: u64,
}

impl ServerConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.rate_bps > 0.0) {
            return Err(SimError::BadServer(format!(
                "service rate must be positive, got {}",
                self.rate_bps
            )));
        }
        if !(self.proc_delay_s >= 0.0) || !(self.jitter_bound_s >= 0.0) {
            return Err(SimError::BadServer(
                "processing delay and jitter bound must be non-negative".into(),
            ));
        }
        if let Some(p) = self.ingress_bps {
            if !(p > 0.0) {
                return Err(SimError::BadServer(format!(
                    "ingress rate must be positive, got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Burst release pattern of the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKind {
    /// All `n` packets of a burst released at the period start.
    IdealPeriodic,
    /// Packets spaced `tau` apart within the burst.
    RealSource,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceConfig {
    pub kind: SourceKind,
    pub total_packets: usize,
}

/// One generated packet awaiting simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arrival {
    pub id: u64,
    pub length_bits: u64,
    pub time_ns: u64,
}

/// Per-packet delay decomposition, seconds. The three parts sum to the
/// packet's total delay exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayParts {
    pub queue_s: f64,
    pub trans_s: f64,
    pub proc_s: f64,
}

/// Everything one simulation run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub trace: MeasuredTrace,
    pub per_packet_delay_s: Vec<f64>,
    pub max_delay_s: f64,
    pub decomposition: Vec<DelayParts>,
    /// Backlog `B(t) = A(t) - D(t)` in bits, sampled after every event.
    pub backlog_samples: Vec<(f64, f64)>,
}

/// Emit the arrival times of `src.total_packets` packets of the flow.
///
/// Burst `m` starts at `m * T_p`; packet `k` of the burst leaves the
/// source at `m * T_p + k * tau` (real source) or at the burst start
/// (ideal periodic). All packets carry the flow's packet length.
pub fn generate_arrivals(
    src: &SourceConfig,
    flow: &RealSourceFlow,
) -> Result<Vec<Arrival>, SimError> {
    if flow.gap_s <= 0.0 {
        return Err(SimError::Model(ModelError::InfeasibleSource {
            gap_s: flow.gap_s,
        }));
    }
    let length_bits = flow.packet_bits.round() as u64;
    let n = flow.burst_packets as usize;
    let mut out = Vec::with_capacity(src.total_packets);
    let mut id = 0u64;
    'outer: for m in 0u64.. {
        let burst_start = m as f64 * flow.period_s;
        for k in 0..n {
            if out.len() >= src.total_packets {
                break 'outer;
            }
            let t = match src.kind {
                SourceKind::RealSource => burst_start + k as f64 * flow.spacing_s,
                SourceKind::IdealPeriodic => burst_start,
            };
            out.push(Arrival {
                id,
                length_bits,
                time_ns: s_to_ns(t),
            });
            id += 1;
        }
    }
    Ok(out)
}

#[inline]
fn duration_ns(length_bits: u64, rate_bps: f64) -> u64 {
    (length_bits as f64 * 1e9 / rate_bps).round() as u64
}

/// Run the FIFO node over a time-ordered arrival list.
pub fn simulate(arrivals: &[Arrival], server: &ServerConfig) -> Result<SimulationReport, SimError> {
    server.validate()?;
    for i in 1..arrivals.len() {
        if arrivals[i].time_ns < arrivals[i - 1].time_ns {
            return Err(SimError::UnorderedArrivals { index: i });
        }
    }

    let proc_ns = s_to_ns(server.proc_delay_s);
    let jitter_ns = s_to_ns(server.jitter_bound_s);
    let mut rng = StdRng::seed_from_u64(server.seed);

    let mut records = Vec::with_capacity(arrivals.len());
    let mut delays = Vec::with_capacity(arrivals.len());
    let mut parts = Vec::with_capacity(arrivals.len());
    // (time_ns, signed bits) events for the backlog process.
    let mut events: Vec<(u64, i64)> = Vec::with_capacity(2 * arrivals.len());

    let mut recv_free: u64 = 0;
    let mut prev_finish: u64 = 0;
    let mut prev_departure: u64 = 0;
    for a in arrivals {
        let eligible = match server.ingress_bps {
            Some(p_in) => recv_free.max(a.time_ns) + duration_ns(a.length_bits, p_in),
            None => a.time_ns,
        };
        recv_free = eligible;
        let start = eligible.max(prev_finish);
        let service = duration_ns(a.length_bits, server.rate_bps);
        let finish = start + service;
        prev_finish = finish;
        let jitter = if jitter_ns > 0 {
            rng.random_range(0..=jitter_ns)
        } else {
            0
        };
        let departure = (finish + proc_ns + jitter).max(prev_departure);
        prev_departure = departure;

        records.push(PacketRecord {
            id: a.id,
            length_bits: a.length_bits,
            arrival_s: ns_to_s(eligible),
            departure_s: ns_to_s(departure),
        });
        delays.push(ns_to_s(departure - eligible));
        parts.push(DelayParts {
            queue_s: ns_to_s(start - eligible),
            trans_s: ns_to_s(finish - start),
            proc_s: ns_to_s(departure - finish),
        });
        events.push((eligible, a.length_bits as i64));
        events.push((departure, -(a.length_bits as i64)));
    }

    events.sort_by_key(|&(t, delta)| (t, -delta));
    let mut backlog_samples = Vec::with_capacity(events.len());
    let mut backlog: i64 = 0;
    let mut idx = 0;
    while idx < events.len() {
        let t = events[idx].0;
        while idx < events.len() && events[idx].0 == t {
            backlog += events[idx].1;
            idx += 1;
        }
        debug_assert!(backlog >= 0, "backlog went negative");
        backlog_samples.push((ns_to_s(t), backlog as f64));
    }

    let max_delay_s = delays.iter().cloned().fold(0.0, f64::max);
    let trace = MeasuredTrace::from_records(records).expect("simulator output obeys FIFO rules");
    Ok(SimulationReport {
        trace,
        per_packet_delay_s: delays,
        max_delay_s,
        decomposition: parts,
        backlog_samples,
    })
}

/// One grid point of a sweep: packet length, offered load, burst size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub length_bytes: u32,
    pub load: f64,
    pub burst_packets: u32,
}

/// One sweep result row: the simulated worst delay next to the four
/// closed-form bounds (absent where a model's preconditions fail).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub max_delay_s: f64,
    pub ideal_s: Option<f64>,
    pub model_a_s: Option<f64>,
    pub model_b_s: Option<f64>,
    pub model_c_s: Option<f64>,
    /// Human-readable notes for bounds that could not be computed.
    pub notes: Vec<String>,
}

/// Simulate every grid point and put the measured worst-case delay next
/// to the model bounds computed from the same parameters.
///
/// Per-point errors (infeasible sources, violated preconditions) are
/// collected into the row's notes and the sweep continues.
pub fn max_delay_sweep(
    grid: &[SweepPoint],
    server: &ServerConfig,
    source_kind: SourceKind,
    packets_per_point: usize,
    nominal_bps: f64,
    source_peak_bps: f64,
) -> Result<Vec<SweepRow>, SimError> {
    server.validate()?;
    let bound_server = RateLatencyServer::new(
        server.rate_bps,
        server.proc_delay_s,
        nominal_bps.max(server.rate_bps),
    )?;
    let mut rows = Vec::with_capacity(grid.len());
    for point in grid {
        let mut notes = Vec::new();
        let length_bits = point.length_bytes as f64 * 8.0;
        let flow = match RealSourceFlow::from_load(
            length_bits,
            point.burst_packets,
            point.load,
            nominal_bps,
            source_peak_bps,
        ) {
            Ok(f) => f,
            Err(e) => {
                rows.push(SweepRow {
                    point: *point,
                    max_delay_s: f64::NAN,
                    ideal_s: None,
                    model_a_s: None,
                    model_b_s: None,
                    model_c_s: None,
                    notes: vec![format!("source: {e}")],
                });
                continue;
            }
        };
        let arrivals = generate_arrivals(
            &SourceConfig {
                kind: source_kind,
                total_packets: packets_per_point,
            },
            &flow,
        )?;
        let report = simulate(&arrivals, server)?;

        let mut bound = |which: BoundModel| -> Option<f64> {
            let result = match which {
                BoundModel::Ideal => models::ideal_delay(length_bits, nominal_bps),
                BoundModel::ModelA => FourTupleFlow::new(
                    source_peak_bps,
                    length_bits,
                    point.load * nominal_bps,
                    point.burst_packets as f64 * length_bits,
                )
                .and_then(|f| models::model_a_bound(&f, &bound_server)),
                BoundModel::ModelB => PeriodicStaircaseFlow::new(
                    flow.period_s,
                    point.burst_packets as f64 * length_bits,
                    source_peak_bps,
                    length_bits,
                )
                .and_then(|f| models::model_b_bound(&f, &bound_server)),
                BoundModel::ModelC => models::model_c_bound(&flow, &bound_server),
                BoundModel::TokenBucket => unreachable!("not part of sweep rows"),
            };
            match result {
                Ok(b) => Some(b.value_s),
                Err(e) => {
                    notes.push(format!("{}: {e}", which.as_str()));
                    None
                }
            }
        };

        let ideal_s = bound(BoundModel::Ideal);
        let model_a_s = bound(BoundModel::ModelA);
        let model_b_s = bound(BoundModel::ModelB);
        let model_c_s = bound(BoundModel::ModelC);
        rows.push(SweepRow {
            point: *point,
            max_delay_s: report.max_delay_s,
            ideal_s,
            model_a_s,
            model_b_s,
            model_c_s,
            notes,
        });
    }
    Ok(rows)
}
