//! Parametric flow and server models with their closed-form delay bounds.
//!
//! Every flow model knows how to render itself as an exact arrival
//! [`Curve`], so each closed-form bound here can be cross-checked against
//! [`minplus::horizontal_deviation`] — that equivalence is the central
//! property the test suite leans on.
//!
//! The bounds against a rate-latency server `beta(t) = R [t - e]+`:
//!
//! ```text
//! ideal            d = l / C                      (nominal line rate, no error term)
//! token bucket     d = b/R + e
//! model A          d = b/R + e - (R - r)(b - l) / ((p - r) R)
//! model B          d = b/R + e - (b - l) / p
//! model C          d = (l/R - tau) n + e + tau
//! ```
//!
//! Model A corrects the token-bucket bound for the ingress link speed `p`
//! (traffic cannot arrive faster than the line rate); model B tightens it
//! further for strictly periodic bursts; model C models a real source that
//! emits the packets of a burst spaced `tau = l / r_p` apart instead of
//! simultaneously.

use crate::minplus::{self, Curve, CurveError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(
        "unbounded delay: sustained rate {flow_rate} bps exceeds service rate {service_rate} bps"
    )]
    Unstable { flow_rate: f64, service_rate: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate four-tuple: peak rate equals sustained rate ({rate} bps)")]
    DegenerateTuple { rate: f64 },
    #[error("infeasible source: burst spacing leaves non-positive inter-burst gap ({gap_s} s)")]
    InfeasibleSource { gap_s: f64 },
    #[error(transparent)]
    Curve(#[from] CurveError),
}

/// Rate-latency server `beta(t) = rate * max(0, t - error)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateLatencyServer {
    /// Guaranteed service rate `R`, bits per second.
    pub rate_bps: f64,
    /// Error term `e` (fixed latency), seconds.
    pub error_s: f64,
    /// Nominal line rate `C`, bits per second (for reference and for the
    /// ideal bound).
    pub nominal_bps: f64,
}

impl RateLatencyServer {
    pub fn new(rate_bps: f64, error_s: f64, nominal_bps: f64) -> Result<Self, ModelError> {
        if !(rate_bps > 0.0) || !(nominal_bps > 0.0) {
            return Err(ModelError::Domain(format!(
                "service rate {rate_bps} and nominal rate {nominal_bps} must be positive"
            )));
        }
        if rate_bps > nominal_bps * (1.0 + 1e-12) {
            return Err(ModelError::Domain(format!(
                "service rate {rate_bps} bps exceeds nominal rate {nominal_bps} bps"
            )));
        }
        if !(error_s >= 0.0) {
            return Err(ModelError::Domain(format!("negative error term {error_s}")));
        }
        Ok(RateLatencyServer {
            rate_bps,
            error_s,
            nominal_bps,
        })
    }

    /// The service curve in `minplus` form.
    pub fn curve(&self) -> Curve {
        Curve::rate_latency(self.rate_bps, self.error_s)
    }
}

/// Token bucket: at most `burst` bits at once, `rate` sustained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenBucketFlow {
    pub rate_bps: f64,
    pub burst_bits: f64,
}

impl TokenBucketFlow {
    pub fn new(rate_bps: f64, burst_bits: f64) -> Result<Self, ModelError> {
        if !(rate_bps > 0.0) || !(burst_bits >= 0.0) {
            return Err(ModelError::Domain(format!(
                "token bucket needs rate > 0 and burst >= 0, got ({rate_bps}, {burst_bits})"
            )));
        }
        Ok(TokenBucketFlow {
            rate_bps,
            burst_bits,
        })
    }

    pub fn arrival_curve(&self) -> Curve {
        Curve::affine(self.rate_bps, self.burst_bits)
    }
}

/// Four-tuple `(p, l, r, b)`: token bucket corrected by the link speed `p`
/// and the packet length `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourTupleFlow {
    /// Link (peak) speed `p`, bits per second.
    pub peak_bps: f64,
    /// Packet length `l`, bits.
    pub packet_bits: f64,
    /// Sustained rate `r`, bits per second.
    pub rate_bps: f64,
    /// Burst `b`, bits.
    pub burst_bits: f64,
}

impl FourTupleFlow {
    pub fn new(
        peak_bps: f64,
        packet_bits: f64,
        rate_bps: f64,
        burst_bits: f64,
    ) -> Result<Self, ModelError> {
        if !(rate_bps > 0.0) || peak_bps < rate_bps {
            return Err(ModelError::Domain(format!(
                "four-tuple needs p >= r > 0, got p = {peak_bps}, r = {rate_bps}"
            )));
        }
        if !(packet_bits > 0.0) || burst_bits < packet_bits {
            return Err(ModelError::Domain(format!(
                "four-tuple needs b >= l > 0, got b = {burst_bits}, l = {packet_bits}"
            )));
        }
        Ok(FourTupleFlow {
            peak_bps,
            packet_bits,
            rate_bps,
            burst_bits,
        })
    }

    /// `min(p t + l, r t + b)` — concave with a kink at `(b-l)/(p-r)`.
    pub fn arrival_curve(&self) -> Result<Curve, ModelError> {
        Ok(Curve::concave_min_of_affines(&[
            (self.peak_bps, self.packet_bits),
            (self.rate_bps, self.burst_bits),
        ])?)
    }
}

/// Strictly periodic flow: `burst` bits released every `period`, entering
/// through a link of speed `peak`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicStaircaseFlow {
    /// Period `T`, seconds.
    pub period_s: f64,
    /// Bits per period `b`.
    pub burst_bits: f64,
    /// Link speed `p`, bits per second.
    pub peak_bps: f64,
    /// Packet length `l`, bits.
    pub packet_bits: f64,
}

impl PeriodicStaircaseFlow {
    pub fn new(
        period_s: f64,
        burst_bits: f64,
        peak_bps: f64,
        packet_bits: f64,
    ) -> Result<Self, ModelError> {
        if !(period_s > 0.0) {
            return Err(ModelError::Domain(format!(
                "period {period_s} s must be positive"
            )));
        }
        if !(packet_bits > 0.0) || burst_bits < packet_bits {
            return Err(ModelError::Domain(format!(
                "staircase flow needs b >= l > 0, got b = {burst_bits}, l = {packet_bits}"
            )));
        }
        if peak_bps * period_s < burst_bits * (1.0 - 1e-12) {
            return Err(ModelError::Domain(format!(
                "link speed {peak_bps} bps cannot carry {burst_bits} bits per {period_s} s"
            )));
        }
        Ok(PeriodicStaircaseFlow {
            period_s,
            burst_bits,
            peak_bps,
            packet_bits,
        })
    }

    /// The tight curve `(p t + l) x (b ceil(t/T))` — the sub-additive
    /// closure of `min(p t + l, staircase)`.
    pub fn arrival_curve(&self) -> Result<Curve, ModelError> {
        Ok(minplus::convolve(
            &Curve::affine(self.peak_bps, self.packet_bits),
            &Curve::staircase(self.burst_bits, self.period_s),
        )?)
    }
}

/// A real traffic source: bursts of `n` packets spaced `tau` apart, one
/// burst per period `T_p`, produced by a device with maximum transmission
/// rate `r_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealSourceFlow {
    /// Packet length `l`, bits.
    pub packet_bits: f64,
    /// Packets per burst `n` (burst size is `n * l` bits).
    pub burst_packets: u32,
    /// Intra-burst packet spacing `tau = l / r_p`, seconds.
    pub spacing_s: f64,
    /// Burst period `T_p = (n-1) tau + delta`, seconds.
    pub period_s: f64,
    /// Inter-burst gap `delta`, seconds.
    pub gap_s: f64,
    /// Maximum transmission rate of the source device, bits per second.
    pub source_peak_bps: f64,
    /// Offered load as a fraction of the nominal rate.
    pub load: f64,
}

impl RealSourceFlow {
    /// Build a flow from the load equation `n l / T_p = load * C` with
    /// `tau = l / r_p`.
    pub fn from_load(
        packet_bits: f64,
        burst_packets: u32,
        load: f64,
        nominal_bps: f64,
        source_peak_bps: f64,
    ) -> Result<Self, ModelError> {
        if !(packet_bits > 0.0) || burst_packets < 1 {
            return Err(ModelError::Domain(format!(
                "need packet_bits > 0 and n >= 1, got ({packet_bits}, {burst_packets})"
            )));
        }
        if !(load > 0.0 && load <= 1.0) {
            return Err(ModelError::Domain(format!("load {load} outside (0, 1]")));
        }
        if !(nominal_bps > 0.0) || !(source_peak_bps > 0.0) {
            return Err(ModelError::Domain("rates must be positive".into()));
        }
        let spacing_s = packet_bits / source_peak_bps;
        let period_s = burst_packets as f64 * packet_bits / (load * nominal_bps);
        let gap_s = period_s - (burst_packets as f64 - 1.0) * spacing_s;
        if gap_s <= 0.0 {
            return Err(ModelError::InfeasibleSource { gap_s });
        }
        Ok(RealSourceFlow {
            packet_bits,
            burst_packets,
            spacing_s,
            period_s,
            gap_s,
            source_peak_bps,
            load,
        })
    }

    /// Peak-rate affine piece: `r1 = l / tau` (the device line rate).
    pub fn r1_bps(&self) -> f64 {
        self.packet_bits / self.spacing_s
    }

    /// Burst of the peak-rate piece: one packet.
    pub fn b1_bits(&self) -> f64 {
        self.packet_bits
    }

    /// Sustained rate `r2 = n l / T_p`.
    pub fn r2_bps(&self) -> f64 {
        self.burst_packets as f64 * self.packet_bits / self.period_s
    }

    /// Burst of the sustained piece: `b2 = n l - r2 tau (n-1)`, chosen so
    /// the two affine pieces cross exactly at the end of a burst.
    pub fn b2_bits(&self) -> f64 {
        let n = self.burst_packets as f64;
        n * self.packet_bits - self.r2_bps() * self.spacing_s * (n - 1.0)
    }

    /// `min(r1 t + b1, r2 t + b2)`, the two-affine envelope of the source.
    pub fn arrival_curve(&self) -> Result<Curve, ModelError> {
        Ok(Curve::concave_min_of_affines(&[
            (self.r1_bps(), self.b1_bits()),
            (self.r2_bps(), self.b2_bits()),
        ])?)
    }
}

/// A flow of any supported parametric family, as read from a config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowSpec {
    TokenBucket(TokenBucketFlow),
    FourTuple(FourTupleFlow),
    Staircase(PeriodicStaircaseFlow),
    RealSource(RealSourceFlow),
}

impl FlowSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            FlowSpec::TokenBucket(_) => "token_bucket",
            FlowSpec::FourTuple(_) => "four_tuple",
            FlowSpec::Staircase(_) => "staircase",
            FlowSpec::RealSource(_) => "real_source",
        }
    }

    /// The exact arrival curve of the flow.
    pub fn arrival_curve(&self) -> Result<Curve, ModelError> {
        match self {
            FlowSpec::TokenBucket(f) => Ok(f.arrival_curve()),
            FlowSpec::FourTuple(f) => f.arrival_curve(),
            FlowSpec::Staircase(f) => f.arrival_curve(),
            FlowSpec::RealSource(f) => f.arrival_curve(),
        }
    }

    /// Packet length if the family carries one, bits.
    pub fn packet_bits(&self) -> Option<f64> {
        match self {
            FlowSpec::TokenBucket(_) => None,
            FlowSpec::FourTuple(f) => Some(f.packet_bits),
            FlowSpec::Staircase(f) => Some(f.packet_bits),
            FlowSpec::RealSource(f) => Some(f.packet_bits),
        }
    }

    /// The family's own closed-form bound against `server`.
    pub fn native_bound(&self, server: &RateLatencyServer) -> Result<DelayBound, ModelError> {
        match self {
            FlowSpec::TokenBucket(f) => token_bucket_bound(f, server),
            FlowSpec::FourTuple(f) => model_a_bound(f, server),
            FlowSpec::Staircase(f) => model_b_bound(f, server),
            FlowSpec::RealSource(f) => model_c_bound(f, server),
        }
    }
}

/// Which closed form produced a [`DelayBound`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundModel {
    Ideal,
    TokenBucket,
    ModelA,
    ModelB,
    ModelC,
}

impl BoundModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundModel::Ideal => "ideal",
            BoundModel::TokenBucket => "token_bucket",
            BoundModel::ModelA => "model_a",
            BoundModel::ModelB => "model_b",
            BoundModel::ModelC => "model_c",
        }
    }
}

/// Kink of a two-piece arrival curve: where the burst ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalKink {
    pub t_s: f64,
    pub value_bits: f64,
}

/// A delay bound with its signed breakdown:
/// `value = base + error - reduction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayBound {
    pub model: BoundModel,
    /// The bound itself, seconds.
    pub value_s: f64,
    /// Burst drain term `b / R` (or `l / C` for the ideal bound), seconds.
    pub base_s: f64,
    /// Server error term `e`, seconds.
    pub error_s: f64,
    /// Model-specific tightening subtracted from `base + error`, seconds.
    pub reduction_s: f64,
    /// Arrival-curve kink behind the bound, when the model has one.
    pub kink: Option<ArrivalKink>,
}

impl DelayBound {
    fn assemble(
        model: BoundModel,
        base_s: f64,
        error_s: f64,
        reduction_s: f64,
        kink: Option<ArrivalKink>,
    ) -> Self {
        DelayBound {
            model,
            value_s: base_s + error_s - reduction_s,
            base_s,
            error_s,
            reduction_s,
            kink,
        }
    }
}

/// Delay through an ideal server running at the nominal line rate with no
/// error term: `d = l / C`.
pub fn ideal_delay(packet_bits: f64, nominal_bps: f64) -> Result<DelayBound, ModelError> {
    if !(packet_bits > 0.0) || !(nominal_bps > 0.0) {
        return Err(ModelError::Domain(format!(
            "ideal delay needs l > 0 and C > 0, got ({packet_bits}, {nominal_bps})"
        )));
    }
    Ok(DelayBound::assemble(
        BoundModel::Ideal,
        packet_bits / nominal_bps,
        0.0,
        0.0,
        None,
    ))
}

/// Token-bucket bound `d = b/R + e`. Requires stability `r <= R`.
pub fn token_bucket_bound(
    flow: &TokenBucketFlow,
    server: &RateLatencyServer,
) -> Result<DelayBound, ModelError> {
    if flow.rate_bps > server.rate_bps * (1.0 + 1e-12) {
        return Err(ModelError::Unstable {
            flow_rate: flow.rate_bps,
            service_rate: server.rate_bps,
        });
    }
    Ok(DelayBound::assemble(
        BoundModel::TokenBucket,
        flow.burst_bits / server.rate_bps,
        server.error_s,
        0.0,
        None,
    ))
}

/// Link-speed-corrected bound (model A):
/// `d = b/R + e - (R - r)(b - l) / ((p - r) R)`.
///
/// Valid for `r <= R <= p`; the subtracted term is the burst time the
/// ingress link has already smoothed out.
pub fn model_a_bound(
    flow: &FourTupleFlow,
    server: &RateLatencyServer,
) -> Result<DelayBound, ModelError> {
    let (p, l, r, b) = (
        flow.peak_bps,
        flow.packet_bits,
        flow.rate_bps,
        flow.burst_bits,
    );
    let rate = server.rate_bps;
    if p <= r {
        return Err(ModelError::DegenerateTuple { rate: r });
    }
    if r > rate * (1.0 + 1e-12) {
        return Err(ModelError::Unstable {
            flow_rate: r,
            service_rate: rate,
        });
    }
    if rate > p * (1.0 + 1e-12) {
        return Err(ModelError::Precondition(format!(
            "service rate {rate} bps above link speed {p} bps: the kink analysis does not apply"
        )));
    }
    let reduction = (rate - r) * (b - l) / ((p - r) * rate);
    let kink_t = (b - l) / (p - r);
    Ok(DelayBound::assemble(
        BoundModel::ModelA,
        b / rate,
        server.error_s,
        reduction,
        Some(ArrivalKink {
            t_s: kink_t,
            value_bits: p * kink_t + l,
        }),
    ))
}

/// Strict-periodic bound (model B): `d = b/R + e - (b - l) / p`.
///
/// Requires stability `b/T <= R` (equivalently `R T >= b`, which also pins
/// the worst case to the first period) and `R <= p`.
pub fn model_b_bound(
    flow: &PeriodicStaircaseFlow,
    server: &RateLatencyServer,
) -> Result<DelayBound, ModelError> {
    let (t_period, b, p, l) = (
        flow.period_s,
        flow.burst_bits,
        flow.peak_bps,
        flow.packet_bits,
    );
    let rate = server.rate_bps;
    if b / t_period > rate * (1.0 + 1e-12) {
        return Err(ModelError::Unstable {
            flow_rate: b / t_period,
            service_rate: rate,
        });
    }
    if rate > p * (1.0 + 1e-12) {
        return Err(ModelError::Precondition(format!(
            "service rate {rate} bps above link speed {p} bps: the first-period kink no longer dominates"
        )));
    }
    Ok(DelayBound::assemble(
        BoundModel::ModelB,
        b / rate,
        server.error_s,
        (b - l) / p,
        Some(ArrivalKink {
            t_s: (b - l) / p,
            value_bits: b,
        }),
    ))
}

/// Spaced-burst bound (model C): `d = (l/R - tau) n + e + tau`, equal to
/// `n l / R + e - (n - 1) tau`.
///
/// Requires `r2 <= R <= r1`. Within that range `l/R >= tau` always holds;
/// the per-burst queueing term is clamped at zero anyway so the bound can
/// never dip below `e + tau`.
pub fn model_c_bound(
    flow: &RealSourceFlow,
    server: &RateLatencyServer,
) -> Result<DelayBound, ModelError> {
    let rate = server.rate_bps;
    let (r1, r2) = (flow.r1_bps(), flow.r2_bps());
    if rate < r2 * (1.0 - 1e-12) {
        return Err(ModelError::Unstable {
            flow_rate: r2,
            service_rate: rate,
        });
    }
    if rate > r1 * (1.0 + 1e-12) {
        return Err(ModelError::Precondition(format!(
            "service rate {rate} bps above source peak rate {r1} bps"
        )));
    }
    let n = flow.burst_packets as f64;
    let l = flow.packet_bits;
    let tau = flow.spacing_s;
    // base + e - reduction = n l / R + e - (n-1) tau; the max() clamps the
    // queueing term at zero, pinning the bound at e + tau when R == r1.
    Ok(DelayBound::assemble(
        BoundModel::ModelC,
        (n * l / rate).max(n * tau),
        server.error_s,
        (n - 1.0) * tau,
        Some(ArrivalKink {
            t_s: (n - 1.0) * tau,
            value_bits: n * l,
        }),
    ))
}
