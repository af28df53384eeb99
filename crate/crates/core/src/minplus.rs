//! Min-plus algebra on ultimately-affine piecewise-linear curves.
//!
//! A [`Curve`] is a non-decreasing function `f : [0, inf) -> [0, inf)`,
//! left-continuous at jumps, made of finitely many affine segments plus an
//! affine tail. Arrival curves follow the usual network-calculus
//! convention of being zero at the origin: a token bucket `r t + b` is
//! represented with `f(0) = 0` and a jump to `b` just after zero. That
//! convention is what makes the classical identities hold, e.g. that the
//! convolution of two concave arrival curves is their pointwise minimum.
//!
//! Supported operations:
//!
//! ```text
//! minimum(f, g)(t)   = min(f(t), g(t))
//! convolve(f, g)(t)  = inf { f(s) + g(t - s) : 0 <= s <= t }
//! closure(f)         = inf { f, f x f, f x f x f, ... }
//! hdev(a, b)         = sup_t inf { d >= 0 : b(t + d) >= a(t) }
//! ```
//!
//! `hdev` (horizontal deviation) is the FIFO delay bound; it is computed
//! exactly by scanning the arrival curve's breakpoints (using the upper
//! value at jumps, the worst case for delay) against the lower
//! pseudo-inverse of the service curve.
//!
//! Staircase curves are unrolled over a finite horizon (16 periods by
//! default) and continued with an affine tail of the long-run rate `b/T`,
//! anchored at a period boundary so the representation lower-bounds the
//! true continuation. Operations whose answer would depend on the curve
//! beyond the horizon fail with [`CurveError::HorizonExceeded`] instead of
//! silently approximating.

use thiserror::Error;

/// Absolute tolerance for merging breakpoint times, in seconds.
pub const TIME_TOL: f64 = 1e-15;

/// Relative tolerance for value comparisons (slope-intersection noise).
pub const VALUE_REL_TOL: f64 = 1e-12;

/// Periods a staircase is unrolled for before the affine tail takes over.
pub const DEFAULT_STAIRCASE_PERIODS: usize = 16;

#[derive(Debug, Error)]
pub enum CurveError {
    #[error("curve evaluation at negative time {t} s")]
    NegativeTime { t: f64 },
    #[error("invalid curve: {0}")]
    Invalid(String),
    #[error("operation `{op}` does not support curve kinds {left} and {right}")]
    Unsupported {
        op: &'static str,
        left: String,
        right: String,
    },
    #[error(
        "unbounded delay: arrival tail rate {alpha_rate} bps exceeds service tail rate {beta_rate} bps"
    )]
    UnboundedDelay { alpha_rate: f64, beta_rate: f64 },
    #[error("result depends on curve values beyond the exact horizon {horizon} s (at t = {t} s)")]
    HorizonExceeded { horizon: f64, t: f64 },
}

/// One affine piece of a curve.
///
/// The segment starting at `start` carries the function on the interval
/// `(start, next_start]`: `f(t) = value + slope * (t - start)`. `value` is
/// therefore the right limit at `start`; the value *at* `start` belongs to
/// the previous segment (left continuity). A jump sits at `start` whenever
/// `value` exceeds the previous segment's closing value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Segment start time, seconds.
    pub start: f64,
    /// Value just after `start`, bits.
    pub value: f64,
    /// Growth rate on the segment, bits per second.
    pub slope: f64,
}

impl Segment {
    pub fn new(start: f64, value: f64, slope: f64) -> Self {
        Segment { start, value, slope }
    }

    /// Value of this segment's affine extension at time `t >= start`.
    #[inline]
    fn extend(&self, t: f64) -> f64 {
        self.value + self.slope * (t - self.start)
    }
}

/// Shape tag, used to dispatch convolution and closure.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveKind {
    /// Single affine piece `rate * t + burst` for `t > 0`, zero at zero.
    Affine { rate: f64, burst: f64 },
    /// Pointwise minimum of affine pieces; concave on `t > 0`, zero at zero.
    ConcaveMinOfAffines,
    /// Pure staircase `burst * ceil(t / period)`, truncated at the horizon.
    Staircase { burst: f64, period: f64 },
    /// Rate-latency service shape `rate * max(0, t - latency)`.
    RateLatency { rate: f64, latency: f64 },
    /// `min(affine, staircase)`; keeps both factors so the sub-additive
    /// closure can use the factorization `(f ^ g)* = f* x g*`.
    MinAffineStaircase {
        rate: f64,
        offset: f64,
        burst: f64,
        period: f64,
    },
    /// Anything else produced by the algebra.
    Composite,
}

impl CurveKind {
    fn name(&self) -> &'static str {
        match self {
            CurveKind::Affine { .. } => "affine",
            CurveKind::ConcaveMinOfAffines => "concave_min_of_affines",
            CurveKind::Staircase { .. } => "staircase",
            CurveKind::RateLatency { .. } => "rate_latency",
            CurveKind::MinAffineStaircase { .. } => "min_affine_staircase",
            CurveKind::Composite => "composite",
        }
    }
}

/// Maximum horizontal distance between an arrival and a service curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizontalDeviation {
    /// The deviation itself, seconds. This bounds the FIFO delay.
    pub value: f64,
    /// A time at which the supremum is achieved.
    pub witness_t: f64,
}

/// Ultimately-affine piecewise-linear curve on `t >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    value_at_zero: f64,
    segments: Vec<Segment>,
    kind: CurveKind,
    /// The representation is exact on `[0, exact_until]` and a lower bound
    /// beyond; `None` means exact everywhere.
    exact_until: Option<f64>,
}

impl Curve {
    /// Build a curve from raw parts, validating the invariants:
    /// first segment starts at 0, starts strictly increasing, slopes
    /// non-negative, no downward jumps, all values non-negative.
    pub fn new(
        value_at_zero: f64,
        segments: Vec<Segment>,
        kind: CurveKind,
        exact_until: Option<f64>,
    ) -> Result<Self, CurveError> {
        if segments.is_empty() {
            return Err(CurveError::Invalid("no segments".into()));
        }
        if segments[0].start != 0.0 {
            return Err(CurveError::Invalid(format!(
                "first segment starts at {} s, expected 0",
                segments[0].start
            )));
        }
        if !(value_at_zero >= 0.0) {
            return Err(CurveError::Invalid(format!(
                "negative value at zero: {value_at_zero}"
            )));
        }
        let mut prev_close = value_at_zero;
        for (i, seg) in segments.iter().enumerate() {
            if seg.slope < 0.0 || seg.value.is_nan() {
                return Err(CurveError::Invalid(format!(
                    "segment {i} has slope {} / value {}",
                    seg.slope, seg.value
                )));
            }
            if seg.value + value_tol(seg.value) < prev_close {
                return Err(CurveError::Invalid(format!(
                    "downward jump at segment {i}: {} -> {}",
                    prev_close, seg.value
                )));
            }
            if i + 1 < segments.len() {
                let next = &segments[i + 1];
                if next.start <= seg.start + TIME_TOL {
                    return Err(CurveError::Invalid(format!(
                        "segment starts not strictly increasing at index {i}"
                    )));
                }
                prev_close = seg.extend(next.start);
            }
        }
        Ok(Curve {
            value_at_zero,
            segments,
            kind,
            exact_until,
        })
    }

    /// Token-bucket style affine curve: zero at the origin, then
    /// `rate * t + burst` for `t > 0`.
    pub fn affine(rate: f64, burst: f64) -> Self {
        assert!(rate >= 0.0 && burst >= 0.0, "affine curve needs rate, burst >= 0");
        Curve {
            value_at_zero: 0.0,
            segments: vec![Segment::new(0.0, burst, rate)],
            kind: CurveKind::Affine { rate, burst },
            exact_until: None,
        }
    }

    /// Rate-latency service curve `rate * max(0, t - latency)`.
    pub fn rate_latency(rate: f64, latency: f64) -> Self {
        assert!(rate > 0.0 && latency >= 0.0, "rate-latency needs rate > 0, latency >= 0");
        let segments = if latency > 0.0 {
            vec![Segment::new(0.0, 0.0, 0.0), Segment::new(latency, 0.0, rate)]
        } else {
            vec![Segment::new(0.0, 0.0, rate)]
        };
        Curve {
            value_at_zero: 0.0,
            segments,
            kind: CurveKind::RateLatency { rate, latency },
            exact_until: None,
        }
    }

    /// Staircase `burst * ceil(t / period)`, unrolled for
    /// [`DEFAULT_STAIRCASE_PERIODS`] periods.
    pub fn staircase(burst: f64, period: f64) -> Self {
        Self::staircase_with_horizon(burst, period, DEFAULT_STAIRCASE_PERIODS)
    }

    /// Staircase with an explicit unrolling horizon (number of periods).
    pub fn staircase_with_horizon(burst: f64, period: f64, periods: usize) -> Self {
        assert!(burst > 0.0 && period > 0.0 && periods >= 1);
        let mut segments = Vec::with_capacity(periods + 2);
        for k in 0..=periods {
            segments.push(Segment::new(k as f64 * period, (k + 1) as f64 * burst, 0.0));
        }
        // Tail of slope b/T anchored at a period boundary: it touches the
        // true staircase at every later boundary and never exceeds it.
        let anchor_t = (periods + 1) as f64 * period;
        segments.push(Segment::new(anchor_t, (periods + 1) as f64 * burst, burst / period));
        Curve {
            value_at_zero: 0.0,
            segments,
            kind: CurveKind::Staircase { burst, period },
            exact_until: Some(anchor_t),
        }
    }

    /// Pointwise minimum of affine pieces `rate * t + burst`, zero at zero.
    pub fn concave_min_of_affines(pieces: &[(f64, f64)]) -> Result<Self, CurveError> {
        if pieces.is_empty() {
            return Err(CurveError::Invalid("no affine pieces".into()));
        }
        let mut acc = Curve::affine(pieces[0].0, pieces[0].1);
        for &(rate, burst) in &pieces[1..] {
            acc = minimum(&acc, &Curve::affine(rate, burst))?;
        }
        Ok(acc)
    }

    /// The burst-delay identity element of convolution: zero at the
    /// origin, infinite immediately after.
    pub fn delta_zero() -> Self {
        Curve {
            value_at_zero: 0.0,
            segments: vec![Segment::new(0.0, f64::INFINITY, 0.0)],
            kind: CurveKind::Composite,
            exact_until: None,
        }
    }

    pub fn is_delta_zero(&self) -> bool {
        self.segments.len() == 1 && self.segments[0].value.is_infinite()
    }

    pub fn kind(&self) -> &CurveKind {
        &self.kind
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn value_at_zero(&self) -> f64 {
        self.value_at_zero
    }

    /// Start of the affine tail: `(t_tail, rate_tail)`.
    pub fn tail(&self) -> (f64, f64) {
        let last = self.segments.last().unwrap();
        (last.start, last.slope)
    }

    /// Long-run growth rate, bits per second.
    pub fn tail_rate(&self) -> f64 {
        self.segments.last().unwrap().slope
    }

    /// Horizon up to which the representation is exact (`None` = always).
    pub fn exact_until(&self) -> Option<f64> {
        self.exact_until
    }

    /// Evaluate the curve at `t` (left-continuous value).
    ///
    /// A staircase evaluates to `b * ceil(t/T)`, in particular 0 at `t = 0`
    /// and the pre-jump value at period boundaries.
    pub fn eval(&self, t: f64) -> Result<f64, CurveError> {
        if t < 0.0 {
            return Err(CurveError::NegativeTime { t });
        }
        if let Some(h) = self.exact_until {
            if t > h {
                return Err(CurveError::HorizonExceeded { horizon: h, t });
            }
        }
        Ok(self.eval_unchecked(t))
    }

    /// As [`eval`](Self::eval) but without domain/horizon checks; beyond
    /// the horizon this returns the lower-bound tail value.
    pub fn eval_unchecked(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.value_at_zero;
        }
        // Last segment with start strictly below t owns (start, next].
        let idx = match self
            .segments
            .binary_search_by(|s| s.start.partial_cmp(&t).expect("finite start"))
        {
            Ok(i) => {
                // Exact hit on a start: the value at t is the previous
                // segment's closure (left continuity).
                if i == 0 {
                    return self.value_at_zero.max(0.0);
                }
                i - 1
            }
            Err(i) => i - 1, // i >= 1 because segments[0].start == 0 < t
        };
        self.segments[idx].extend(t)
    }

    /// Right limit `f(t+)` — the upper value at a jump.
    pub fn upper_value(&self, t: f64) -> f64 {
        if t < 0.0 {
            return self.value_at_zero;
        }
        let idx = match self
            .segments
            .binary_search_by(|s| s.start.partial_cmp(&t).expect("finite start"))
        {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        self.segments[idx].extend(t)
    }

    /// Segment index active just after `t` (`f(t+)` belongs to it).
    fn segment_after(&self, t: f64) -> usize {
        match self
            .segments
            .binary_search_by(|s| s.start.partial_cmp(&t).expect("finite start"))
        {
            Ok(i) => i,
            Err(i) => i - 1,
        }
    }

    /// True when the curve is a concave arrival curve: zero at the origin,
    /// no jumps after it, slopes non-increasing.
    pub fn is_concave_arrival(&self) -> bool {
        if self.value_at_zero != 0.0 || self.is_delta_zero() {
            return false;
        }
        let mut prev: Option<&Segment> = None;
        for seg in &self.segments {
            if let Some(p) = prev {
                let close = p.extend(seg.start);
                if (seg.value - close).abs() > value_tol(close) {
                    return false; // interior jump
                }
                if seg.slope > p.slope + value_tol(p.slope) {
                    return false; // slope increased
                }
            }
            prev = Some(seg);
        }
        true
    }

    /// Scale all values (not times) by `factor > 0`.
    pub fn scale_values(&self, factor: f64) -> Self {
        assert!(factor > 0.0);
        let segments = self
            .segments
            .iter()
            .map(|s| Segment::new(s.start, s.value * factor, s.slope * factor))
            .collect();
        Curve {
            value_at_zero: self.value_at_zero * factor,
            segments,
            kind: CurveKind::Composite,
            exact_until: self.exact_until,
        }
    }

    /// Breakpoint rows for export: `(t_seconds, value_bits, slope_bps)`.
    /// A jump at the origin is emitted as an extra leading row so that the
    /// plotted curve shows both sides of the discontinuity.
    pub fn breakpoints(&self) -> Vec<(f64, f64, f64)> {
        let mut rows = Vec::with_capacity(self.segments.len() + 1);
        if (self.segments[0].value - self.value_at_zero).abs() > value_tol(self.value_at_zero) {
            rows.push((0.0, self.value_at_zero, 0.0));
        }
        for seg in &self.segments {
            rows.push((seg.start, seg.value, seg.slope));
        }
        rows
    }
}

#[inline]
fn value_tol(reference: f64) -> f64 {
    VALUE_REL_TOL * reference.abs().max(1.0)
}

fn min_exact_until(a: &Curve, b: &Curve) -> Option<f64> {
    match (a.exact_until, b.exact_until) {
        (None, h) | (h, None) => h,
        (Some(x), Some(y)) => Some(x.min(y)),
    }
}

/// Drop redundant breakpoints: zero-length pieces and collinear
/// continuations.
fn canonicalize(segments: Vec<Segment>) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(segments.len());
    for seg in segments {
        if let Some(last) = out.last() {
            if seg.start - last.start <= TIME_TOL {
                // Same start: keep the later piece (it carries the right limit).
                let merged = Segment::new(last.start, seg.value, seg.slope);
                *out.last_mut().unwrap() = merged;
                continue;
            }
            let close = last.extend(seg.start);
            let collinear = (seg.value - close).abs() <= value_tol(close)
                && (seg.slope - last.slope).abs() <= value_tol(last.slope);
            if collinear {
                continue;
            }
        }
        out.push(seg);
    }
    out
}

/// Pointwise minimum of two curves.
///
/// Breakpoints of the result are the union of the inputs' breakpoints plus
/// the crossing points where the two graphs intersect inside a segment.
pub fn minimum(a: &Curve, b: &Curve) -> Result<Curve, CurveError> {
    // Merged event times.
    let mut events: Vec<f64> = a
        .segments
        .iter()
        .chain(b.segments.iter())
        .map(|s| s.start)
        .collect();
    events.sort_by(|x, y| x.partial_cmp(y).unwrap());
    events.dedup_by(|x, y| (*x - *y).abs() <= TIME_TOL);

    let mut segments: Vec<Segment> = Vec::with_capacity(events.len() + 4);
    for (i, &t0) in events.iter().enumerate() {
        let next = events.get(i + 1).copied();
        let (av, asl) = {
            let s = &a.segments[a.segment_after(t0)];
            (s.extend(t0), s.slope)
        };
        let (bv, bsl) = {
            let s = &b.segments[b.segment_after(t0)];
            (s.extend(t0), s.slope)
        };
        // Segment leaving t0: the smaller value wins; on a tie the smaller
        // slope stays below.
        let (mut v, mut sl, mut other_v, mut other_sl) =
            if av < bv - value_tol(av) || ((av - bv).abs() <= value_tol(av) && asl <= bsl) {
                (av, asl, bv, bsl)
            } else {
                (bv, bsl, av, asl)
            };
        if v.is_infinite() {
            // min with delta-zero: the finite side wins.
            (v, sl) = (other_v, other_sl);
            (other_v, other_sl) = (f64::INFINITY, 0.0);
        }
        segments.push(Segment::new(t0, v, sl));
        // One possible crossing before the next event.
        if other_v.is_finite() && sl > other_sl {
            let dt = (other_v - v) / (sl - other_sl);
            let inside = match next {
                Some(t1) => dt > TIME_TOL && t0 + dt < t1 - TIME_TOL,
                None => dt > TIME_TOL,
            };
            if inside {
                let tx = t0 + dt;
                segments.push(Segment::new(tx, other_v + other_sl * dt, other_sl));
            }
        }
    }

    let segments = canonicalize(segments);
    let kind = min_kind(a, b, &segments);
    Curve::new(
        a.value_at_zero.min(b.value_at_zero),
        segments,
        kind,
        min_exact_until(a, b),
    )
}

fn min_kind(a: &Curve, b: &Curve, result: &[Segment]) -> CurveKind {
    use CurveKind::*;
    match (&a.kind, &b.kind) {
        (Affine { .. } | ConcaveMinOfAffines, Affine { .. } | ConcaveMinOfAffines) => {
            if result.len() == 1 {
                Affine {
                    rate: result[0].slope,
                    burst: result[0].value,
                }
            } else {
                ConcaveMinOfAffines
            }
        }
        (Affine { rate, burst }, Staircase { burst: sb, period })
        | (Staircase { burst: sb, period }, Affine { rate, burst }) => MinAffineStaircase {
            rate: *rate,
            offset: *burst,
            burst: *sb,
            period: *period,
        },
        _ => Composite,
    }
}

/// Min-plus convolution `(f x g)(t) = inf { f(s) + g(t-s) }`.
///
/// Supported shape pairs: affine x affine, affine x staircase, and
/// concave x concave (all with value 0 at the origin), plus the
/// delta-zero identity. Anything else is rejected.
pub fn convolve(a: &Curve, b: &Curve) -> Result<Curve, CurveError> {
    if a.is_delta_zero() {
        return Ok(b.clone());
    }
    if b.is_delta_zero() {
        return Ok(a.clone());
    }
    match (&a.kind, &b.kind) {
        (CurveKind::Affine { rate, burst }, CurveKind::Staircase { burst: sb, period }) => {
            convolve_affine_staircase(*rate, *burst, *sb, *period, b)
        }
        (CurveKind::Staircase { burst: sb, period }, CurveKind::Affine { rate, burst }) => {
            convolve_affine_staircase(*rate, *burst, *sb, *period, a)
        }
        _ if a.is_concave_arrival() && b.is_concave_arrival() => {
            // Classical identity: for concave curves that vanish at the
            // origin the convolution is the pointwise minimum.
            minimum(a, b)
        }
        _ => Err(CurveError::Unsupported {
            op: "convolve",
            left: a.kind.name().into(),
            right: b.kind.name().into(),
        }),
    }
}

/// Closed form for `affine(p, l) x staircase(b, T)`.
///
/// On each period window `(kT, (k+1)T]` the infimum is
/// `min((k+1) b, p (t - jT) + l + j b)` where the free index collapses to
/// `j = 0` when `p T <= b` and to `j = k` otherwise.
fn convolve_affine_staircase(
    p: f64,
    l: f64,
    b: f64,
    period: f64,
    stair: &Curve,
) -> Result<Curve, CurveError> {
    let horizon_t = stair
        .exact_until
        .expect("staircase curves always carry a horizon");
    let periods = (horizon_t / period).round() as usize - 1;
    let mut segments: Vec<Segment> = Vec::with_capacity(2 * periods + 4);
    for k in 0..=periods {
        let t0 = k as f64 * period;
        let t1 = t0 + period;
        let ceil_v = (k + 1) as f64 * b;
        // Best affine candidate on this window.
        let j = if p * period <= b { 0 } else { k };
        let g = |t: f64| p * (t - j as f64 * period) + l + j as f64 * b;
        let g0 = g(t0); // right limit at t0
        if g0 >= ceil_v {
            segments.push(Segment::new(t0, ceil_v, 0.0));
        } else {
            segments.push(Segment::new(t0, g0, p));
            if p > 0.0 {
                let tx = t0 + (ceil_v - g0) / p;
                if tx < t1 - TIME_TOL {
                    segments.push(Segment::new(tx, ceil_v, 0.0));
                }
            }
        }
    }
    // Lower-bound tail of slope min(p, b/T) anchored at the horizon.
    let anchor_t = (periods + 1) as f64 * period;
    let mut segments = canonicalize(segments);
    let anchor_v = segments.last().unwrap().extend(anchor_t);
    let tail_rate = p.min(b / period);
    segments.push(Segment::new(anchor_t, anchor_v, tail_rate));
    let segments = canonicalize(segments);
    Curve::new(0.0, segments, CurveKind::Composite, Some(anchor_t))
}

/// Sub-additive closure `f* = inf { f^1, f^2, ... }` (iterated
/// self-convolutions).
///
/// Concave arrival curves and staircases are already sub-additive, so they
/// are their own closure. For `min(affine, staircase)` the factorization
/// `(f ^ g)* = f* x g*` applies and the result is the convolution of the
/// two factors. Other shapes are rejected.
pub fn subadditive_closure(c: &Curve) -> Result<Curve, CurveError> {
    if c.is_delta_zero() {
        return Ok(c.clone());
    }
    match &c.kind {
        CurveKind::Staircase { .. } => Ok(c.clone()),
        CurveKind::MinAffineStaircase {
            rate,
            offset,
            burst,
            period,
        } => {
            // Preserve the horizon the composite was built with.
            let periods = match c.exact_until {
                Some(h) => ((h / period).round() as usize).saturating_sub(1).max(1),
                None => DEFAULT_STAIRCASE_PERIODS,
            };
            convolve(
                &Curve::affine(*rate, *offset),
                &Curve::staircase_with_horizon(*burst, *period, periods),
            )
        }
        _ if c.is_concave_arrival() => Ok(c.clone()),
        // An affine with a plain offset (value b at 0, not an arrival
        // jump) is sub-additive as well.
        CurveKind::Affine { .. } => Ok(c.clone()),
        _ => Err(CurveError::Unsupported {
            op: "subadditive_closure",
            left: c.kind.name().into(),
            right: "-".into(),
        }),
    }
}

/// Lower pseudo-inverse `inf { u >= 0 : f(u) >= v }` of a non-decreasing
/// curve. Returns `None` when `v` is never reached (flat tail below `v`).
fn lower_pseudo_inverse(f: &Curve, v: f64) -> Option<f64> {
    if v <= f.value_at_zero {
        return Some(0.0);
    }
    let n = f.segments.len();
    for (i, seg) in f.segments.iter().enumerate() {
        if v <= seg.value {
            return Some(seg.start);
        }
        let close = if i + 1 < n {
            seg.extend(f.segments[i + 1].start)
        } else {
            f64::INFINITY
        };
        if v <= close {
            if seg.slope > 0.0 {
                return Some(seg.start + (v - seg.value) / seg.slope);
            }
            // Flat segment that already closes at seg.value < v.
            continue;
        }
    }
    let last = f.segments.last().unwrap();
    if last.slope > 0.0 {
        Some(last.start + (v - last.value) / last.slope)
    } else {
        None
    }
}

/// Horizontal deviation `h(alpha, beta)`, the FIFO delay bound.
///
/// Requires stability: the arrival tail rate must not exceed the service
/// tail rate. At jumps of `alpha` the upper value is used — the worst case
/// for delay. The supremum is found exactly by evaluating the deviation at
/// every breakpoint of `alpha` and at every in-segment time where `alpha`
/// crosses a breakpoint value of `beta` (the deviation is piecewise affine
/// in `t` between those points and non-increasing past the last of them).
pub fn horizontal_deviation(
    alpha: &Curve,
    beta: &Curve,
) -> Result<HorizontalDeviation, CurveError> {
    if alpha.is_delta_zero() || beta.is_delta_zero() {
        return Err(CurveError::Unsupported {
            op: "horizontal_deviation",
            left: alpha.kind.name().into(),
            right: beta.kind.name().into(),
        });
    }
    let alpha_rate = alpha.tail_rate();
    let beta_rate = beta.tail_rate();
    if alpha_rate > beta_rate * (1.0 + VALUE_REL_TOL) {
        return Err(CurveError::UnboundedDelay {
            alpha_rate,
            beta_rate,
        });
    }

    // Candidate times: alpha breakpoints ...
    let mut candidates: Vec<(f64, f64)> = alpha
        .segments
        .iter()
        .map(|s| (s.start, s.value))
        .collect();
    // ... and in-segment crossings of beta's kink values.
    let mut beta_values: Vec<f64> = Vec::with_capacity(2 * beta.segments.len());
    for (i, seg) in beta.segments.iter().enumerate() {
        beta_values.push(seg.value);
        if i + 1 < beta.segments.len() {
            beta_values.push(seg.extend(beta.segments[i + 1].start));
        }
    }
    let n = alpha.segments.len();
    for (i, seg) in alpha.segments.iter().enumerate() {
        if seg.slope <= 0.0 {
            continue;
        }
        let close = if i + 1 < n {
            seg.extend(alpha.segments[i + 1].start)
        } else {
            f64::INFINITY
        };
        for &w in &beta_values {
            if w > seg.value && w <= close {
                let t = seg.start + (w - seg.value) / seg.slope;
                candidates.push((t, w));
            }
        }
    }

    let mut best = HorizontalDeviation {
        value: 0.0,
        witness_t: 0.0,
    };
    for &(t, v) in &candidates {
        let inv = match lower_pseudo_inverse(beta, v) {
            Some(u) => u,
            None => {
                return Err(CurveError::UnboundedDelay {
                    alpha_rate: v,
                    beta_rate: beta.segments.last().unwrap().value,
                })
            }
        };
        let d = (inv - t).max(0.0);
        if d > best.value {
            best = HorizontalDeviation {
                value: d,
                witness_t: t,
            };
        }
    }

    // The answer must not hinge on the truncated part of a curve.
    for (curve, which) in [(alpha, "alpha"), (beta, "beta")] {
        if let Some(h) = curve.exact_until {
            let _ = which;
            if best.witness_t >= h - TIME_TOL {
                return Err(CurveError::HorizonExceeded {
                    horizon: h,
                    t: best.witness_t,
                });
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GBPS: f64 = 1e9;

    fn assert_close(a: f64, b: f64, rel: f64) {
        let scale = a.abs().max(b.abs()).max(1e-30);
        assert!(
            (a - b).abs() <= rel * scale,
            "expected {a} ~ {b} (rel {rel})"
        );
    }

    #[test]
    fn affine_eval() {
        let c = Curve::affine(GBPS, 6144.0);
        assert_eq!(c.eval(1e-6).unwrap(), 7144.0);
        assert_eq!(c.eval(0.0).unwrap(), 0.0);
        assert!(matches!(
            c.eval(-1.0),
            Err(CurveError::NegativeTime { .. })
        ));
    }

    #[test]
    fn staircase_eval_is_ceiling() {
        let c = Curve::staircase(6144.0, 1e-5);
        assert_eq!(c.eval(0.0).unwrap(), 0.0);
        assert_eq!(c.eval(1.5e-5).unwrap(), 12288.0);
        // Pre-jump value at the period boundary (left continuity).
        assert_eq!(c.eval(1e-5).unwrap(), 6144.0);
        assert_eq!(c.eval(1.0000001e-5).unwrap(), 12288.0);
        assert_eq!(c.upper_value(1e-5), 12288.0);
    }

    #[test]
    fn staircase_eval_beyond_horizon_errors() {
        let c = Curve::staircase_with_horizon(100.0, 1.0, 4);
        assert!(c.eval(4.0).is_ok());
        assert!(matches!(
            c.eval(5.5),
            Err(CurveError::HorizonExceeded { .. })
        ));
    }

    #[test]
    fn minimum_kink_at_crossing() {
        let a = Curve::affine(GBPS, 2048.0);
        let b = Curve::affine(5e8, 6144.0);
        let m = minimum(&a, &b).unwrap();
        // pt + l = rt + b  =>  t = (b - l)/(p - r)
        let kink = (6144.0 - 2048.0) / (GBPS - 5e8);
        assert_close(kink, 8.192e-6, 1e-12);
        assert_eq!(m.segments().len(), 2);
        assert_close(m.segments()[1].start, kink, 1e-12);
        assert!(matches!(m.kind(), CurveKind::ConcaveMinOfAffines));
        // Below the kink the fast affine wins, above it the slow one.
        assert_close(m.eval(4e-6).unwrap(), GBPS * 4e-6 + 2048.0, 1e-12);
        assert_close(m.eval(1e-5).unwrap(), 5e8 * 1e-5 + 6144.0, 1e-12);
    }

    #[test]
    fn minimum_is_idempotent() {
        let c = Curve::affine(GBPS, 2048.0);
        assert_eq!(minimum(&c, &c).unwrap(), c);
        let s = Curve::staircase(6144.0, 1e-5);
        let m = minimum(&s, &s).unwrap();
        for i in 0..60 {
            let t = i as f64 * 2.9e-6;
            if t <= s.exact_until().unwrap() {
                assert_close(m.eval(t).unwrap(), s.eval(t).unwrap(), 1e-12);
            }
        }
    }

    #[test]
    fn minimum_dominated_slope() {
        let a = Curve::affine(1e9, 0.0);
        let b = Curve::affine(2e9, 0.0);
        let m = minimum(&a, &b).unwrap();
        assert_eq!(m, a);
        assert!(matches!(m.kind(), CurveKind::Affine { .. }));
    }

    #[test]
    fn convolve_identity() {
        let c = Curve::affine(GBPS, 2048.0);
        assert_eq!(convolve(&c, &Curve::delta_zero()).unwrap(), c);
        assert_eq!(convolve(&Curve::delta_zero(), &c).unwrap(), c);
    }

    #[test]
    fn convolve_concave_reduces_to_minimum() {
        let a = Curve::affine(GBPS, 2048.0);
        let b = Curve::affine(5e8, 6144.0);
        let conv = convolve(&a, &b).unwrap();
        let min = minimum(&a, &b).unwrap();
        for i in 0..200 {
            let t = i as f64 * 1e-7;
            assert_close(conv.eval(t).unwrap(), min.eval(t).unwrap(), 1e-12);
        }
    }

    #[test]
    fn convolve_affine_staircase_value() {
        let f = Curve::affine(GBPS, 2048.0);
        let k = Curve::staircase(6144.0, 1e-5);
        let c = convolve(&f, &k).unwrap();
        // At one period the staircase term (s = 0) wins.
        assert_eq!(c.eval(1e-5).unwrap(), 6144.0);
        // Just after zero the affine jump l is the cost of any service.
        assert_close(c.upper_value(0.0), 2048.0, 1e-12);
    }

    /// Brute-force convolution on a grid that includes both curves'
    /// breakpoints (where the left-continuous values dip), so the infimum
    /// is met exactly for piecewise shapes.
    fn convolve_brute(a: &Curve, b: &Curve, t: f64, grid: usize) -> f64 {
        let mut points: Vec<f64> = (0..=grid).map(|i| t * i as f64 / grid as f64).collect();
        for s in a.segments().iter().chain(b.segments().iter()) {
            if s.start <= t {
                points.push(s.start);
                points.push(t - s.start);
            }
        }
        let mut best = f64::INFINITY;
        for &s in &points {
            if !(0.0..=t).contains(&s) {
                continue;
            }
            best = best.min(a.eval_unchecked(s) + b.eval_unchecked(t - s));
        }
        best
    }

    #[test]
    fn convolve_matches_brute_force() {
        let f = Curve::affine(9.6e8, 2048.0);
        let k = Curve::staircase(6144.0, 1.2288e-5);
        let c = convolve(&f, &k).unwrap();
        for i in 1..=120 {
            let t = i as f64 * 1.1e-6;
            if t > c.exact_until().unwrap() {
                break;
            }
            let brute = convolve_brute(&f, &k, t, 10_000);
            assert_close(c.eval(t).unwrap(), brute, 1e-9);
        }
    }

    #[test]
    fn convolve_commutes() {
        let f = Curve::affine(GBPS, 2048.0);
        let k = Curve::staircase(6144.0, 1e-5);
        let ab = convolve(&f, &k).unwrap();
        let ba = convolve(&k, &f).unwrap();
        for i in 0..150 {
            let t = i as f64 * 1e-6;
            if t > ab.exact_until().unwrap() {
                break;
            }
            assert_close(ab.eval(t).unwrap(), ba.eval(t).unwrap(), 1e-12);
        }
    }

    #[test]
    fn convolve_rejects_unsupported() {
        let k = Curve::staircase(6144.0, 1e-5);
        let err = convolve(&k, &k).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("staircase"), "error names the kinds: {msg}");
    }

    #[test]
    fn closure_fixed_points() {
        let concave = Curve::concave_min_of_affines(&[(GBPS, 2048.0), (5e8, 6144.0)]).unwrap();
        assert_eq!(subadditive_closure(&concave).unwrap(), concave);
        let stair = Curve::staircase(6144.0, 1e-5);
        assert_eq!(subadditive_closure(&stair).unwrap(), stair);
    }

    #[test]
    fn staircase_is_subadditive_on_grid() {
        let stair = Curve::staircase(6144.0, 1e-5);
        let h = stair.exact_until().unwrap();
        for i in 0..60 {
            for j in 0..60 {
                let s = i as f64 * 1.3e-6;
                let t = j as f64 * 1.1e-6;
                if s + t > h {
                    continue;
                }
                let lhs = stair.eval(s + t).unwrap();
                let rhs = stair.eval(s).unwrap() + stair.eval(t).unwrap();
                assert!(lhs <= rhs + 1e-6);
            }
        }
    }

    #[test]
    fn closure_of_min_composite_uses_factorization() {
        let f = Curve::affine(GBPS, 2048.0);
        let k = Curve::staircase(6144.0, 1e-5);
        let m = minimum(&f, &k).unwrap();
        assert!(matches!(m.kind(), CurveKind::MinAffineStaircase { .. }));
        let closed = subadditive_closure(&m).unwrap();
        let direct = convolve(&f, &k).unwrap();
        for i in 0..150 {
            let t = i as f64 * 1e-6;
            if t > closed.exact_until().unwrap() {
                break;
            }
            assert_close(closed.eval(t).unwrap(), direct.eval(t).unwrap(), 1e-12);
        }
        // Closure output is sub-additive on a grid.
        for i in 1..40 {
            for j in 1..40 {
                let s = i as f64 * 1.7e-6;
                let t = j as f64 * 1.3e-6;
                if s + t > closed.exact_until().unwrap() {
                    continue;
                }
                let lhs = closed.eval(s + t).unwrap();
                let rhs = closed.eval(s).unwrap() + closed.eval(t).unwrap();
                assert!(lhs <= rhs + 1e-6, "subadditivity failed at {s}+{t}");
            }
        }
    }

    #[test]
    fn closure_rejects_unsupported() {
        let beta = Curve::rate_latency(GBPS, 1e-6);
        assert!(matches!(
            subadditive_closure(&beta),
            Err(CurveError::Unsupported { .. })
        ));
    }

    #[test]
    fn hdev_token_bucket_against_pure_rate() {
        let alpha = Curve::affine(5e8, 6144.0);
        let beta = Curve::rate_latency(GBPS, 0.0);
        let h = horizontal_deviation(&alpha, &beta).unwrap();
        assert_close(h.value, 6.144e-6, 1e-12); // b / R
        assert_eq!(h.witness_t, 0.0);
    }

    #[test]
    fn hdev_identical_curves_is_zero() {
        let c = Curve::affine(GBPS, 0.0);
        let h = horizontal_deviation(&c, &c).unwrap();
        assert_eq!(h.value, 0.0);
    }

    #[test]
    fn hdev_four_tuple_worked_example() {
        let alpha = Curve::concave_min_of_affines(&[(GBPS, 2048.0), (5e8, 6144.0)]).unwrap();
        let beta = Curve::rate_latency(9e8, 4.2e-6);
        let h = horizontal_deviation(&alpha, &beta).unwrap();
        assert_close(h.value, 7.3858e-6, 1e-4);
        // Witness sits at the kink of the arrival curve.
        assert_close(h.witness_t, 8.192e-6, 1e-9);
    }

    #[test]
    fn hdev_unstable_pair_errors() {
        let alpha = Curve::affine(2e9, 100.0);
        let beta = Curve::rate_latency(1e9, 0.0);
        assert!(matches!(
            horizontal_deviation(&alpha, &beta),
            Err(CurveError::UnboundedDelay { .. })
        ));
    }

    #[test]
    fn hdev_invariant_under_value_scaling() {
        let alpha = Curve::concave_min_of_affines(&[(GBPS, 2048.0), (5e8, 6144.0)]).unwrap();
        let beta = Curve::rate_latency(9e8, 4.2e-6);
        let h0 = horizontal_deviation(&alpha, &beta).unwrap();
        for factor in [0.25, 3.0, 1e4] {
            let h = horizontal_deviation(&alpha.scale_values(factor), &beta.scale_values(factor))
                .unwrap();
            assert_close(h.value, h0.value, 1e-12);
        }
    }

    /// Sampled sup-inf as an independent check of the exact scan.
    fn hdev_brute(alpha: &Curve, beta: &Curve, t_max: f64, grid: usize) -> f64 {
        let step = t_max / grid as f64;
        let mut worst: f64 = 0.0;
        for i in 0..=grid {
            let t = i as f64 * step;
            let v = alpha.upper_value(t);
            // Walk beta forward until it reaches v.
            let mut lo = 0.0f64;
            let mut hi = t_max * 4.0;
            if beta.eval_unchecked(t + hi) < v {
                continue;
            }
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if beta.eval_unchecked(t + mid) >= v {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            worst = worst.max(hi);
        }
        worst
    }

    #[test]
    fn hdev_matches_brute_force_scan() {
        let cases: Vec<(Curve, Curve)> = vec![
            (
                Curve::concave_min_of_affines(&[(GBPS, 2048.0), (5e8, 6144.0)]).unwrap(),
                Curve::rate_latency(9e8, 4.2e-6),
            ),
            (Curve::affine(5e8, 6144.0), Curve::rate_latency(9e8, 4.2e-6)),
            (
                convolve(&Curve::affine(GBPS, 2048.0), &Curve::staircase(6144.0, 1.2288e-5))
                    .unwrap(),
                Curve::rate_latency(9e8, 4.2e-6),
            ),
        ];
        for (alpha, beta) in cases {
            let exact = horizontal_deviation(&alpha, &beta).unwrap();
            let t_max = alpha.exact_until().unwrap_or(6e-5).min(6e-5);
            let grid = 10_000;
            let brute = hdev_brute(&alpha, &beta, t_max, grid);
            let step = t_max / grid as f64;
            assert!(
                (exact.value - brute).abs() <= step + 1e-12,
                "exact {} vs brute {} (step {})",
                exact.value,
                brute,
                step
            );
        }
    }

    #[test]
    fn operation_outputs_satisfy_curve_invariants() {
        let f = Curve::affine(GBPS, 2048.0);
        let k = Curve::staircase(6144.0, 1e-5);
        let outputs = [
            minimum(&f, &k).unwrap(),
            convolve(&f, &k).unwrap(),
            minimum(&f, &Curve::affine(5e8, 6144.0)).unwrap(),
        ];
        for c in outputs {
            // Re-validating through the constructor checks ordering,
            // slopes and jump direction.
            Curve::new(
                c.value_at_zero(),
                c.segments().to_vec(),
                c.kind().clone(),
                c.exact_until(),
            )
            .unwrap();
        }
    }
}
