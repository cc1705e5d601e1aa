//! Closed-form Rayleigh point-process quantities.
//!
//! Each user-item dimension carries the intensity `lambda(t | t') =
//! alpha * (t - t')` where `alpha = exp(f_u . g_i)` is the compatibility of
//! the embeddings in force since `t'`, the last time either embedding
//! changed. Everything downstream (density, survival mass, expected return
//! time) follows from that linear intensity in closed form.

use crate::event::EventLog;
use crate::math;
use crate::state::EmbeddingTimeline;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

/// Inner products are clamped to this magnitude before exponentiation so a
/// runaway compatibility cannot overflow `exp`. Clamp events are counted and
/// surfaced by the training trace.
pub const INNER_PRODUCT_CAP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProcessError {
    /// Query time precedes the segment start `t'`.
    NegativeLapse { t: f64, t_prime: f64 },
    /// `alpha` must be strictly positive.
    NonPositiveAlpha(f64),
}

impl fmt::Display for ProcessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessError::NegativeLapse { t, t_prime } => {
                write!(f, "query time {t} precedes segment start {t_prime}")
            }
            ProcessError::NonPositiveAlpha(a) => write!(f, "nonpositive rate alpha = {a}"),
        }
    }
}

impl core::error::Error for ProcessError {}

/// `exp(clamp(f . g))` plus whether the clamp fired.
pub fn compatibility(f: &[f64], g: &[f64]) -> (f64, bool) {
    let raw = crate::linalg::dot(f, g);
    let clamped = raw.clamp(-INNER_PRODUCT_CAP, INNER_PRODUCT_CAP);
    (math::exp(clamped), clamped != raw)
}

/// `lambda(t | t') = alpha * (t - t')`.
pub fn intensity(alpha: f64, t_prime: f64, t: f64) -> Result<f64, ProcessError> {
    if alpha <= 0.0 {
        return Err(ProcessError::NonPositiveAlpha(alpha));
    }
    if t < t_prime {
        return Err(ProcessError::NegativeLapse { t, t_prime });
    }
    Ok(alpha * (t - t_prime))
}

/// Conditional density of the next event at `t` given quiescence since `t'`:
/// `alpha * (t - t') * exp(-alpha * (t - t')^2 / 2)` (a Rayleigh density in
/// the lapse).
pub fn conditional_density(alpha: f64, t_prime: f64, t: f64) -> Result<f64, ProcessError> {
    if alpha <= 0.0 {
        return Err(ProcessError::NonPositiveAlpha(alpha));
    }
    if t < t_prime {
        return Err(ProcessError::NegativeLapse { t, t_prime });
    }
    let lapse = t - t_prime;
    Ok(alpha * lapse * math::exp(-alpha * lapse * lapse / 2.0))
}

/// Expected next-event time: `t' + sqrt(pi / (2 alpha))`, the Rayleigh mean
/// lapse offset from the segment start.
pub fn expected_return_time(alpha: f64, t_prime: f64) -> Result<f64, ProcessError> {
    if alpha <= 0.0 {
        return Err(ProcessError::NonPositiveAlpha(alpha));
    }
    Ok(t_prime + math::sqrt(PI / (2.0 * alpha)))
}

/// One dimension's intensity parameters: the compatibility in force and the
/// start of the current linear segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DimensionIntensity {
    pub alpha: f64,
    pub t_prime: f64,
}

impl DimensionIntensity {
    pub fn intensity_at(&self, t: f64) -> Result<f64, ProcessError> {
        intensity(self.alpha, self.t_prime, t)
    }

    pub fn density_at(&self, t: f64) -> Result<f64, ProcessError> {
        conditional_density(self.alpha, self.t_prime, t)
    }

    pub fn expected_time(&self) -> Result<f64, ProcessError> {
        expected_return_time(self.alpha, self.t_prime)
    }
}

/// One linear-intensity span of a survival integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalSegment {
    pub start: f64,
    pub end: f64,
    pub alpha: f64,
    /// `alpha * (end - start)^2 / 2`.
    pub contribution: f64,
}

/// Decomposition of `int lambda` over a window into per-segment pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalBreakdown {
    pub segments: Vec<SurvivalSegment>,
    pub total: f64,
}

/// Integrates the `(user, item)` intensity over `[start, end]`.
///
/// The window is cut at every event time involving `user` or `item`; within
/// each piece the embeddings are frozen and the lapse clock restarts at the
/// piece start, so the piece integrates to `alpha * len^2 / 2`. `alpha` uses
/// the post-update (right-continuous) snapshots at the piece start.
pub fn survival_integral(
    log: &EventLog,
    users: &EmbeddingTimeline,
    items: &EmbeddingTimeline,
    user: usize,
    item: usize,
    start: f64,
    end: f64,
) -> SurvivalBreakdown {
    let times = log.relevant_times(user, item, start, end);
    let mut segments = Vec::with_capacity(times.len().saturating_sub(1));
    let mut total = 0.0;
    for pair in times.windows(2) {
        let (seg_start, seg_end) = (pair[0], pair[1]);
        let f = users.at(user, seg_start);
        let g = items.at(item, seg_start);
        let (alpha, _) = compatibility(f, g);
        let len = seg_end - seg_start;
        let contribution = alpha * len * len / 2.0;
        total += contribution;
        segments.push(SurvivalSegment {
            start: seg_start,
            end: seg_end,
            alpha,
            contribution,
        });
    }
    SurvivalBreakdown { segments, total }
}
