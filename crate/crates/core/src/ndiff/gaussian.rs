use std::f64::consts::PI;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use super::NdError;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const TANH_EPS: f64 = 1e-6;

/// Closed action interval the squashed sample is mapped into.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionBounds {
    pub low: f64,
    pub high: f64,
}

impl ActionBounds {
    pub fn mid(&self) -> f64 {
        0.5 * (self.high + self.low)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.high - self.low)
    }

    /// Maps a value of the pre-squash Gaussian to the action interval.
    pub fn squash(&self, u: f64) -> f64 {
        self.mid() + self.half_width() * u.tanh()
    }
}

/// Reparameterised tanh-Gaussian sample on the graph.
///
/// `mean`, `log_std` and `noise` are `n x 1`. Returns `(action, log_prob)`,
/// both `n x 1`; `log_std` is clamped to `[-20, 2]` first. The log-density
/// includes the tanh Jacobian (with a `1e-6` guard) and the affine map to
/// the bounds.
pub fn squashed_gaussian_action(
    g: &mut Graph,
    mean: Var,
    log_std: Var,
    noise: &Tensor,
    bounds: ActionBounds,
) -> Result<(Var, Var), NdError> {
    if g.value(mean).shape() != noise.shape() || g.value(log_std).shape() != noise.shape() {
        return Err(NdError::Shape("mean, log_std and noise must share a shape".into()));
    }
    let half = bounds.half_width();
    let ls = g.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX)?;
    let std = g.exp(ls)?;
    let eps = g.constant(noise.clone())?;
    let spread = g.mul(std, eps)?;
    let u = g.add(mean, spread)?;
    let y = g.tanh(u)?;
    let scaled = g.scale(y, half)?;
    let action = g.offset(scaled, bounds.mid())?;

    let base = noise.map(|z| -0.5 * z * z - 0.5 * (2.0 * PI).ln() - half.ln());
    let base = g.constant(base)?;
    let y2 = g.square(y)?;
    let one_minus = g.scale(y2, -1.0)?;
    let one_minus = g.offset(one_minus, 1.0 + TANH_EPS)?;
    let log_jac = g.log(one_minus)?;
    let lp = g.sub(base, ls)?;
    let log_prob = g.sub(lp, log_jac)?;
    Ok((action, log_prob))
}

/// Scalar version of [`squashed_gaussian_action`] for acting.
pub fn squashed_sample(mean: f64, log_std: f64, noise: f64, bounds: ActionBounds) -> Result<(f64, f64), NdError> {
    if !(mean.is_finite() && log_std.is_finite() && noise.is_finite()) {
        return Err(NdError::NonFinite("squashed sample input"));
    }
    let ls = log_std.clamp(LOG_STD_MIN, LOG_STD_MAX);
    let u = mean + ls.exp() * noise;
    let y = u.tanh();
    let action = bounds.mid() + bounds.half_width() * y;
    // same operation order as the graph version
    let base = -0.5 * noise * noise - 0.5 * (2.0 * PI).ln() - bounds.half_width().ln();
    let log_prob = base - ls - (-(y * y) + (1.0 + TANH_EPS)).ln();
    Ok((action, log_prob))
}
