//! Central finite-difference check of every registered parameter gradient.
//!
//! The loss is softmax cross-entropy in train mode. Each evaluation runs on a
//! fresh clone of the network, so dropout masks and batch statistics are the
//! same for the analytic pass and every perturbed pass.

use alloc::vec::Vec;

use crate::error::Result;
use crate::layers::{softmax_xent, Mode, Network, ParamGroup};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Gradients smaller than this are compared in absolute terms: the
/// denominator of the relative error never drops below it. A central
/// difference with a 1e-6 step on an O(1) loss carries a few times 1e-10 of
/// rounding noise, so with a 1e-6 tolerance the floor has to sit well above
/// 1e-4 or exactly-zero gradients (a bias feeding batch norm) fail on noise
/// alone.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    libm::fabs(analytic - numeric)
        / libm::fabs(analytic)
            .max(libm::fabs(numeric))
            .max(RELATIVE_ERROR_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Check at most this many randomly chosen entries per parameter tensor.
    pub max_entries: Option<usize>,
    pub seed: u64,
    /// Test hook: perturb the analytic gradient of this group before
    /// comparing.
    pub corrupt: Option<ParamGroup>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            max_entries: None,
            seed: 0,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub layer: usize,
    pub group: ParamGroup,
    pub checked: usize,
    pub max_rel_err: f64,
}

impl GroupReport {
    pub fn name(&self) -> alloc::string::String {
        alloc::format!("{}.{}", self.layer, self.group.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub groups: Vec<GroupReport>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_rel_err <= self.tolerance)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GroupReport> {
        self.groups
            .iter()
            .filter(move |g| !(g.max_rel_err <= self.tolerance))
    }

    pub fn max_rel_err(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_err)
            .fold(0.0, f64::max)
    }
}

fn loss_of(net: &Network, x: &Tensor, labels: &[usize]) -> Result<f64> {
    let mut net = net.clone();
    let logits = net.forward(x, Mode::Train)?;
    Ok(softmax_xent(&logits, labels)?.0)
}

pub fn check_network(
    net: &Network,
    x: &Tensor,
    labels: &[usize],
    opts: &GradcheckOptions,
) -> Result<GradcheckReport> {
    let mut analytic_net = net.clone();
    let logits = analytic_net.forward(x, Mode::Train)?;
    let (_, dlogits) = softmax_xent(&logits, labels)?;
    analytic_net.backward(&dlogits)?;
    let gradients = analytic_net.gradients();

    let mut rng = Rng::new(opts.seed);
    let mut groups = Vec::with_capacity(gradients.len());
    for (pi, grad) in gradients.iter().enumerate() {
        let n = grad.values.len();
        let entries: Vec<usize> = match opts.max_entries {
            Some(m) if m < n => rng.permutation(n).into_iter().take(m).collect(),
            _ => (0..n).collect(),
        };
        let mut max_rel_err: f64 = 0.0;
        for (ei, &e) in entries.iter().enumerate() {
            let mut perturbed = net.clone();
            let original = perturbed.params()[pi].value[e];
            perturbed.params()[pi].value[e] = original + opts.step;
            let plus = loss_of(&perturbed, x, labels)?;
            perturbed.params()[pi].value[e] = original - opts.step;
            let minus = loss_of(&perturbed, x, labels)?;
            let numeric = (plus - minus) / (2.0 * opts.step);

            let mut analytic = grad.values[e];
            if opts.corrupt == Some(grad.group) && ei == 0 {
                analytic += 1e-3 * (1.0 + libm::fabs(analytic));
            }
            let err = relative_error(analytic, numeric);
            max_rel_err = if err.is_nan() {
                f64::INFINITY
            } else {
                max_rel_err.max(err)
            };
        }
        groups.push(GroupReport {
            layer: grad.layer,
            group: grad.group,
            checked: entries.len(),
            max_rel_err,
        });
    }
    Ok(GradcheckReport {
        groups,
        tolerance: opts.tolerance,
    })
}
