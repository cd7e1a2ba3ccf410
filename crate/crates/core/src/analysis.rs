//! Vanishing-gradient analysis on a one-neuron-per-layer chain network.
//!
//! Each layer contributes a factor `f'(w h) w` to the backpropagated
//! gradient. For PELU on negative `h` and `w >= b/a`, the set of `h` where
//! that factor is at least one is an interval of length
//! `l(w) = |ln(b / (a w))| * b / w`, maximised at `w* = e b / a` with
//! `l* = a / e`. This module evaluates the closed form, scans it by brute
//! force, and measures the interval independently by root finding.

use alloc::vec::Vec;
use core::f64::consts::E;

use crate::activations::{pelu_derivative, Nonlinearity};
use crate::error::{invalid, Result};

/// Per-layer gradient factor `f'(w h) * w` for PELU.
pub fn amplification(w: f64, h: f64, a: f64, b: f64) -> f64 {
    pelu_derivative(w * h, a, b) * w
}

fn check_positive(a: f64, b: f64) -> Result<()> {
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(invalid(alloc::format!(
            "a and b must be positive, got a = {a}, b = {b}"
        )))
    }
}

/// Closed-form length of the negative-`h` interval where the amplification
/// is at least one. Requires `w >= b/a`.
pub fn interval_length(w: f64, a: f64, b: f64) -> Result<f64> {
    check_positive(a, b)?;
    let threshold = b / a;
    if !(w >= threshold) {
        return Err(invalid(alloc::format!(
            "interval length needs w >= b/a = {threshold}, got {w}"
        )));
    }
    Ok(libm::fabs(libm::log(threshold / w)) * (b / w))
}

/// `(w*, l*) = (e b / a, a / e)`.
pub fn optimal_weight(a: f64, b: f64) -> Result<(f64, f64)> {
    check_positive(a, b)?;
    Ok((E * b / a, a / E))
}

/// Bracketing tolerance of the empirical root search, on the residual
/// `amplification - 1`.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-12;

/// Interval length measured directly: bisection for the negative `h` where
/// `amplification(w, h) = 1`. Amplification is increasing in `h` on `h < 0`
/// for `w > 0`, so the root is unique.
pub fn empirical_interval_length(w: f64, a: f64, b: f64) -> Result<f64> {
    check_positive(a, b)?;
    if !(w >= b / a) {
        return Err(invalid(alloc::format!(
            "empirical interval needs w >= b/a, got {w}"
        )));
    }
    let residual = |h: f64| amplification(w, h, a, b) - 1.0;
    // Approaching zero from below the factor tends to w a / b >= 1.
    let mut hi = -0.0;
    if residual(-f64::MIN_POSITIVE) <= 0.0 {
        return Ok(0.0);
    }
    let mut lo = -1.0;
    while residual(lo) >= 0.0 {
        hi = lo;
        lo *= 2.0;
        if lo < -1e12 {
            return Err(invalid("empirical interval: no sign change found"));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid);
        if libm::fabs(r) <= ROOT_RESIDUAL_TOL || mid == lo || mid == hi {
            return Ok(-mid);
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(-0.5 * (lo + hi))
}

/// Evenly spaced weights `lo, ..., hi` (inclusive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl WeightGrid {
    /// `[b/a, 10 e b/a]` with `points` samples.
    pub fn default_for(a: f64, b: f64, points: usize) -> Self {
        Self {
            lo: b / a,
            hi: 10.0 * E * b / a,
            points,
        }
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    pub fn weight(&self, i: usize) -> f64 {
        if i + 1 == self.points {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(|i| self.weight(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForce {
    pub w_best: f64,
    pub l_best: f64,
    /// Grid spacing; `w_best` is within one step of the true optimum.
    pub resolution: f64,
    /// Largest `|closed form - root finding|` over the grid.
    pub max_empirical_gap: f64,
    /// Whether `l(w)` over the grid rises and then falls with no second rise.
    pub single_peak: bool,
}

/// Scans `interval_length` over `grid` and cross-checks every point against
/// [`empirical_interval_length`].
pub fn brute_force_optimum(a: f64, b: f64, grid: &WeightGrid) -> Result<BruteForce> {
    check_positive(a, b)?;
    if grid.points < 3 || !(grid.lo < grid.hi) {
        return Err(invalid("grid needs at least three points and lo < hi"));
    }
    if grid.lo < b / a {
        return Err(invalid(alloc::format!("grid starts below b/a = {}", b / a)));
    }
    let (w_star, _) = optimal_weight(a, b)?;
    if !(grid.lo <= w_star && w_star <= grid.hi) {
        return Err(invalid(alloc::format!(
            "grid [{}, {}] does not bracket the optimum {w_star}",
            grid.lo,
            grid.hi
        )));
    }
    let mut lengths = Vec::with_capacity(grid.points);
    let mut best = (grid.lo, f64::NEG_INFINITY);
    let mut gap: f64 = 0.0;
    for w in grid.iter() {
        let l = interval_length(w, a, b)?;
        gap = gap.max(libm::fabs(l - empirical_interval_length(w, a, b)?));
        if l > best.1 {
            best = (w, l);
        }
        lengths.push(l);
    }
    Ok(BruteForce {
        w_best: best.0,
        l_best: best.1,
        resolution: grid.step(),
        max_empirical_gap: gap,
        single_peak: single_peak(&lengths),
    })
}

/// True when `values` is non-decreasing up to its maximum and non-increasing
/// after it.
pub fn single_peak(values: &[f64]) -> bool {
    let Some(peak) = values
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
    else {
        return true;
    };
    values[..=peak].windows(2).all(|p| p[0] <= p[1])
        && values[peak..].windows(2).all(|p| p[0] >= p[1])
}

/// Scalar chain `z_0 = x`, `h_l = w_l z_{l-1}`, `z_l = f(h_l)`, with loss
/// `E = (z_L - y)^2 / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainNet {
    pub weights: Vec<f64>,
    pub activation: Nonlinearity,
}

/// Values recorded during a chain forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    /// `h_1..h_L`.
    pub pre: Vec<f64>,
    /// `z_0..z_L`.
    pub post: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainGradients {
    /// `dE/dw_k` for `k = 1..L`.
    pub weights: Vec<f64>,
    /// `dE/dh_k` for `k = 1..L`.
    pub pre: Vec<f64>,
}

impl ChainNet {
    pub fn new(weights: Vec<f64>, activation: Nonlinearity) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("chain network needs at least one layer"));
        }
        Ok(Self {
            weights,
            activation,
        })
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn forward(&self, x: f64) -> ChainTrace {
        let mut pre = Vec::with_capacity(self.depth());
        let mut post = Vec::with_capacity(self.depth() + 1);
        post.push(x);
        for &w in &self.weights {
            let h = w * post[post.len() - 1];
            pre.push(h);
            post.push(self.activation.value(h));
        }
        ChainTrace { pre, post }
    }

    pub fn loss(&self, x: f64, y: f64) -> f64 {
        let z = *self.forward(x).post.last().unwrap();
        0.5 * (z - y) * (z - y)
    }

    /// Reverse-mode pass over the whole chain.
    pub fn backprop(&self, x: f64, y: f64) -> ChainGradients {
        let trace = self.forward(x);
        let depth = self.depth();
        let mut weights = alloc::vec![0.0; depth];
        let mut pre = alloc::vec![0.0; depth];
        let mut upstream = trace.post[depth] - y;
        for l in (0..depth).rev() {
            let delta = upstream * self.activation.derivative(trace.pre[l]);
            pre[l] = delta;
            weights[l] = delta * trace.post[l];
            upstream = delta * self.weights[l];
        }
        ChainGradients { weights, pre }
    }

    fn check_layer(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.depth() {
            return Err(invalid(alloc::format!(
                "layer {k} outside 1..={}",
                self.depth()
            )));
        }
        Ok(())
    }

    /// `prod_{j=k+1..L} f'(h_j) w_j`, the factor whose shrinking is the
    /// vanishing gradient.
    pub fn gradient_product(&self, x: f64, k: usize) -> Result<f64> {
        self.check_layer(k)?;
        let trace = self.forward(x);
        Ok((k..self.depth())
            .map(|j| self.activation.derivative(trace.pre[j]) * self.weights[j])
            .product())
    }
}

/// `dE/dw_k` (1-based `k`) by backpropagation.
pub fn chain_gradient(net: &ChainNet, x: f64, y: f64, k: usize) -> Result<f64> {
    net.check_layer(k)?;
    Ok(net.backprop(x, y).weights[k - 1])
}

/// `dE/dw_k` from the closed product
/// `z_{k-1} f'(h_k) [prod_{j>k} f'(h_j) w_j] dE/dz_L`.
pub fn chain_gradient_formula(net: &ChainNet, x: f64, y: f64, k: usize) -> Result<f64> {
    net.check_layer(k)?;
    let trace = net.forward(x);
    let d_loss = trace.post[net.depth()] - y;
    Ok(trace.post[k - 1]
        * net.activation.derivative(trace.pre[k - 1])
        * net.gradient_product(x, k)?
        * d_loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::vec;

    #[test]
    fn amplification_examples() {
        assert_eq!(amplification(1.0, 1.0, 1.0, 1.0), 1.0);
        assert!((amplification(E, 1e-300, 1.0, 1.0) - E).abs() < 1e-15);
        assert!((amplification(1.0, -1.0, 1.0, 1.0) - libm::exp(-1.0)).abs() < 1e-15);
    }

    #[test]
    fn interval_length_examples() {
        assert_eq!(interval_length(0.5 / 2.0, 2.0, 0.5).unwrap(), 0.0);
        assert!((interval_length(E, 1.0, 1.0).unwrap() - 1.0 / E).abs() < 1e-15);
        assert!((interval_length(1.0, 2.0, 0.5).unwrap() - libm::log(4.0) * 0.5).abs() < 1e-15);
        assert!(interval_length(0.9, 1.0, 1.0).is_err());
    }

    #[test]
    fn optimal_weight_examples() {
        let (w, l) = optimal_weight(1.0, 1.0).unwrap();
        assert!(
            (w - core::f64::consts::E).abs() < 1e-12
                && (l - 1.0 / core::f64::consts::E).abs() < 1e-12
        );
        let (w, l) = optimal_weight(2.0, 0.5).unwrap();
        assert!((w - 0.67957).abs() < 1e-5 && (l - 0.73576).abs() < 1e-5);
        let (w2, l2) = optimal_weight(6.0, 1.5).unwrap();
        assert!((w2 - w).abs() < 1e-15 && (l2 - 3.0 * l).abs() < 1e-15);
        assert!(optimal_weight(-1.0, 1.0).is_err());
    }

    #[test]
    fn empirical_matches_closed_form() {
        for &(a, b) in &[(1.0, 1.0), (2.0, 0.5), (0.3, 4.0)] {
            for &scale in &[1.0, 1.5, E, 7.0, 25.0] {
                let w = scale * b / a;
                let closed = interval_length(w, a, b).unwrap();
                let found = empirical_interval_length(w, a, b).unwrap();
                assert!((closed - found).abs() <= 1e-6, "a={a} b={b} w={w}");
            }
        }
    }

    #[test]
    fn grid_scan_finds_e() {
        let grid = WeightGrid {
            lo: 1.0,
            hi: 10.0,
            points: 90_001,
        };
        let bf = brute_force_optimum(1.0, 1.0, &grid).unwrap();
        assert!((bf.w_best - E).abs() <= 1e-4);
        assert!((bf.l_best - 1.0 / E).abs() <= 1e-4);
        assert!(bf.max_empirical_gap <= 1e-6);
        assert!(bf.single_peak);
    }

    #[test]
    fn grid_must_bracket_optimum() {
        let grid = WeightGrid {
            lo: 1.0,
            hi: 2.0,
            points: 100,
        };
        assert!(brute_force_optimum(1.0, 1.0, &grid).is_err());
        let grid = WeightGrid {
            lo: 0.5,
            hi: 5.0,
            points: 100,
        };
        assert!(brute_force_optimum(1.0, 1.0, &grid).is_err());
    }

    #[test]
    fn single_peak_detection() {
        assert!(single_peak(&[0.0, 1.0, 2.0, 1.0, 0.5]));
        assert!(!single_peak(&[0.0, 2.0, 1.0, 1.5, 0.5]));
        assert!(single_peak(&[]));
    }

    #[test]
    fn depth_one_identity_regime() {
        let net = ChainNet::new(vec![0.7], Nonlinearity::Pelu { a: 1.0, b: 1.0 }).unwrap();
        let (x, y) = (2.0, 0.3);
        // z_1 = 1.4, dE/dw_1 = x * (z_1 - y)
        assert!((chain_gradient(&net, x, y, 1).unwrap() - x * (1.4 - y)).abs() < 1e-15);
        assert!(chain_gradient(&net, x, y, 2).is_err());
        assert!(chain_gradient_formula(&net, x, y, 0).is_err());
    }

    #[test]
    fn formula_matches_backprop() {
        let mut rng = Rng::new(31);
        let weights: Vec<f64> = (0..5).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
        let net = ChainNet::new(weights, Nonlinearity::Pelu { a: 1.5, b: 0.8 }).unwrap();
        for k in 1..=5 {
            let bp = chain_gradient(&net, 0.9, -0.4, k).unwrap();
            let f = chain_gradient_formula(&net, 0.9, -0.4, k).unwrap();
            assert!((bp - f).abs() <= 1e-10 * bp.abs().max(f.abs()));
        }
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = Rng::new(2);
        let weights: Vec<f64> = (0..6).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
        let net = ChainNet::new(weights.clone(), Nonlinearity::Pelu { a: 0.7, b: 1.3 }).unwrap();
        let grads = net.backprop(1.1, 0.2).weights;
        for k in 0..6 {
            let mut plus = weights.clone();
            let mut minus = weights.clone();
            plus[k] += 1e-6;
            minus[k] -= 1e-6;
            let lp = ChainNet::new(plus, net.activation).unwrap().loss(1.1, 0.2);
            let lm = ChainNet::new(minus, net.activation).unwrap().loss(1.1, 0.2);
            let fd = (lp - lm) / 2e-6;
            assert!((fd - grads[k]).abs() <= 1e-6 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn backpropagated_signal_vanishes_with_depth() {
        let net = ChainNet::new(vec![0.5; 20], Nonlinearity::Relu).unwrap();
        let g = net.backprop(1.0, -1.0);
        assert!(g.pre[0].abs() < g.pre[18].abs());
        // Each layer halves the signal.
        assert!((g.pre[0] / g.pre[18] - libm::pow(0.5, 18.0)).abs() < 1e-18);
        assert!(net.gradient_product(1.0, 1).unwrap() < net.gradient_product(1.0, 19).unwrap());
    }
}
