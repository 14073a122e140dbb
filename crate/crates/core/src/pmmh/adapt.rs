use super::proposal::{cholesky, Matrix3};

/// Adaptive scaling within adaptive Metropolis: a global log-scale driven
/// towards the target acceptance rate and a running covariance of the
/// chain in unconstrained coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveState {
    log_scale: f64,
    mean: [f64; 3],
    cov: Matrix3,
    target: f64,
    decay: f64,
    jitter_events: usize,
}

/// Relative diagonal jitter added when the covariance stops being positive definite.
const JITTER: f64 = 1e-8;

impl AdaptiveState {
    pub fn new(start: [f64; 3], initial_sd: [f64; 3], target: f64, decay: f64) -> Self {
        let mut cov = [[0.0; 3]; 3];
        for i in 0..3 {
            cov[i][i] = initial_sd[i] * initial_sd[i];
        }
        AdaptiveState {
            log_scale: 0.0,
            mean: start,
            cov,
            target,
            decay,
            jitter_events: 0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn covariance(&self) -> Matrix3 {
        self.cov
    }

    pub fn jitter_events(&self) -> usize {
        self.jitter_events
    }

    /// Step size at iteration `i` (1-based). The offset keeps it below one so
    /// the covariance recursion never collapses onto a single outer product.
    pub fn step_size(&self, i: usize) -> f64 {
        ((i + 1) as f64).powf(-self.decay)
    }

    /// Cholesky factor of the current covariance, jittering the diagonal
    /// until it is positive definite.
    pub fn factor(&mut self) -> Matrix3 {
        if let Some(l) = cholesky(&self.cov) {
            return l;
        }
        let mut bump = JITTER * (0..3).map(|i| self.cov[i][i].abs()).fold(1e-12, f64::max);
        loop {
            self.jitter_events += 1;
            for i in 0..3 {
                self.cov[i][i] += bump;
            }
            if let Some(l) = cholesky(&self.cov) {
                return l;
            }
            bump *= 10.0;
        }
    }

    /// Update after iteration `i` with acceptance probability `alpha` and
    /// the chain's current state `u`.
    pub fn update(&mut self, i: usize, alpha: f64, u: &[f64; 3]) {
        let eta = self.step_size(i);
        self.log_scale += eta * (alpha - self.target);
        let d: [f64; 3] = std::array::from_fn(|k| u[k] - self.mean[k]);
        for k in 0..3 {
            self.mean[k] += eta * d[k];
        }
        for r in 0..3 {
            for c in 0..3 {
                self.cov[r][c] += eta * (d[r] * d[c] - self.cov[r][c]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_moves_with_acceptance() {
        let mut s = AdaptiveState::new([0.0; 3], [0.1; 3], 0.1, 0.66);
        let mut prev = s.scale();
        for i in 1..50 {
            s.update(i, 1.0, &[0.0; 3]);
            assert!(s.scale() > prev);
            prev = s.scale();
        }
        let mut s = AdaptiveState::new([0.0; 3], [0.1; 3], 0.1, 0.66);
        let mut prev = s.scale();
        for i in 1..50 {
            s.update(i, 0.0, &[0.0; 3]);
            assert!(s.scale() < prev);
            prev = s.scale();
        }
    }

    #[test]
    fn step_size_diminishes() {
        let s = AdaptiveState::new([0.0; 3], [0.1; 3], 0.1, 0.66);
        assert!(s.step_size(1) < 1.0);
        assert!(s.step_size(10_000) < s.step_size(100));
    }

    #[test]
    fn stuck_chain_triggers_jitter() {
        let mut s = AdaptiveState::new([0.0; 3], [0.1; 3], 0.1, 1.0);
        for i in 1..5000 {
            s.update(i, 0.0, &[0.0; 3]);
        }
        // Covariance has decayed towards zero but stays factorable.
        let l = s.factor();
        assert!(l[0][0] > 0.0);
        let mut degenerate = AdaptiveState::new([0.0; 3], [0.1; 3], 0.1, 0.66);
        degenerate.cov = [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        degenerate.factor();
        assert!(degenerate.jitter_events() > 0);
    }
}
