use super::{ModelParams, ParamGrads};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments for a list of parameter buffers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update. Weight decay is added to the gradient before the
    /// moment update: `g ← g + wd · θ`.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64, weight_decay: f64) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter buffer");
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - ADAM_BETA1.powi(t);
        let bias2 = 1.0 - ADAM_BETA2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            assert_eq!(p.len(), g.len(), "gradient shape");
            for j in 0..p.len() {
                let grad = g[j] + weight_decay * p[j];
                m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * grad;
                v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * grad * grad;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Adam step over every ω tensor, using the optimizer state held by `params`.
pub fn adam_step(params: &mut ModelParams, grads: &ParamGrads, lr: f64, weight_decay: f64) {
    params.apply_adam(grads, lr, weight_decay);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_no_decay_is_noop() {
        let mut s = AdamState::default();
        let mut p = vec![1.5, -2.0];
        s.update(&mut [&mut p], &[&[0.0, 0.0]], 0.1, 0.0);
        assert_eq!(p, vec![1.5, -2.0]);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        let mut s = AdamState::default();
        let mut p = vec![1.0];
        let g = 0.3;
        s.update(&mut [&mut p], &[&[g]], 0.005, 0.0);
        // m̂ = g, v̂ = g², step = lr · g / (|g| + eps)
        let expected = 1.0 - 0.005 * g / (g.abs() + ADAM_EPS);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn second_step_matches_hand_computation() {
        let mut s = AdamState::default();
        let mut p = vec![0.0];
        s.update(&mut [&mut p], &[&[1.0]], 0.1, 0.0);
        s.update(&mut [&mut p], &[&[-2.0]], 0.1, 0.0);
        let m = 0.9 * 0.1 + 0.1 * -2.0;
        let v = 0.999 * 0.001 + 0.001 * 4.0;
        let m_hat = m / (1.0 - 0.81);
        let v_hat = v / (1.0 - 0.999f64.powi(2));
        let first = -0.1 / (1.0 + ADAM_EPS);
        let expected = first - 0.1 * m_hat / (v_hat.sqrt() + ADAM_EPS);
        assert!((p[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn decay_alone_shrinks_toward_zero() {
        let mut s = AdamState::default();
        let mut p = vec![3.0, -3.0];
        for _ in 0..10 {
            s.update(&mut [&mut p], &[&[0.0, 0.0]], 0.01, 0.001);
        }
        assert!(p[0] < 3.0 && p[0] > 0.0);
        assert!(p[1] > -3.0 && p[1] < 0.0);
    }
}
