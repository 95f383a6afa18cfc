//! Adam over a flat parameter vector, with the epsilon added outside the
//! square root (the convention of the framework the hyperparameters come
//! from, where eps = 1e-7 by default).

#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u64,
}

impl Adam {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64, dim: usize) -> Self {
        assert!(learning_rate > 0.0 && epsilon > 0.0, "bad Adam constants");
        assert!((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2));
        Adam {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "Adam dimension mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient dimension mismatch");
        self.steps += 1;
        let bc1 = 1.0 - self.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - self.beta2.powi(self.steps as i32);
        for j in 0..params.len() {
            let g = grads[j];
            self.m[j] = self.beta1 * self.m[j] + (1.0 - self.beta1) * g;
            self.v[j] = self.beta2 * self.v[j] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[j] / bc1;
            let v_hat = self.v[j] / bc2;
            params[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}
