//! Training losses: mean squared error (NN1) and mean absolute error (NN2).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    Mse,
    Mae,
}

impl Loss {
    pub fn name(self) -> &'static str {
        match self {
            Loss::Mse => "mse",
            Loss::Mae => "mae",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "mse" => Some(Loss::Mse),
            "mae" => Some(Loss::Mae),
            _ => None,
        }
    }

    /// Mean over output elements.
    pub fn value(self, predicted: &[f64], actual: &[f64]) -> f64 {
        assert_eq!(predicted.len(), actual.len(), "loss length mismatch");
        let n = predicted.len() as f64;
        let sum: f64 = predicted
            .iter()
            .zip(actual)
            .map(|(p, a)| match self {
                Loss::Mse => (p - a) * (p - a),
                Loss::Mae => (p - a).abs(),
            })
            .sum();
        sum / n
    }

    /// Gradient with respect to each prediction; MAE uses sign(0) = 0.
    pub fn gradient(self, predicted: &[f64], actual: &[f64]) -> Vec<f64> {
        assert_eq!(predicted.len(), actual.len(), "loss length mismatch");
        let n = predicted.len() as f64;
        predicted
            .iter()
            .zip(actual)
            .map(|(p, a)| match self {
                Loss::Mse => 2.0 * (p - a) / n,
                Loss::Mae => {
                    let d = p - a;
                    if d > 0.0 {
                        1.0 / n
                    } else if d < 0.0 {
                        -1.0 / n
                    } else {
                        0.0
                    }
                }
            })
            .collect()
    }
}
