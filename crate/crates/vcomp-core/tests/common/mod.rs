//! Shared test support: the fixed smooth verification critic used to
//! exercise gradient flow, and small synthetic-data helpers.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vcomp_core::grid::ScalarGrid;
use vcomp_core::style::Critic;

/// Two-layer fully connected scalar network with tanh activations and
/// hand-seeded weights. Smooth everywhere, with an analytic gradient for
/// cross-checking the numeric differentiation path.
pub struct MlpCritic {
    input_dim: usize,
    hidden: usize,
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

impl MlpCritic {
    pub fn seeded(input_dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (input_dim as f64).sqrt();
        let w1 = (0..hidden)
            .map(|_| {
                (0..input_dim)
                    .map(|_| rng.random_range(-scale..scale))
                    .collect()
            })
            .collect();
        let b1 = (0..hidden).map(|_| rng.random_range(-0.1..0.1)).collect();
        let w2 = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b2 = rng.random_range(-0.1..0.1);
        Self {
            input_dim,
            hidden,
            w1,
            b1,
            w2,
            b2,
        }
    }

    fn preactivations(&self, x: &ScalarGrid) -> Vec<f64> {
        let flat: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
        assert_eq!(flat.len(), self.input_dim, "critic input size mismatch");
        (0..self.hidden)
            .map(|j| {
                self.w1[j]
                    .iter()
                    .zip(&flat)
                    .map(|(w, v)| w * v)
                    .sum::<f64>()
                    + self.b1[j]
            })
            .collect()
    }
}

impl Critic for MlpCritic {
    fn value(&self, x: &ScalarGrid) -> f64 {
        let z = self.preactivations(x);
        z.iter()
            .zip(&self.w2)
            .map(|(zj, v)| v * zj.tanh())
            .sum::<f64>()
            + self.b2
    }

    fn gradient(&self, x: &ScalarGrid) -> Option<ScalarGrid> {
        let z = self.preactivations(x);
        let mut grad = vec![0.0f64; self.input_dim];
        for ((zj, v), row) in z.iter().zip(&self.w2).zip(&self.w1) {
            let gate = v * (1.0 - zj.tanh().powi(2));
            for (g, w) in grad.iter_mut().zip(row) {
                *g += gate * w;
            }
        }
        Some(ScalarGrid::from_vec(
            x.width(),
            x.height(),
            grad.into_iter().map(|v| v as f32).collect(),
        ))
    }
}

/// Wrapper hiding the analytic gradient so `gradient_penalty` exercises
/// its central-finite-difference fallback.
pub struct NumericOnly<'a>(pub &'a MlpCritic);

impl Critic for NumericOnly<'_> {
    fn value(&self, x: &ScalarGrid) -> f64 {
        self.0.value(x)
    }
}
