use serde::{Deserialize, Serialize};

use super::{Gradients, LayerGrads, MlpModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter, plus the step count.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `model` in place.
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != model.layers.len() || self.m.layers.len() != model.layers.len() {
            return Err(Error::shape(model.layers.len(), grads.layers.len()));
        }
        self.t += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.t as i32);
        let bias2 = 1.0 - c.beta2.powi(self.t as i32);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= c.alpha * m_hat / (v_hat.sqrt() + c.epsilon);
        };

        let moments = self.m.layers.iter_mut().zip(self.v.layers.iter_mut());
        for ((layer, g), (m, v)) in model.layers.iter_mut().zip(&grads.layers).zip(moments) {
            check_shapes(g, m)?;
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            if let (Some(p), Some(g), Some(m), Some(v)) =
                (&mut layer.slopes, &g.slopes, &mut m.slopes, &mut v.slopes)
            {
                ndarray::Zip::from(p)
                    .and(g)
                    .and(m)
                    .and(v)
                    .for_each(|p, &g, m, v| update(p, g, m, v));
            }
        }
        Ok(())
    }
}

fn check_shapes(g: &LayerGrads, m: &LayerGrads) -> Result<()> {
    let same = g.weights.dim() == m.weights.dim()
        && g.bias.len() == m.bias.len()
        && g.slopes.as_ref().map(|s| s.len()) == m.slopes.as_ref().map(|s| s.len());
    if same {
        Ok(())
    } else {
        Err(Error::shape(
            format!("{:?}", m.weights.dim()),
            format!("{:?}", g.weights.dim()),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> MlpModel {
        MlpModel::init_glorot(&[3, 2, 1], 1.0, 7).unwrap()
    }

    fn filled(model: &MlpModel, f: impl Fn(usize) -> f64) -> Gradients {
        let mut g = Gradients::zeros_like(model);
        let mut i = 0;
        for l in &mut g.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()).chain(l.slopes.iter_mut().flatten()) {
                *v = f(i);
                i += 1;
            }
        }
        g
    }

    #[test]
    fn first_step_moves_by_alpha() {
        let mut model = tiny();
        let before = model.flat_params();
        let grads = filled(&model, |i| if i % 2 == 0 { 0.37 } else { -2.5 });
        let mut adam = AdamState::new(&model, AdamConfig::default());
        adam.step(&mut model, &grads).unwrap();
        for (i, (a, b)) in model.flat_params().iter().zip(&before).enumerate() {
            let expected = if i % 2 == 0 { -1e-3 } else { 1e-3 };
            assert!((a - b - expected).abs() < 1e-6, "param {i}: {}", a - b);
        }
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut model = tiny();
        let before = model.flat_params();
        let grads = Gradients::zeros_like(&model);
        let mut adam = AdamState::new(&model, AdamConfig::default());
        adam.step(&mut model, &grads).unwrap();
        adam.step(&mut model, &grads).unwrap();
        assert_eq!(model.flat_params(), before);
        assert_eq!(adam.t, 2);
    }

    #[test]
    fn update_is_scale_free_per_parameter() {
        let mut model = tiny();
        let before = model.flat_params();
        let grads = filled(&model, |i| if i == 0 { 0.01 } else { 1.0 });
        let mut adam = AdamState::new(&model, AdamConfig::default());
        adam.step(&mut model, &grads).unwrap();
        let after = model.flat_params();
        let d0 = (after[0] - before[0]).abs();
        let d1 = (after[1] - before[1]).abs();
        assert!((d0 - d1).abs() < 1e-8, "{d0} vs {d1}");
    }

    #[test]
    fn second_moment_nonnegative() {
        let mut model = tiny();
        let mut adam = AdamState::new(&model, AdamConfig::default());
        for k in 0..5 {
            let grads = filled(&model, |i| ((i + k) as f64).sin());
            adam.step(&mut model, &grads).unwrap();
        }
        assert!(adam.v.flatten().iter().all(|&v| v >= 0.0));
    }
}
