use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Parameter("learning rate must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Parameter(format!("{name} must lie in (0, 1)")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Parameter("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Bias-corrected Adam moments for one flat parameter vector.
#[derive(Clone, Debug)]
pub struct AdamState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        AdamState {
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step_count: 0,
            config,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    /// Applies one update in place. The state is untouched when a gradient
    /// component is non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        check_len("adam parameters", self.len(), params.len())?;
        check_len("adam gradients", self.len(), grads.len())?;
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut st = AdamState::new(3, AdamConfig::default());
        let mut p = vec![1.0, -2.0, 3.5];
        st.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_closed_form() {
        let cfg = AdamConfig {
            learning_rate: 0.01,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(1, cfg);
        let mut p = vec![0.0];
        st.step(&mut p, &[3.0]).unwrap();
        let expected = -0.01 * 3.0 / (9.0f64.sqrt() + 1e-8);
        assert!((p[0] - expected).abs() <= 1e-15);
        assert!((p[0] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn ten_steps_match_scripted_recursion() {
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        let g = 0.7;
        let mut st = AdamState::new(1, cfg);
        let mut p = vec![1.0];
        // scripted oracle
        let (mut m, mut v, mut q) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=10 {
            st.step(&mut p, &[g]).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            q -= 0.05 * mh / (vh.sqrt() + 1e-8);
            assert!((p[0] - q).abs() <= 1e-12);
        }
        assert_eq!(st.step_count(), 10);
    }

    #[test]
    fn non_finite_gradient_names_index() {
        let mut st = AdamState::new(3, AdamConfig::default());
        let mut p = vec![0.0; 3];
        let err = st.step(&mut p, &[0.0, 0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { index: 2 }));
        assert_eq!(st.step_count(), 0);
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut st = AdamState::new(2, AdamConfig::default());
        assert!(st.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // with a zero first moment the update is exactly zero; a state carrying
            // momentum keeps moving under zero gradient, as standard Adam does
            #[test]
            fn zero_gradient_is_identity_without_momentum(
                params in proptest::collection::vec(-5.0f64..5.0, 4),
                lr in 1e-5f64..1.0,
                beta1 in 0.01f64..0.99,
                beta2 in 0.01f64..0.9999,
                prior_steps in 0usize..5,
            ) {
                let cfg = AdamConfig { learning_rate: lr, beta1, beta2, epsilon: 1e-8 };
                let mut st = AdamState::new(4, cfg);
                let mut p = params.clone();
                for _ in 0..=prior_steps {
                    st.step(&mut p, &[0.0; 4]).unwrap();
                }
                prop_assert_eq!(p, params);
                prop_assert_eq!(st.step_count(), prior_steps as u64 + 1);
            }
        }
    }
}
