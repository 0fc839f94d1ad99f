//! Adam with bias correction. Moments are kept in f64.

use crate::error::{NnError, Result};
use crate::layers::Param;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.epsilon > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2);
        if ok {
            Ok(())
        } else {
            Err(NnError::Shape {
                layer: "adam".into(),
                message: format!("invalid settings {self:?}"),
            })
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            state: AdamState::default(),
        }
    }

    /// One update of every parameter from its `grad`. The parameter list
    /// must have the same layout on every call.
    pub fn step<'a, T: Scalar>(&mut self, params: impl IntoIterator<Item = &'a mut Param<T>>) -> Result<()> {
        let params: Vec<&mut Param<T>> = params.into_iter().collect();
        let st = &mut self.state;
        if st.step == 0 && st.m.is_empty() {
            st.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            st.v = st.m.clone();
        }
        if st.m.len() != params.len() {
            return Err(NnError::Shape {
                layer: "adam".into(),
                message: format!("{} parameters, state holds {}", params.len(), st.m.len()),
            });
        }
        for (p, m) in params.iter().zip(&st.m) {
            if p.value.len() != m.len() || p.grad.len() != m.len() {
                return Err(NnError::Shape {
                    layer: "adam".into(),
                    message: format!("parameter '{}' changed size", p.name),
                });
            }
        }
        st.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(st.step as i32);
        let bc2 = 1.0 - c.beta2.powi(st.step as i32);
        for ((p, m), v) in params.into_iter().zip(&mut st.m).zip(&mut st.v) {
            for i in 0..m.len() {
                let g = p.grad[i].as_f64();
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let update = c.learning_rate * (m[i] / bc1) / ((v[i] / bc2).sqrt() + c.epsilon);
                p.value[i] = T::lit(p.value[i].as_f64() - update);
            }
        }
        Ok(())
    }
}
