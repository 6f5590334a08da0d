use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dim_err, Result};
use crate::math::{powf, sqrt};
use crate::nets::{GroupId, GroupMask, ParamGrads, ParameterSet};

/// First and second moment estimates of one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Updates applied so far, for bias correction.
    pub t: u64,
}

/// Adaptive-moment optimizer with independent state per group.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub moments: [Option<Moments>; 5],
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            moments: Default::default(),
        }
    }

    /// Descend on every group in `mask` that has a gradient. Frozen groups
    /// are never touched.
    pub fn step(
        &mut self,
        params: &mut ParameterSet,
        grads: &ParamGrads,
        mask: GroupMask,
        lr: f64,
    ) -> Result<()> {
        for g in mask.iter() {
            if !params.is_trainable(g) {
                continue;
            }
            let Some(grad) = grads.get(g) else { continue };
            let values = &mut params.group_mut(g).values;
            if grad.len() != values.len() {
                return Err(dim_err!(
                    "{}: gradient of {} for {} parameters",
                    g.name(),
                    grad.len(),
                    values.len()
                ));
            }
            let st = self.moments[g.index()].get_or_insert_with(|| Moments {
                m: vec![0.0; grad.len()],
                v: vec![0.0; grad.len()],
                t: 0,
            });
            st.t += 1;
            let c1 = 1.0 - powf(self.beta1, st.t as f64);
            let c2 = 1.0 - powf(self.beta2, st.t as f64);
            for i in 0..values.len() {
                let d = grad[i];
                st.m[i] = self.beta1 * st.m[i] + (1.0 - self.beta1) * d;
                st.v[i] = self.beta2 * st.v[i] + (1.0 - self.beta2) * d * d;
                let mh = st.m[i] / c1;
                let vh = st.v[i] / c2;
                values[i] -= lr * mh / (sqrt(vh) + self.eps);
            }
        }
        Ok(())
    }

    pub fn group(&self, g: GroupId) -> Option<&Moments> {
        self.moments[g.index()].as_ref()
    }
}

/// Rescale `grads` over `mask` so its norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_grad_norm(grads: &mut ParamGrads, mask: GroupMask, max_norm: f64) -> f64 {
    let n = grads.norm(mask);
    if n > max_norm && n.is_finite() {
        let k = max_norm / n;
        for g in mask.iter() {
            if let Some(v) = grads.get_mut(g) {
                v.iter_mut().for_each(|x| *x *= k);
            }
        }
    }
    n
}
