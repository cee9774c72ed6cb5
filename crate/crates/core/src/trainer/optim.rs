use crate::numkernel::Tensor;

/// Adam moments and settings. `m` and `v` follow the canonical parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

pub const DEFAULT_LR: f64 = 0.001;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn new(params: &[&Tensor<f32>], lr: f64) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_EPS,
        }
    }

    /// One bias-corrected Adam update. With `lr = 0` the parameters are left untouched.
    pub fn update(&mut self, params: Vec<&mut Tensor<f32>>, grads: &[Tensor<f32>]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for ((pi, &gi), (mi, vi)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                let gi = f64::from(gi);
                let m_new = b1 * f64::from(*mi) + (1.0 - b1) * gi;
                let v_new = b2 * f64::from(*vi) + (1.0 - b2) * gi * gi;
                *mi = m_new as f32;
                *vi = v_new as f32;
                if self.lr != 0.0 {
                    let step = self.lr * (m_new / c1) / ((v_new / c2).sqrt() + self.eps);
                    *pi = (f64::from(*pi) - step) as f32;
                }
            }
        }
    }
}

/// Rescale `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(grads: &mut [Tensor<f32>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for x in g.data_mut() {
                *x = (f64::from(*x) * scale) as f32;
            }
        }
    }
    norm
}
