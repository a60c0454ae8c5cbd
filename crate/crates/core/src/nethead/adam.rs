use crate::error::{Error, Result};

use super::{HeadParams, TrainConfig};

/// A collection of parameter tensors viewed as flat slices in a fixed order.
pub trait ParamSet: Sized {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;
    fn zeros_like(&self) -> Self;

    fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn add_assign(&mut self, other: &Self) {
        for (dst, src) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    fn scale_by(&mut self, factor: f64) {
        for s in self.param_slices_mut() {
            for v in s.iter_mut() {
                *v *= factor;
            }
        }
    }
}

impl ParamSet for HeadParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.layers()
            .into_iter()
            .flat_map(|l| {
                [
                    l.weights.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        [&mut self.layer1, &mut self.layer2, &mut self.layer3]
            .into_iter()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn zeros_like(&self) -> Self {
        HeadParams::zeros(
            self.input_dim(),
            self.layer1.fan_out(),
            self.layer2.fan_out(),
            self.output_dim(),
        )
    }
}

/// First and second moment estimates plus the update counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<P> {
    pub first_moment: P,
    pub second_moment: P,
    pub step_count: u64,
}

impl<P: ParamSet> AdamState<P> {
    pub fn new(params: &P) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            step_count: 0,
        }
    }
}

fn same_layout(a: &[&[f64]], b: &[&[f64]]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len())
}

/// One bias-corrected Adam update.
pub fn adam_step<P: ParamSet>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState<P>,
    config: &TrainConfig,
) -> Result<()> {
    {
        let p = params.param_slices();
        if !same_layout(&p, &grads.param_slices())
            || !same_layout(&p, &state.first_moment.param_slices())
            || !same_layout(&p, &state.second_moment.param_slices())
        {
            return Err(Error::ShapeMismatch(
                "parameters, gradients and optimizer state differ in shape".into(),
            ));
        }
    }

    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let eps = config.epsilon;

    let g_all = grads.param_slices();
    let m_all = state.first_moment.param_slices_mut();
    let v_all = state.second_moment.param_slices_mut();
    for (((p, g), m), v) in params.param_slices_mut().into_iter().zip(g_all).zip(m_all).zip(v_all) {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
