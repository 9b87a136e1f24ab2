//! Adam with bias correction; moments are keyed by parameter name.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub moments: BTreeMap<String, Moments<T>>,
}

impl<T: Scalar> AdamState<T> {
    /// Zero moments for every parameter in `store`.
    pub fn new(store: &ParamStore<T>, lr: f64) -> Self {
        let moments = store
            .iter()
            .map(|(_, p)| {
                let zeros = Tensor::zeros(p.value.shape());
                (
                    p.name.clone(),
                    Moments {
                        m: zeros.clone(),
                        v: zeros,
                    },
                )
            })
            .collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments,
        }
    }

    /// One update. `grads` is aligned with store order; `None` entries (parameters
    /// outside the graph) are left untouched. Nothing is modified if any gradient
    /// is non-finite.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[Option<Tensor<T>>]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        for (id, g) in store.ids().zip(grads) {
            if let Some(g) = g {
                let p = store.get(id);
                if g.shape() != p.value.shape() {
                    return Err(Error::shape(format!(
                        "gradient {:?} for `{}` of shape {:?}",
                        g.shape(),
                        p.name,
                        p.value.shape()
                    )));
                }
                if g.first_non_finite().is_some() {
                    return Err(Error::numerical(&p.name, "non-finite gradient"));
                }
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for (id, g) in ids.into_iter().zip(grads) {
            let Some(g) = g else { continue };
            let name = store.get(id).name.clone();
            let moments = self.moments.entry(name).or_insert_with(|| Moments {
                m: Tensor::zeros(g.shape()),
                v: Tensor::zeros(g.shape()),
            });
            let theta = store.value_mut(id).data_mut();
            let m = moments.m.data_mut();
            let v = moments.v.data_mut();
            for i in 0..theta.len() {
                let gi = g.data()[i].as_f64();
                let mi = self.beta1 * m[i].as_f64() + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v[i].as_f64() + (1.0 - self.beta2) * gi * gi;
                m[i] = T::lit(mi);
                v[i] = T::lit(vi);
                let update = self.lr * (mi / c1) / ((vi / c2).sqrt() + self.eps);
                theta[i] = T::lit(theta[i].as_f64() - update);
            }
        }
        Ok(())
    }
}

/// Scales all gradients so their joint L2 norm is at most `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut [Option<Tensor<T>>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .flat_map(|g| g.data().iter())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = T::lit(max_norm / norm);
        for g in grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v = *v * scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;

    fn scalar_store(theta: f64) -> ParamStore<f64> {
        let mut store = ParamStore::new(0);
        store.insert("theta", Tensor::from_vec(&[1], vec![theta]).unwrap()).unwrap();
        store
    }

    #[test]
    fn zero_gradients_are_a_no_op() {
        let mut store = ParamStore::<f64>::new(1);
        store.register("w", &[3, 2], Init::FanIn(2)).unwrap();
        let before = store.clone();
        let mut adam = AdamState::new(&store, 1e-3);
        adam.step(&mut store, &[Some(Tensor::zeros(&[3, 2]))]).unwrap();
        assert_eq!(store, before);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        for g in [1e-3, 0.5, -7.0] {
            let mut store = scalar_store(2.0);
            let mut adam = AdamState::new(&store, 1e-4);
            adam.step(&mut store, &[Some(Tensor::from_vec(&[1], vec![g]).unwrap())]).unwrap();
            let delta = (store.value(store.id("theta").unwrap()).data()[0] - 2.0).abs();
            assert!(delta <= 1e-4 && delta >= 0.99e-4, "delta {delta}");
        }
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        let (lr, b1, b2, eps) = (0.01f64, 0.9f64, 0.999f64, 1e-8f64);
        let (mut theta, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for (t, g) in [(1, 1.0), (2, -1.0)] {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1 * if t == 1 { 1.0 } else { b1 });
            let vh = v / (1.0 - b2 * if t == 1 { 1.0 } else { b2 });
            theta -= lr * mh / (vh.sqrt() + eps);
        }
        let mut store = scalar_store(0.5);
        let mut adam = AdamState::new(&store, lr);
        for g in [1.0, -1.0] {
            adam.step(&mut store, &[Some(Tensor::from_vec(&[1], vec![g]).unwrap())]).unwrap();
        }
        let got = store.value(store.id("theta").unwrap()).data()[0];
        assert!((got - theta).abs() <= 1e-12);
        assert_eq!(adam.step, 2);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut store = scalar_store(1.0);
        let mut adam = AdamState::new(&store, 1e-3);
        let err = adam
            .step(&mut store, &[Some(Tensor::from_vec(&[1], vec![f64::NAN]).unwrap())])
            .unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut grads = vec![Some(Tensor::from_vec(&[2], vec![3.0f64, 4.0]).unwrap()), None];
        assert_eq!(clip_grad_norm(&mut grads, 1.0), 5.0);
        let g = grads[0].as_ref().unwrap().data();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }
}
