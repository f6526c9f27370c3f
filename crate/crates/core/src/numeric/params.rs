use std::collections::HashMap;

use rand::Rng;

use super::{NumericError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Param {
    pub(crate) name: String,
    pub(crate) value: Tensor,
    pub(crate) m: Vec<f64>,
    pub(crate) v: Vec<f64>,
}

/// Named parameters in registration order, with Adam moment estimates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    pub(crate) params: Vec<Param>,
    index: HashMap<String, usize>,
    pub(crate) step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId, NumericError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NumericError::DuplicateParam(name));
        }
        let n = value.data().len();
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param { name, value, m: vec![0.0; n], v: vec![0.0; n] });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Registers a `rows x cols` parameter drawn from `U(-bound, bound)`.
    pub fn register_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        bound: f64,
        rng: &mut R,
    ) -> Result<ParamId, NumericError> {
        let t = Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-bound..=bound));
        self.register(name, t)
    }

    pub fn id(&self, name: &str) -> Result<ParamId, NumericError> {
        self.index.get(name).map(|&i| ParamId(i)).ok_or_else(|| NumericError::UnknownParam(name.to_string()))
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalars across all parameters.
    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.data().len()).sum()
    }

    /// Number of optimizer steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// One Adam update with bias correction.
    pub fn adam_step(&mut self, grads: &Gradients, adam: &Adam) {
        debug_assert_eq!(grads.grads.len(), self.params.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - adam.beta1.powi(t);
        let c2 = 1.0 - adam.beta2.powi(t);
        for (p, g) in self.params.iter_mut().zip(&grads.grads) {
            for (k, &gk) in g.data().iter().enumerate() {
                p.m[k] = adam.beta1 * p.m[k] + (1.0 - adam.beta1) * gk;
                p.v[k] = adam.beta2 * p.v[k] + (1.0 - adam.beta2) * gk * gk;
                let mhat = p.m[k] / c1;
                let vhat = p.v[k] / c2;
                p.value.data_mut()[k] -= adam.lr * mhat / (vhat.sqrt() + adam.eps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Adam { lr, ..Self::default() }
    }
}

/// One gradient tensor per parameter, aligned with the store's order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub(crate) grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros(store: &ParamStore) -> Self {
        Gradients { grads: store.params.iter().map(|p| Tensor::zeros(p.value.rows(), p.value.cols())).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x *= c);
        }
    }

    pub fn norm(&self) -> f64 {
        self.grads.iter().flat_map(|g| g.data()).map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest absolute difference to `other`.
    pub fn max_abs_diff(&self, other: &Gradients) -> f64 {
        self.grads
            .iter()
            .zip(&other.grads)
            .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}
