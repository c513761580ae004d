//! Parameters, initialization, LSTM cells, softmax, and SGD.
//!
//! Every learned weight lives in a [`ParamStore`] and is addressed by
//! [`ParamId`]; forward passes are built on a [`crate::tape::Tape`] that
//! borrows the store, and gradients flow back into `Parameter::grad`.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Ordered container of all parameters of one model instance.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape().to_vec());
        self.params.push(Parameter { name: name.to_string(), value, grad });
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn accumulate_grads(&mut self, grads: Vec<(ParamId, Tensor)>) {
        for (id, g) in grads {
            let dst = self.params[id.0].grad.data_mut();
            for (d, s) in dst.iter_mut().zip(g.data()) {
                *d += s;
            }
        }
    }

    pub fn grad_global_norm(&self) -> f64 {
        let sq: f64 = self
            .params
            .iter()
            .flat_map(|p| p.grad.data())
            .map(|g| g * g)
            .sum();
        sq.sqrt()
    }

    /// Snapshot of all parameter values, restorable with [`Self::restore`].
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) {
        assert_eq!(snapshot.len(), self.params.len());
        for (p, s) in self.params.iter_mut().zip(snapshot) {
            p.value = s.clone();
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SgdConfig {
    pub learning_rate: f64,
    /// Global-norm gradient clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl SgdConfig {
    pub fn new(learning_rate: f64, clip_norm: Option<f64>) -> Result<Self> {
        if learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if let Some(c) = clip_norm {
            if c <= 0.0 {
                return Err(Error::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(Self { learning_rate, clip_norm })
    }
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, clip_norm: Some(5.0) }
    }
}

/// One SGD update: `value ← value − lr · grad` after optional global-norm
/// clipping across the whole store; grads are zeroed afterwards.
pub fn sgd_step(store: &mut ParamStore, cfg: &SgdConfig) -> Result<()> {
    for p in &store.params {
        if !p.grad.all_finite() {
            return Err(Error::Numeric(format!(
                "NaN gradient in parameter `{}`",
                p.name
            )));
        }
    }
    let mut scale = cfg.learning_rate;
    if let Some(clip) = cfg.clip_norm {
        let norm = store.grad_global_norm();
        if norm > clip {
            scale *= clip / norm;
        }
    }
    for p in &mut store.params {
        let (value, grad) = (p.value.data_mut(), p.grad.data());
        for (v, g) in value.iter_mut().zip(grad) {
            *v -= scale * g;
        }
    }
    store.zero_grads();
    Ok(())
}

/// Numerically stabilized softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Config("softmax of empty vector".into()));
    }
    Ok(softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Glorot-uniform initializer: uniform(−a, a) with a = √(6/(fan_in+fan_out)).
pub fn glorot_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect();
    Tensor::new(vec![rows, cols], data).expect("consistent shape")
}

/// LSTM cell parameters. The four gate blocks are laid out in row order
/// [input, forget, candidate, output], each of height `hidden`.
#[derive(Debug, Clone)]
pub struct LstmCell {
    /// Input weights, `[4H × D]`.
    pub w_input: ParamId,
    /// Recurrent weights, `[4H × H]`.
    pub w_recur: ParamId,
    /// Bias, `[4H]`. The forget block is initialized to 1.0.
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        input_dim: usize,
        hidden: usize,
    ) -> Self {
        let w_input = store.add(
            &format!("{name}.w_input"),
            glorot_uniform(rng, 4 * hidden, input_dim),
        );
        let w_recur = store.add(
            &format!("{name}.w_recur"),
            glorot_uniform(rng, 4 * hidden, hidden),
        );
        let mut b = Tensor::zeros(vec![4 * hidden]);
        for v in &mut b.data_mut()[hidden..2 * hidden] {
            *v = 1.0;
        }
        let bias = store.add(&format!("{name}.bias"), b);
        Self { w_input, w_recur, bias, input_dim, hidden }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sgd_basic_update() {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::scalar(1.0));
        store.accumulate_grads(vec![(id, Tensor::scalar(0.5))]);
        sgd_step(&mut store, &SgdConfig::new(0.1, None).unwrap()).unwrap();
        assert!((store.value(id).data()[0] - 0.95).abs() < 1e-15);
        // grads zeroed
        assert_eq!(store.grad(id).data()[0], 0.0);
    }

    #[test]
    fn sgd_zero_grad_fixed_point() {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::vector(vec![1.0, -2.0]));
        sgd_step(&mut store, &SgdConfig::default()).unwrap();
        assert_eq!(store.value(id).data(), &[1.0, -2.0]);
    }

    #[test]
    fn sgd_clipping_scales_update() {
        // two coordinates with grads (6, 8): global norm 10
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::vector(vec![0.0, 0.0]));
        store.accumulate_grads(vec![(id, Tensor::vector(vec![6.0, 8.0]))]);
        sgd_step(&mut store, &SgdConfig::new(1.0, Some(1.0)).unwrap()).unwrap();
        let v = store.value(id).data().to_vec();
        // update is 1/10 of the unclipped (-6, -8)
        assert!((v[0] + 0.6).abs() < 1e-12);
        assert!((v[1] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn sgd_nan_grad_names_parameter() {
        let mut store = ParamStore::new();
        let id = store.add("enc.w_input", Tensor::scalar(1.0));
        store.accumulate_grads(vec![(id, Tensor::scalar(f64::NAN))]);
        let err = sgd_step(&mut store, &SgdConfig::default()).unwrap_err();
        assert!(err.to_string().contains("enc.w_input"), "{err}");
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&[1.0, 1.0, 1.0]).unwrap();
        for v in &u {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
        let p = softmax(&[0.0, 3.0_f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12);
        assert!((p[1] - 0.75).abs() < 1e-12);
        // extreme logits stay in range
        let big = softmax(&[1000.0, 0.0]).unwrap();
        assert!(big[0] > 0.999999 && big[1] < 1e-6);
        assert!(big.iter().all(|v| v.is_finite()));
        assert!(softmax(&[]).is_err());
    }

    #[test]
    fn softmax_sums_to_one_under_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let k = rng.gen_range(1..=8);
            let logits: Vec<f64> = (0..k).map(|_| rng.gen_range(-1e3..1e3)).collect();
            let p = softmax(&logits).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6, "sum {sum} for {logits:?}");
            assert!(p.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = glorot_uniform(&mut rng, 10, 20);
        let a = (6.0 / 30.0_f64).sqrt();
        assert!(t.data().iter().all(|v| v.abs() < a));
    }

    #[test]
    fn lstm_forget_bias_is_one() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cell = LstmCell::new(&mut store, &mut rng, "c", 3, 4);
        let b = store.value(cell.bias).data();
        assert!(b[0..4].iter().all(|v| *v == 0.0));
        assert!(b[4..8].iter().all(|v| *v == 1.0));
        assert!(b[8..16].iter().all(|v| *v == 0.0));
    }
}
