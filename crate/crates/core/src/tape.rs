//! Reverse-mode automatic differentiation over a fixed op set.
//!
//! The op set is exactly what the model math needs: matrix-vector product,
//! add, elementwise multiply/sigmoid/tanh, concat, slice, dot, constant
//! scale, softmax, fused softmax+cross-entropy, embedding-row lookup, and
//! mean. A [`Tape`] borrows a [`ParamStore`] for its lifetime; parameter
//! leaves read values straight from the store and collect their gradients
//! when the tape is consumed with [`Tape::finish`].

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::{LstmCell, ParamId, ParamStore};
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    /// Constant input; receives no gradient.
    Leaf,
    Param(ParamId),
    MatVec { m: Var, v: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Sigmoid { x: Var },
    Tanh { x: Var },
    Concat { parts: Vec<Var> },
    Slice { x: Var, start: usize },
    Dot { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    Softmax { x: Var },
    SoftmaxXent { logits: Var, probs: Vec<f64>, target: usize },
    EmbedRow { table: Var, row: usize },
    Mean { parts: Vec<Var> },
}

#[derive(Debug)]
struct Node {
    /// Owned value; empty for `Op::Param` (resolved through the store).
    value: Tensor,
    op: Op,
}

pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    grads: Vec<Vec<f64>>,
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self { store, nodes: Vec::new(), param_vars: HashMap::new(), grads: Vec::new() }
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.all_finite() || matches!(op, Op::Param(_)));
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Value of a variable. Parameter leaves resolve through the store.
    pub fn value(&self, v: Var) -> &Tensor {
        match self.nodes[v.0].op {
            Op::Param(id) => self.store.value(id),
            _ => &self.nodes[v.0].value,
        }
    }

    fn data(&self, v: Var) -> &[f64] {
        self.value(v).data()
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.data(v)[0]
    }

    /// Registers a constant leaf (no gradient flows into it).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Registers (once per tape) a leaf bound to a stored parameter.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let v = self.push(Tensor::scalar(0.0), Op::Param(id));
        // placeholder tensor is never read for Param ops
        self.param_vars.insert(id, v);
        v
    }

    fn check_vec(&self, v: Var, what: &str) -> Result<usize> {
        let t = self.value(v);
        if !t.is_vector() {
            return Err(Error::Config(format!("{what}: expected vector, got {:?}", t.shape())));
        }
        Ok(t.len())
    }

    /// `m · v` for `m: [r × c]`, `v: [c]`.
    pub fn matvec(&mut self, m: Var, v: Var) -> Result<Var> {
        let mt = self.value(m);
        if !mt.is_matrix() {
            return Err(Error::Config(format!("matvec: expected matrix, got {:?}", mt.shape())));
        }
        let (r, c) = (mt.rows(), mt.cols());
        let n = self.check_vec(v, "matvec")?;
        if n != c {
            return Err(Error::Config(format!("matvec: matrix [{r}×{c}] × vector [{n}]")));
        }
        let mut out = vec![0.0; r];
        tensor::matvec(self.data(m), r, c, self.data(v), &mut out);
        Ok(self.push(Tensor::vector(out), Op::MatVec { m, v }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Config(format!(
                "add: shape mismatch {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let out: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Add { a, b }))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Config(format!(
                "mul: shape mismatch {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let out: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul { a, b }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.data(x).iter().map(|&v| crate::nn::sigmoid(v)).collect();
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(shape, out).expect("same shape"), Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.data(x).iter().map(|v| v.tanh()).collect();
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(shape, out).expect("same shape"), Op::Tanh { x })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Config("concat of zero vectors".into()));
        }
        let mut out = Vec::new();
        for &p in parts {
            self.check_vec(p, "concat")?;
            out.extend_from_slice(self.data(p));
        }
        Ok(self.push(Tensor::vector(out), Op::Concat { parts: parts.to_vec() }))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.check_vec(x, "slice")?;
        if start + len > n {
            return Err(Error::Config(format!("slice {start}..{} of vector [{n}]", start + len)));
        }
        let out = self.data(x)[start..start + len].to_vec();
        Ok(self.push(Tensor::vector(out), Op::Slice { x, start }))
    }

    /// Inner product of two equal-length vectors, as a `[1]` tensor.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let na = self.check_vec(a, "dot")?;
        let nb = self.check_vec(b, "dot")?;
        if na != nb {
            return Err(Error::Config(format!("dot: [{na}] vs [{nb}]")));
        }
        let out = tensor::dot(self.data(a), self.data(b));
        Ok(self.push(Tensor::scalar(out), Op::Dot { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out: Vec<f64> = self.data(x).iter().map(|v| v * c).collect();
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor::new(shape, out).expect("same shape"), Op::Scale { x, c })
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.check_vec(x, "softmax")?;
        let out = crate::nn::softmax(self.data(x))?;
        Ok(self.push(Tensor::vector(out), Op::Softmax { x }))
    }

    /// Fused `−log softmax(logits)[target]`, as a `[1]` tensor.
    pub fn softmax_xent(&mut self, logits: Var, target: usize) -> Result<Var> {
        let n = self.check_vec(logits, "softmax_xent")?;
        if target >= n {
            return Err(Error::Config(format!("cross-entropy target {target} out of [{n}]")));
        }
        let probs = crate::nn::softmax(self.data(logits))?;
        let nll = -(probs[target].max(f64::MIN_POSITIVE)).ln();
        Ok(self.push(Tensor::scalar(nll), Op::SoftmaxXent { logits, probs, target }))
    }

    /// Row `row` of a `[v × e]` table, as an `[e]` vector.
    pub fn embed_row(&mut self, table: Var, row: usize) -> Result<Var> {
        let t = self.value(table);
        if !t.is_matrix() {
            return Err(Error::Config(format!("embed_row: expected matrix, got {:?}", t.shape())));
        }
        if row >= t.rows() {
            return Err(Error::Config(format!("embed_row: row {row} out of [{}]", t.rows())));
        }
        let out = self.value(table).row(row).to_vec();
        Ok(self.push(Tensor::vector(out), Op::EmbedRow { table, row }))
    }

    /// Elementwise mean of equally shaped vectors.
    pub fn mean(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Config("mean of zero vectors".into()));
        }
        let n = self.check_vec(parts[0], "mean")?;
        let mut out = vec![0.0; n];
        for &p in parts {
            if self.check_vec(p, "mean")? != n {
                return Err(Error::Config("mean: length mismatch".into()));
            }
            for (o, v) in out.iter_mut().zip(self.data(p)) {
                *o += v;
            }
        }
        let k = parts.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
        Ok(self.push(Tensor::vector(out), Op::Mean { parts: parts.to_vec() }))
    }

    /// One LSTM step (sigmoid gates, tanh candidate and output squashing).
    /// Returns the next `(hidden, cell)` state.
    pub fn lstm_step(&mut self, cell: &LstmCell, input: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let hsz = cell.hidden;
        if self.check_vec(input, "lstm_step input")? != cell.input_dim {
            return Err(Error::Config(format!(
                "lstm_step: input dim {} does not match cell input dim {}",
                self.value(input).len(),
                cell.input_dim
            )));
        }
        if self.check_vec(h, "lstm_step h")? != hsz || self.check_vec(c, "lstm_step c")? != hsz {
            return Err(Error::Config("lstm_step: state dim does not match cell".into()));
        }
        let w_in = self.param(cell.w_input);
        let w_rec = self.param(cell.w_recur);
        let bias = self.param(cell.bias);
        let xi = self.matvec(w_in, input)?;
        let hr = self.matvec(w_rec, h)?;
        let s = self.add(xi, hr)?;
        let gates = self.add(s, bias)?;
        let i_raw = self.slice(gates, 0, hsz)?;
        let f_raw = self.slice(gates, hsz, hsz)?;
        let g_raw = self.slice(gates, 2 * hsz, hsz)?;
        let o_raw = self.slice(gates, 3 * hsz, hsz)?;
        let i = self.sigmoid(i_raw);
        let f = self.sigmoid(f_raw);
        let g = self.tanh(g_raw);
        let o = self.sigmoid(o_raw);
        let fc = self.mul(f, c)?;
        let ig = self.mul(i, g)?;
        let c_next = self.add(fc, ig)?;
        let c_sq = self.tanh(c_next);
        let h_next = self.mul(o, c_sq)?;
        Ok((h_next, c_next))
    }

    fn grad_len(&self, v: Var) -> usize {
        match self.nodes[v.0].op {
            Op::Param(id) => self.store.value(id).len(),
            _ => self.nodes[v.0].value.len(),
        }
    }

    /// Reverse pass seeded with `d loss / d loss = 1`. `loss` must be `[1]`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::Config(format!("backward: loss must be [1], got {:?}", lt.shape())));
        }
        if !lt.data()[0].is_finite() {
            return Err(Error::Numeric("non-finite loss".into()));
        }
        self.grads = (0..self.nodes.len()).map(|i| vec![0.0; self.grad_len(Var(i))]).collect();
        self.grads[loss.0][0] = 1.0;
        for i in (0..=loss.0).rev() {
            let g = std::mem::take(&mut self.grads[i]);
            if g.iter().all(|v| *v == 0.0) {
                self.grads[i] = g;
                continue;
            }
            match &self.nodes[i].op {
                Op::Leaf | Op::Param(_) => {}
                &Op::MatVec { m, v } => {
                    let (r, c) = (self.value(m).rows(), self.value(m).cols());
                    // dM += g ⊗ v
                    {
                        let vv: Vec<f64> = self.data(v).to_vec();
                        let dm = &mut self.grads[m.0];
                        for (row, gi) in g.iter().enumerate() {
                            if *gi == 0.0 {
                                continue;
                            }
                            for (j, vj) in vv.iter().enumerate() {
                                dm[row * c + j] += gi * vj;
                            }
                        }
                    }
                    // dv += Mᵀ g
                    {
                        let mut dv = vec![0.0; c];
                        tensor::matvec_t(self.data(m), r, c, &g, &mut dv);
                        for (d, s) in self.grads[v.0].iter_mut().zip(&dv) {
                            *d += s;
                        }
                    }
                }
                &Op::Add { a, b } => {
                    for (d, s) in self.grads[a.0].iter_mut().zip(&g) {
                        *d += s;
                    }
                    for (d, s) in self.grads[b.0].iter_mut().zip(&g) {
                        *d += s;
                    }
                }
                &Op::Mul { a, b } => {
                    let bv: Vec<f64> = self.data(b).to_vec();
                    for ((d, s), x) in self.grads[a.0].iter_mut().zip(&g).zip(&bv) {
                        *d += s * x;
                    }
                    let av: Vec<f64> = self.data(a).to_vec();
                    for ((d, s), x) in self.grads[b.0].iter_mut().zip(&g).zip(&av) {
                        *d += s * x;
                    }
                }
                &Op::Sigmoid { x } => {
                    let y: Vec<f64> = self.nodes[i].value.data().to_vec();
                    for ((d, s), yi) in self.grads[x.0].iter_mut().zip(&g).zip(&y) {
                        *d += s * yi * (1.0 - yi);
                    }
                }
                &Op::Tanh { x } => {
                    let y: Vec<f64> = self.nodes[i].value.data().to_vec();
                    for ((d, s), yi) in self.grads[x.0].iter_mut().zip(&g).zip(&y) {
                        *d += s * (1.0 - yi * yi);
                    }
                }
                Op::Concat { parts } => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let n = self.grad_len(p);
                        for (d, s) in self.grads[p.0].iter_mut().zip(&g[off..off + n]) {
                            *d += s;
                        }
                        off += n;
                    }
                }
                &Op::Slice { x, start } => {
                    for (d, s) in self.grads[x.0][start..start + g.len()].iter_mut().zip(&g) {
                        *d += s;
                    }
                }
                &Op::Dot { a, b } => {
                    let g0 = g[0];
                    let bv: Vec<f64> = self.data(b).to_vec();
                    for (d, x) in self.grads[a.0].iter_mut().zip(&bv) {
                        *d += g0 * x;
                    }
                    let av: Vec<f64> = self.data(a).to_vec();
                    for (d, x) in self.grads[b.0].iter_mut().zip(&av) {
                        *d += g0 * x;
                    }
                }
                &Op::Scale { x, c } => {
                    for (d, s) in self.grads[x.0].iter_mut().zip(&g) {
                        *d += s * c;
                    }
                }
                &Op::Softmax { x } => {
                    let y: Vec<f64> = self.nodes[i].value.data().to_vec();
                    let inner: f64 = g.iter().zip(&y).map(|(gi, yi)| gi * yi).sum();
                    for ((d, gi), yi) in self.grads[x.0].iter_mut().zip(&g).zip(&y) {
                        *d += yi * (gi - inner);
                    }
                }
                Op::SoftmaxXent { logits, probs, target } => {
                    let (logits, target) = (*logits, *target);
                    let probs = probs.clone();
                    let g0 = g[0];
                    for (j, (d, p)) in self.grads[logits.0].iter_mut().zip(&probs).enumerate() {
                        let y = if j == target { 1.0 } else { 0.0 };
                        *d += g0 * (p - y);
                    }
                }
                &Op::EmbedRow { table, row } => {
                    let c = self.value(table).cols();
                    for (d, s) in self.grads[table.0][row * c..row * c + g.len()].iter_mut().zip(&g)
                    {
                        *d += s;
                    }
                }
                Op::Mean { parts } => {
                    let parts = parts.clone();
                    let k = parts.len() as f64;
                    for p in parts {
                        for (d, s) in self.grads[p.0].iter_mut().zip(&g) {
                            *d += s / k;
                        }
                    }
                }
            }
            self.grads[i] = g;
        }
        for (i, g) in self.grads.iter().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                let what = match self.nodes[i].op {
                    Op::Param(id) => format!("gradient of parameter `{}`", self.store.name(id)),
                    _ => format!("gradient of tape node {i}"),
                };
                return Err(Error::Numeric(format!("non-finite {what}")));
            }
        }
        Ok(())
    }

    /// Consumes the tape and returns the accumulated parameter gradients.
    pub fn finish(mut self) -> Vec<(ParamId, Tensor)> {
        let mut out = Vec::with_capacity(self.param_vars.len());
        let mut ids: Vec<(ParamId, Var)> = self.param_vars.drain().collect();
        ids.sort_by_key(|(_, v)| v.0);
        for (id, v) in ids {
            let g = std::mem::take(&mut self.grads[v.0]);
            let shape = self.store.value(id).shape().to_vec();
            out.push((id, Tensor::new(shape, g).expect("grad shape matches value")));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;
    use crate::nn::SgdConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_store(rng: &mut ChaCha8Rng, shapes: &[(&str, Vec<usize>)]) -> ParamStore {
        let mut store = ParamStore::new();
        for (name, shape) in shapes {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.8..0.8)).collect();
            store.add(name, Tensor::new(shape.clone(), data).unwrap());
        }
        store
    }

    #[test]
    fn forward_values_match_hand_computation() {
        let mut store = ParamStore::new();
        let m = store.add("m", Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let mut tape = Tape::new(&store);
        let mv = tape.param(m);
        let x = tape.leaf(Tensor::vector(vec![5.0, 6.0]));
        let y = tape.matvec(mv, x).unwrap();
        assert_eq!(tape.value(y).data(), &[17.0, 39.0]);
        let s = tape.slice(y, 1, 1).unwrap();
        assert_eq!(tape.value(s).data(), &[39.0]);
        let d = tape.dot(y, x).unwrap();
        assert_eq!(tape.scalar_value(d), 17.0 * 5.0 + 39.0 * 6.0);
    }

    #[test]
    fn backward_through_simple_graph() {
        // loss = dot(sigmoid(m·x), x)
        let mut store = ParamStore::new();
        let m = store.add("m", Tensor::new(vec![2, 2], vec![0.1, -0.2, 0.3, 0.4]).unwrap());
        let grads = {
            let mut tape = Tape::new(&store);
            let mv = tape.param(m);
            let x = tape.leaf(Tensor::vector(vec![0.5, -0.6]));
            let h = tape.matvec(mv, x).unwrap();
            let y = tape.sigmoid(h);
            let loss = tape.dot(y, x).unwrap();
            tape.backward(loss).unwrap();
            tape.finish()
        };
        assert_eq!(grads.len(), 1);
        assert!(grads[0].1.all_finite());
    }

    // Per-op gradient checks against central finite differences at 10
    // random points each.
    #[test]
    fn op_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..10 {
            let mut store = random_store(
                &mut rng,
                &[
                    ("m", vec![3, 4]),
                    ("a", vec![4]),
                    ("b", vec![4]),
                    ("t", vec![5, 3]),
                    ("w", vec![3]),
                ],
            );
            let target = trial % 3;
            let max_err = grad_check(&mut store, &mut |tape| {
                let m = tape.param(tape.store().id_by_name("m").unwrap());
                let a = tape.param(tape.store().id_by_name("a").unwrap());
                let b = tape.param(tape.store().id_by_name("b").unwrap());
                let t = tape.param(tape.store().id_by_name("t").unwrap());
                let w = tape.param(tape.store().id_by_name("w").unwrap());
                let ab = tape.mul(a, b)?;
                let s = tape.add(ab, a)?;
                let sg = tape.sigmoid(s);
                let th = tape.tanh(s);
                let mean = tape.mean(&[sg, th])?;
                let mv = tape.matvec(m, mean)?; // [3]
                let e = tape.embed_row(t, 2)?; // [3]
                let cat = tape.concat(&[mv, e])?; // [6]
                let sl = tape.slice(cat, 1, 3)?;
                let sm = tape.softmax(sl)?;
                let d = tape.dot(sm, w)?;
                let sc = tape.scale(d, 0.7);
                let ce = tape.softmax_xent(cat, target)?;
                tape.add(sc, ce)
            })
            .unwrap();
            assert!(max_err <= 1e-4, "trial {trial}: max rel err {max_err}");
        }
    }

    #[test]
    fn lstm_zero_parameters_zero_state_is_fixed_point() {
        let mut store = ParamStore::new();
        store.add("c.w_input", Tensor::zeros(vec![8, 3]));
        store.add("c.w_recur", Tensor::zeros(vec![8, 2]));
        store.add("c.bias", Tensor::zeros(vec![8]));
        let cell = LstmCell {
            w_input: ParamId(0),
            w_recur: ParamId(1),
            bias: ParamId(2),
            input_dim: 3,
            hidden: 2,
        };
        let mut tape = Tape::new(&store);
        let x = tape.leaf(Tensor::vector(vec![3.0, -1.0, 0.5]));
        let h = tape.leaf(Tensor::zeros(vec![2]));
        let c = tape.leaf(Tensor::zeros(vec![2]));
        let (h2, c2) = tape.lstm_step(&cell, x, h, c).unwrap();
        assert_eq!(tape.value(h2).data(), &[0.0, 0.0]);
        assert_eq!(tape.value(c2).data(), &[0.0, 0.0]);
    }

    #[test]
    fn lstm_hand_evaluated_cell_carry() {
        // zero weights, H=1, c=1: gates sigmoid(0)=0.5, candidate tanh(0)=0,
        // so c' = 0.5·1 = 0.5 and h' = 0.5·tanh(0.5)
        let mut store = ParamStore::new();
        store.add("c.w_input", Tensor::zeros(vec![4, 1]));
        store.add("c.w_recur", Tensor::zeros(vec![4, 1]));
        store.add("c.bias", Tensor::zeros(vec![4]));
        let cell = LstmCell {
            w_input: ParamId(0),
            w_recur: ParamId(1),
            bias: ParamId(2),
            input_dim: 1,
            hidden: 1,
        };
        let mut tape = Tape::new(&store);
        let x = tape.leaf(Tensor::vector(vec![7.0]));
        let h = tape.leaf(Tensor::zeros(vec![1]));
        let c = tape.leaf(Tensor::vector(vec![1.0]));
        let (h2, c2) = tape.lstm_step(&cell, x, h, c).unwrap();
        assert!((tape.scalar_value(c2) - 0.5).abs() < 1e-15);
        let expected = 0.5 * 0.5_f64.tanh();
        assert!((tape.scalar_value(h2) - expected).abs() < 1e-12);
        assert!((tape.scalar_value(h2) - 0.231059).abs() < 1e-6);
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..10 {
            let mut store = ParamStore::new();
            let mut cell_store_rng = ChaCha8Rng::seed_from_u64(100 + trial);
            let cell = LstmCell::new(&mut store, &mut cell_store_rng, "c", 3, 2);
            let input: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h0: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c0: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let max_err = grad_check(&mut store, &mut |tape| {
                let x = tape.leaf(Tensor::vector(input.clone()));
                let h = tape.leaf(Tensor::vector(h0.clone()));
                let c = tape.leaf(Tensor::vector(c0.clone()));
                let (h2, c2) = tape.lstm_step(&cell, x, h, c)?;
                let (h3, _) = tape.lstm_step(&cell, x, h2, c2)?;
                let ones = tape.leaf(Tensor::vector(vec![1.0, 1.0]));
                tape.dot(h3, ones)
            })
            .unwrap();
            assert!(max_err <= 1e-4, "trial {trial}: max rel err {max_err}");
        }
    }

    #[test]
    fn lstm_dimension_mismatch_is_config_error() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell = LstmCell::new(&mut store, &mut rng, "c", 3, 2);
        let mut tape = Tape::new(&store);
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0])); // wrong dim
        let h = tape.leaf(Tensor::zeros(vec![2]));
        let c = tape.leaf(Tensor::zeros(vec![2]));
        match tape.lstm_step(&cell, x, h, c) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let store = random_store(&mut rng, &[("m", vec![4, 4]), ("v", vec![4])]);
        let run = || {
            let mut tape = Tape::new(&store);
            let m = tape.param(store.id_by_name("m").unwrap());
            let v = tape.param(store.id_by_name("v").unwrap());
            let h = tape.matvec(m, v).unwrap();
            let s = tape.tanh(h);
            let sm = tape.softmax(s).unwrap();
            tape.value(sm).data().to_vec()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b, "bit-identical forward repeats");
    }

    #[test]
    fn training_reduces_quadratic_loss() {
        // sanity: a few SGD steps on ½‖p‖² shrink p
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::vector(vec![1.0, -2.0, 3.0]));
        for _ in 0..50 {
            let grads = {
                let mut tape = Tape::new(&store);
                let pv = tape.param(p);
                let d = tape.dot(pv, pv).unwrap();
                let loss = tape.scale(d, 0.5);
                tape.backward(loss).unwrap();
                tape.finish()
            };
            store.accumulate_grads(grads);
            sgd_step(&mut store, &SgdConfig::new(0.2, None).unwrap()).unwrap();
        }
        let norm: f64 = store.value(p).data().iter().map(|v| v * v).sum();
        assert!(norm < 1e-3, "norm {norm}");
    }
}
