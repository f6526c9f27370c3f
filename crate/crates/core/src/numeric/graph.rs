use super::tensor::{mm, mm_t, t_mm};
use super::{Gradients, NumericError, ParamId, ParamStore, Tensor, NORM_EPS};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Softmax(Var),
    InstanceNorm { x: Var, gain: Var, bias: Var, xhat: Tensor, inv_std: Vec<f64> },
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    MeanRows(Var),
    GatherRows(Var, Vec<usize>),
    LogGather(Var, Vec<Option<usize>>),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    op: Op,
    /// `None` for parameter leaves, whose value lives in the store.
    value: Option<Tensor>,
}

/// A single recorded forward pass.
#[derive(Debug)]
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    consumed: bool,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumericError {
    NumericError::Shape { op, detail: format!("{}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols()) }
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph { store, nodes: Vec::new(), param_vars: vec![None; store.len()], consumed: false }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (_, Some(t)) => t,
            (Op::Param(id), None) => self.store.value(*id),
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value: Some(value) });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Input, t)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node { op: Op::Param(id), value: None });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(shape_err("matmul", ta, tb));
        }
        let out = mm(ta, tb);
        Ok(self.push(Op::MatMul(a, b), out))
    }

    /// `a * bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() {
            return Err(shape_err("matmul_t", ta, tb));
        }
        let out = mm_t(ta, tb);
        Ok(self.push(Op::MatMulT(a, b), out))
    }

    fn zip(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, NumericError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.rows(), ta.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let out = self.zip(a, b, "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let out = self.zip(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), out))
    }

    /// Adds the `1 x n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if tb.rows() != 1 || tb.cols() != ta.cols() {
            return Err(shape_err("add_row", ta, tb));
        }
        let out = Tensor::from_fn(ta.rows(), ta.cols(), |r, c| ta.get(r, c) + tb.get(0, c));
        Ok(self.push(Op::AddRow(a, b), out))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(Op::Scale(a, c), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), out)
    }

    /// Row-wise softmax. Entries where `mask` is false get probability
    /// exactly zero; every row needs at least one unmasked entry.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var, NumericError> {
        let ta = self.value(a);
        let (rows, cols) = ta.shape();
        if let Some(m) = mask {
            if m.len() != rows * cols {
                return Err(NumericError::Shape {
                    op: "softmax",
                    detail: format!("mask of {} for {rows}x{cols}", m.len()),
                });
            }
        }
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let keep = |c: usize| mask.is_none_or(|m| m[r * cols + c]);
            let mut hi = f64::NEG_INFINITY;
            for c in (0..cols).filter(|&c| keep(c)) {
                hi = hi.max(ta.get(r, c));
            }
            if hi == f64::NEG_INFINITY {
                return Err(NumericError::FullyMasked { row: r });
            }
            let mut total = 0.0;
            for c in (0..cols).filter(|&c| keep(c)) {
                let e = (ta.get(r, c) - hi).exp();
                out.set(r, c, e);
                total += e;
            }
            for c in 0..cols {
                out.set(r, c, out.get(r, c) / total);
            }
        }
        Ok(self.push(Op::Softmax(a), out))
    }

    /// Normalizes every column of `x` over its rows to zero mean and unit
    /// variance, then applies the `1 x d` gain and bias.
    pub fn instance_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, NumericError> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let (n, d) = tx.shape();
        if tg.shape() != (1, d) || tb.shape() != (1, d) {
            return Err(shape_err("instance_norm", tx, tg));
        }
        let mut xhat = Tensor::zeros(n, d);
        let mut inv_std = vec![0.0; d];
        let mut out = Tensor::zeros(n, d);
        for c in 0..d {
            let mean = (0..n).map(|r| tx.get(r, c)).sum::<f64>() / n as f64;
            let var = (0..n).map(|r| (tx.get(r, c) - mean).powi(2)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            inv_std[c] = is;
            for r in 0..n {
                let h = (tx.get(r, c) - mean) * is;
                xhat.set(r, c, h);
                out.set(r, c, tg.get(0, c) * h + tb.get(0, c));
            }
        }
        Ok(self.push(Op::InstanceNorm { x, gain, bias, xhat, inv_std }, out))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(shape_err("concat_cols", self.value(parts[0]), t));
            }
            cols += t.cols();
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            for r in 0..rows {
                for c in 0..t.cols() {
                    out.set(r, off + c, t.get(r, c));
                }
            }
            off += t.cols();
        }
        Ok(self.push(Op::ConcatCols(parts.to_vec()), out))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumericError> {
        let ta = self.value(a);
        if start + len > ta.cols() {
            return Err(NumericError::Shape {
                op: "slice_cols",
                detail: format!("columns {start}..{} of {}", start + len, ta.cols()),
            });
        }
        let out = Tensor::from_fn(ta.rows(), len, |r, c| ta.get(r, start + c));
        Ok(self.push(Op::SliceCols(a, start), out))
    }

    /// Column means as a `1 x d` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let n = ta.rows() as f64;
        let out = Tensor::from_fn(1, ta.cols(), |_, c| (0..ta.rows()).map(|r| ta.get(r, c)).sum::<f64>() / n);
        self.push(Op::MeanRows(a), out)
    }

    /// Stacks rows `idx` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, NumericError> {
        let ta = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= ta.rows()) {
            return Err(NumericError::Shape { op: "gather_rows", detail: format!("row {bad} of {}", ta.rows()) });
        }
        let out = Tensor::from_fn(idx.len(), ta.cols(), |r, c| ta.get(idx[r], c));
        Ok(self.push(Op::GatherRows(a, idx.to_vec()), out))
    }

    /// `rows x 1` column holding `ln a[r, picks[r]]`, or 0 where the pick is `None`.
    pub fn log_gather(&mut self, a: Var, picks: &[Option<usize>]) -> Result<Var, NumericError> {
        let ta = self.value(a);
        if picks.len() != ta.rows() || picks.iter().flatten().any(|&c| c >= ta.cols()) {
            return Err(NumericError::Shape {
                op: "log_gather",
                detail: format!("{} picks for {}x{}", picks.len(), ta.rows(), ta.cols()),
            });
        }
        let out = Tensor::from_fn(ta.rows(), 1, |r, _| picks[r].map_or(0.0, |c| ta.get(r, c).ln()));
        Ok(self.push(Op::LogGather(a, picks.to_vec()), out))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(Op::Sum(a), out)
    }

    /// Reverse accumulation from a `1 x 1` loss. A graph supports one
    /// backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, NumericError> {
        if self.consumed {
            return Err(NumericError::BackwardTwice);
        }
        let (r, c) = self.value(loss).shape();
        if (r, c) != (1, 1) {
            return Err(NumericError::NotScalar(r, c));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::zeros(self.store);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop(i, g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn backprop(&self, i: usize, g: Tensor, grads: &mut [Option<Tensor>], out: &mut Gradients) {
        fn acc(grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot => *slot = Some(t),
            }
        }
        let y = self.nodes[i].value.as_ref();
        match &self.nodes[i].op {
            Op::Input => {}
            Op::Param(id) => out.grads[id.0].add_assign(&g),
            Op::MatMul(a, b) => {
                acc(grads, *a, mm_t(&g, self.value(*b)));
                acc(grads, *b, t_mm(self.value(*a), &g));
            }
            Op::MatMulT(a, b) => {
                acc(grads, *a, mm(&g, self.value(*b)));
                acc(grads, *b, t_mm(&g, self.value(*a)));
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g);
            }
            Op::AddRow(a, b) => {
                let row = Tensor::from_fn(1, g.cols(), |_, c| (0..g.rows()).map(|r| g.get(r, c)).sum());
                acc(grads, *a, g);
                acc(grads, *b, row);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = Tensor::from_fn(g.rows(), g.cols(), |r, c| g.get(r, c) * tb.get(r, c));
                let gb = Tensor::from_fn(g.rows(), g.cols(), |r, c| g.get(r, c) * ta.get(r, c));
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Scale(a, c) => acc(grads, *a, g.map(|x| x * c)),
            Op::Relu(a) => {
                let ta = self.value(*a);
                let ga = Tensor::from_fn(g.rows(), g.cols(), |r, c| if ta.get(r, c) > 0.0 { g.get(r, c) } else { 0.0 });
                acc(grads, *a, ga);
            }
            Op::Tanh(a) => {
                let y = y.unwrap();
                let ga = Tensor::from_fn(g.rows(), g.cols(), |r, c| g.get(r, c) * (1.0 - y.get(r, c).powi(2)));
                acc(grads, *a, ga);
            }
            Op::Softmax(a) => {
                let y = y.unwrap();
                let mut ga = Tensor::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(p, q)| p * q).sum();
                    for c in 0..g.cols() {
                        ga.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                acc(grads, *a, ga);
            }
            Op::InstanceNorm { x, gain, bias, xhat, inv_std } => {
                let (n, d) = g.shape();
                let tg = self.value(*gain);
                let mut gx = Tensor::zeros(n, d);
                let mut gg = Tensor::zeros(1, d);
                let mut gb = Tensor::zeros(1, d);
                for c in 0..d {
                    let mut mean_dh = 0.0;
                    let mut mean_dh_h = 0.0;
                    for r in 0..n {
                        let dy = g.get(r, c);
                        gb.set(0, c, gb.get(0, c) + dy);
                        gg.set(0, c, gg.get(0, c) + dy * xhat.get(r, c));
                        let dh = dy * tg.get(0, c);
                        mean_dh += dh;
                        mean_dh_h += dh * xhat.get(r, c);
                    }
                    mean_dh /= n as f64;
                    mean_dh_h /= n as f64;
                    for r in 0..n {
                        let dh = g.get(r, c) * tg.get(0, c);
                        gx.set(r, c, inv_std[c] * (dh - mean_dh - xhat.get(r, c) * mean_dh_h));
                    }
                }
                acc(grads, *x, gx);
                acc(grads, *gain, gg);
                acc(grads, *bias, gb);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    acc(grads, p, Tensor::from_fn(g.rows(), w, |r, c| g.get(r, off + c)));
                    off += w;
                }
            }
            Op::SliceCols(a, start) => {
                let ta = self.value(*a);
                let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        ga.set(r, start + c, g.get(r, c));
                    }
                }
                acc(grads, *a, ga);
            }
            Op::MeanRows(a) => {
                let n = self.value(*a).rows();
                acc(grads, *a, Tensor::from_fn(n, g.cols(), |_, c| g.get(0, c) / n as f64));
            }
            Op::GatherRows(a, idx) => {
                let ta = self.value(*a);
                let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                for (r, &src) in idx.iter().enumerate() {
                    for c in 0..g.cols() {
                        ga.set(src, c, ga.get(src, c) + g.get(r, c));
                    }
                }
                acc(grads, *a, ga);
            }
            Op::LogGather(a, picks) => {
                let ta = self.value(*a);
                let mut ga = Tensor::zeros(ta.rows(), ta.cols());
                for (r, pick) in picks.iter().enumerate() {
                    if let Some(c) = *pick {
                        ga.set(r, c, g.get(r, 0) / ta.get(r, c));
                    }
                }
                acc(grads, *a, ga);
            }
            Op::Sum(a) => {
                let ta = self.value(*a);
                let s = g.item();
                acc(grads, *a, Tensor::from_fn(ta.rows(), ta.cols(), |_, _| s));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let mut store = ParamStore::new();
        let id = store.register("w", Tensor::row_vector(vec![1.0, -2.0, 0.5])).unwrap();
        let mut g = Graph::new(&store);
        let w = g.param(id);
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(id).data(), &[2.0, -4.0, 1.0]);
        assert!(matches!(g.backward(loss), Err(NumericError::BackwardTwice)));
    }

    #[test]
    fn matmul_sum_gradient_is_b_transpose_broadcast() {
        let mut store = ParamStore::new();
        let a = store.register("a", Tensor::from_fn(2, 3, |r, c| (r + c) as f64)).unwrap();
        let b = Tensor::from_fn(3, 2, |r, c| (r * 2 + c) as f64 - 1.5);
        let mut g = Graph::new(&store);
        let (va, vb) = (g.param(a), g.input(b.clone()));
        let p = g.matmul(va, vb).unwrap();
        let loss = g.sum(p);
        let grads = g.backward(loss).unwrap();
        let expect = Tensor::from_fn(2, 3, |_, k| b.get(k, 0) + b.get(k, 1));
        assert_eq!(grads.get(a), &expect);
    }

    #[test]
    fn softmax_contract() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::row_vector(vec![0.3; 4]));
        let p = g.softmax(x, None).unwrap();
        assert!(g.value(p).data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let q = g.softmax(x, Some(&[false, true, false, false])).unwrap();
        assert_eq!(g.value(q).data(), &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(g.softmax(x, Some(&[false; 4])), Err(NumericError::FullyMasked { row: 0 })));
    }

    #[test]
    fn softmax_matches_scalar_reference() {
        let xs = [0.1, -1.3, 2.2, 0.0, 0.7];
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::row_vector(xs.to_vec()));
        let p = g.softmax(x, None).unwrap();
        let z: f64 = xs.iter().map(|v| v.exp()).sum();
        for (k, v) in xs.iter().enumerate() {
            assert!((g.value(p).get(0, k) - v.exp() / z).abs() < 1e-15);
        }
        assert!((g.value(p).data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn instance_norm_moments() {
        let mut store = ParamStore::new();
        let gain = store.register("g", Tensor::row_vector(vec![1.0; 3])).unwrap();
        let bias = store.register("b", Tensor::zeros(1, 3)).unwrap();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::from_fn(5, 3, |r, c| ((r * 3 + c) as f64).sin() * (c + 1) as f64));
        let (vg, vb) = (g.param(gain), g.param(bias));
        let y = g.instance_norm(x, vg, vb).unwrap();
        for c in 0..3 {
            let col: Vec<f64> = (0..5).map(|r| g.value(x).get(r, c)).collect();
            let m = col.iter().sum::<f64>() / 5.0;
            let v = col.iter().map(|z| (z - m).powi(2)).sum::<f64>() / 5.0;
            let out: Vec<f64> = (0..5).map(|r| g.value(y).get(r, c)).collect();
            let om = out.iter().sum::<f64>() / 5.0;
            let ov = out.iter().map(|z| (z - om).powi(2)).sum::<f64>() / 5.0;
            assert!(om.abs() < 1e-9);
            // Unit variance up to the stabilising epsilon.
            assert!((ov - v / (v + NORM_EPS)).abs() < 1e-9);
        }
    }

    #[test]
    fn relu_and_shapes() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let x = g.input(Tensor::row_vector(vec![-1.0, 2.0]));
        let r = g.relu(x);
        assert_eq!(g.value(r).data(), &[0.0, 2.0]);
        let y = g.input(Tensor::zeros(3, 3));
        assert!(matches!(g.matmul(x, y), Err(NumericError::Shape { .. })));
        assert!(matches!(g.add(x, y), Err(NumericError::Shape { .. })));
        let loss = g.sum(r);
        let _ = g.value(loss);
        let mut h = Graph::new(&store);
        let v = h.input(Tensor::zeros(2, 2));
        assert!(matches!(h.backward(v), Err(NumericError::NotScalar(2, 2))));
    }
}
