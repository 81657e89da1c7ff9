//! Reverse-mode differentiation over dense row-major `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Model parameters
//! are borrowed from a parameter slice instead of copied; [`Tape::backward`]
//! returns one gradient slot per parameter.

use ndarray::{s, Array2, Axis};

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Sparse row weights: output row `g` is `sum(w * input[row])` over `groups[g]`.
pub type RowGroups = Vec<Vec<(usize, f64)>>;

enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Mat),
    Scale(Var, f64),
    Sigmoid(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Mat,
        inv_std: Vec<f64>,
    },
    GatherRows(Var, Vec<usize>),
    RowCombine(Var, RowGroups),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Reshape(Var),
    MaxOf(Vec<Var>, Vec<u32>),
    Bce {
        probs: Var,
        targets: Mat,
        eps: f64,
    },
}

struct Node {
    op: Op,
    value: Option<Mat>,
}

pub struct Tape<'p> {
    params: &'p [Mat],
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn accumulate(slot: &mut Option<Mat>, g: Mat) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Mat]) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(i), _) => &self.params[*i],
            (_, Some(m)) => m,
            _ => unreachable!("non-parameter node without a value"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    fn push(&mut self, op: Op, value: Mat) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(Op::Constant, m)
    }

    pub fn param(&mut self, index: usize) -> Var {
        assert!(index < self.params.len(), "parameter index out of range");
        self.nodes.push(Node {
            op: Op::Param(index),
            value: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        self.push(Op::Transpose(a), v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), v)
    }

    /// `a` (n×m) plus the single row `b` (1×m) broadcast over rows.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let bv = self.value(b);
        assert_eq!(bv.nrows(), 1, "add_row expects a single-row bias");
        let v = self.value(a) + bv;
        self.push(Op::AddRow(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), v)
    }

    pub fn mul_const(&mut self, a: Var, c: Mat) -> Var {
        let v = self.value(a) * &c;
        self.push(Op::MulConst(a, c), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(Op::Scale(a, c), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(Op::Gelu(a), v)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        self.push(Op::SoftmaxRows(a), v)
    }

    /// Row-wise layer normalization with a learned 1×m gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let cols = xv.ncols() as f64;
        let mut normalized = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in normalized.rows_mut() {
            let mean = row.sum() / cols;
            let var = row.fold(0.0, |acc, &v| acc + (v - mean) * (v - mean)) / cols;
            let inv = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
            inv_std.push(inv);
        }
        let out = &normalized * self.value(gain) + self.value(bias);
        self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            },
            out,
        )
    }

    pub fn gather_rows(&mut self, table: Var, rows: Vec<usize>) -> Var {
        let tv = self.value(table);
        let mut out = Mat::zeros((rows.len(), tv.ncols()));
        for (o, &r) in rows.iter().enumerate() {
            out.row_mut(o).assign(&tv.row(r));
        }
        self.push(Op::GatherRows(table, rows), out)
    }

    /// Weighted sums of input rows; an empty group yields a zero row.
    pub fn row_combine(&mut self, a: Var, groups: RowGroups) -> Var {
        let av = self.value(a);
        let mut out = Mat::zeros((groups.len(), av.ncols()));
        for (g, group) in groups.iter().enumerate() {
            let mut row = out.row_mut(g);
            let mut iter = group.iter();
            if let Some(&(r, w)) = iter.next() {
                row.assign(&(&av.row(r) * w));
                for &(r, w) in iter {
                    row.scaled_add(w, &av.row(r));
                }
            }
        }
        self.push(Op::RowCombine(a, groups), out)
    }

    /// Uniform mean over each group of row indices.
    pub fn row_means(&mut self, a: Var, groups: &[Vec<usize>]) -> Var {
        let weighted = groups
            .iter()
            .map(|g| {
                let w = 1.0 / g.len() as f64;
                g.iter().map(|&r| (r, w)).collect()
            })
            .collect();
        self.row_combine(a, weighted)
    }

    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("concat_rows width mismatch");
        self.push(Op::ConcatRows(parts), v)
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("concat_cols height mismatch");
        self.push(Op::ConcatCols(parts), v)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(Op::SliceCols(a, start), v)
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let av = self.value(a);
        let data: Vec<f64> = av.iter().copied().collect();
        let v = Mat::from_shape_vec((rows, cols), data).expect("reshape size mismatch");
        self.push(Op::Reshape(a), v)
    }

    /// Elementwise maximum across same-shape inputs; ties go to the earliest input.
    pub fn max_of(&mut self, parts: Vec<Var>) -> Var {
        assert!(!parts.is_empty(), "max_of needs at least one input");
        let mut out = self.value(parts[0]).clone();
        let mut arg = vec![0u32; out.len()];
        for (k, &p) in parts.iter().enumerate().skip(1) {
            let pv = self.value(p);
            for ((o, a), &x) in out.iter_mut().zip(arg.iter_mut()).zip(pv.iter()) {
                if x > *o {
                    *o = x;
                    *a = k as u32;
                }
            }
        }
        self.push(Op::MaxOf(parts, arg), out)
    }

    /// Mean binary cross-entropy of probabilities against 0/1 targets,
    /// clamping probabilities into `[eps, 1 - eps]` before the logarithms.
    pub fn bce_mean(&mut self, probs: Var, targets: Mat, eps: f64) -> Var {
        let pv = self.value(probs);
        assert_eq!(pv.dim(), targets.dim(), "bce shape mismatch");
        let n = pv.len() as f64;
        let total: f64 = pv
            .iter()
            .zip(targets.iter())
            .map(|(&p, &y)| {
                let p = p.clamp(eps, 1.0 - eps);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        self.push(
            Op::Bce {
                probs,
                targets,
                eps,
            },
            Mat::from_elem((1, 1), total / n),
        )
    }

    /// Back-propagates from the 1×1 node `root`; returns one slot per parameter.
    pub fn backward(&self, root: Var) -> Vec<Option<Mat>> {
        assert_eq!(self.value(root).dim(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Mat>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[root.0] = Some(Mat::from_elem((1, 1), 1.0));
        let mut param_grads: Vec<Option<Mat>> = Vec::with_capacity(self.params.len());
        param_grads.resize_with(self.params.len(), || None);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            let out = node.value.as_ref();
            match &node.op {
                Op::Constant => {}
                Op::Param(i) => accumulate(&mut param_grads[*i], g),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Transpose(a) => accumulate(&mut grads[a.0], g.t().to_owned()),
                Op::Add(a, b) => {
                    accumulate(&mut grads[b.0], g.clone());
                    accumulate(&mut grads[a.0], g);
                }
                Op::AddRow(a, b) => {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[b.0], gb);
                    accumulate(&mut grads[a.0], g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::MulConst(a, c) => accumulate(&mut grads[a.0], g * c),
                Op::Scale(a, c) => accumulate(&mut grads[a.0], g * *c),
                Op::Sigmoid(a) => {
                    let y = out.expect("value");
                    let ga = ndarray::Zip::from(&g)
                        .and(y)
                        .map_collect(|&g, &y| g * y * (1.0 - y));
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let ga = ndarray::Zip::from(&g)
                        .and(x)
                        .map_collect(|&g, &x| g * gelu_grad(x));
                    accumulate(&mut grads[a.0], ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = out.expect("value");
                    let mut ga = g;
                    for (mut grow, yrow) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot = grow.dot(&yrow);
                        grow.zip_mut_with(&yrow, |gv, &yv| *gv = yv * (*gv - dot));
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normalized,
                    inv_std,
                } => {
                    let gain_v = self.value(*gain);
                    let ggain = (&g * normalized).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gbias = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let gnorm = &g * gain_v;
                    let cols = normalized.ncols() as f64;
                    let mut gx = Mat::zeros(normalized.dim());
                    for (r, &inv) in inv_std.iter().enumerate() {
                        let gn = gnorm.row(r);
                        let xh = normalized.row(r);
                        let mean_g = gn.sum() / cols;
                        let mean_gx = gn.dot(&xh) / cols;
                        let mut out_row = gx.row_mut(r);
                        for c in 0..normalized.ncols() {
                            out_row[c] = inv * (gn[c] - mean_g - xh[c] * mean_gx);
                        }
                    }
                    accumulate(&mut grads[gain.0], ggain);
                    accumulate(&mut grads[bias.0], gbias);
                    accumulate(&mut grads[x.0], gx);
                }
                Op::GatherRows(table, rows) => {
                    let mut gt = Mat::zeros(self.value(*table).dim());
                    for (o, &r) in rows.iter().enumerate() {
                        let mut dst = gt.row_mut(r);
                        dst += &g.row(o);
                    }
                    accumulate(&mut grads[table.0], gt);
                }
                Op::RowCombine(a, groups) => {
                    let mut ga = Mat::zeros(self.value(*a).dim());
                    for (gi, group) in groups.iter().enumerate() {
                        for &(r, w) in group {
                            ga.row_mut(r).scaled_add(w, &g.row(gi));
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = self.value(*p).nrows();
                        let part = g.slice(s![start..start + n, ..]).to_owned();
                        accumulate(&mut grads[p.0], part);
                        start += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let n = self.value(*p).ncols();
                        let part = g.slice(s![.., start..start + n]).to_owned();
                        accumulate(&mut grads[p.0], part);
                        start += n;
                    }
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Mat::zeros(self.value(*a).dim());
                    ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Reshape(a) => {
                    let dim = self.value(*a).dim();
                    let data: Vec<f64> = g.iter().copied().collect();
                    accumulate(&mut grads[a.0], Mat::from_shape_vec(dim, data).expect("reshape"));
                }
                Op::MaxOf(parts, arg) => {
                    let mut split: Vec<Mat> = parts.iter().map(|_| Mat::zeros(g.dim())).collect();
                    for (flat, (&gv, &k)) in g.iter().zip(arg.iter()).enumerate() {
                        let slice = split[k as usize]
                            .as_slice_mut()
                            .expect("standard layout");
                        slice[flat] = gv;
                    }
                    for (p, gp) in parts.iter().zip(split) {
                        accumulate(&mut grads[p.0], gp);
                    }
                }
                Op::Bce {
                    probs,
                    targets,
                    eps,
                } => {
                    let pv = self.value(*probs);
                    let upstream = g[[0, 0]];
                    let n = pv.len() as f64;
                    let gp = ndarray::Zip::from(pv).and(targets).map_collect(|&p, &y| {
                        if p <= *eps || p >= 1.0 - *eps {
                            0.0
                        } else {
                            upstream * (-y / p + (1.0 - y) / (1.0 - p)) / n
                        }
                    });
                    accumulate(&mut grads[probs.0], gp);
                }
            }
        }
        param_grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central-difference check of every parameter entry of `f`.
    fn check(params: &mut [Mat], f: impl Fn(&mut Tape) -> Var) {
        let analytic = {
            let mut tape = Tape::new(params);
            let root = f(&mut tape);
            tape.backward(root)
        };
        let h = 1e-6;
        for p in 0..params.len() {
            for idx in 0..params[p].len() {
                let orig = params[p].as_slice().unwrap()[idx];
                params[p].as_slice_mut().unwrap()[idx] = orig + h;
                let up = {
                    let mut t = Tape::new(params);
                    let r = f(&mut t);
                    t.scalar(r)
                };
                params[p].as_slice_mut().unwrap()[idx] = orig - h;
                let down = {
                    let mut t = Tape::new(params);
                    let r = f(&mut t);
                    t.scalar(r)
                };
                params[p].as_slice_mut().unwrap()[idx] = orig;
                let numeric = (up - down) / (2.0 * h);
                let got = analytic[p]
                    .as_ref()
                    .map(|g| g.as_slice().unwrap()[idx])
                    .unwrap_or(0.0);
                let denom = numeric.abs().max(got.abs()).max(1e-8);
                assert!(
                    (numeric - got).abs() / denom < 1e-5 || (numeric - got).abs() < 1e-9,
                    "param {p} entry {idx}: numeric {numeric} analytic {got}"
                );
            }
        }
    }

    #[test]
    fn matmul_softmax_layernorm_gradients() {
        let mut params = vec![
            array![[0.3, -0.2, 0.5], [0.1, 0.4, -0.6]],
            array![[0.2, 0.7], [-0.3, 0.1], [0.5, -0.4]],
            array![[1.1, 0.9]],
            array![[0.05, -0.02]],
        ];
        check(&mut params, |t| {
            let a = t.param(0);
            let b = t.param(1);
            let ab = t.matmul(a, b);
            let sm = t.softmax_rows(ab);
            let g = t.param(2);
            let bias = t.param(3);
            let ln = t.layer_norm(ab, g, bias, 1e-12);
            let mixed = t.mul(sm, ln);
            let act = t.gelu(mixed);
            let w = t.constant(Mat::from_elem((2, 1), 1.0));
            let s = t.matmul(act, w);
            let tr = t.transpose(s);
            let one = t.constant(Mat::from_elem((2, 1), 0.5));
            let r = t.matmul(tr, one);
            t.scale(r, 3.0)
        });
    }

    #[test]
    fn structural_op_gradients() {
        let mut params = vec![
            array![[0.3, -0.2, 0.5, 0.9], [0.1, 0.4, -0.6, 0.2], [0.7, -0.1, 0.2, -0.3]],
            array![[0.25, -0.5, 0.75, 0.1]],
        ];
        check(&mut params, |t| {
            let a = t.param(0);
            let bias = t.param(1);
            let g = t.gather_rows(a, vec![2, 0, 2]);
            let g = t.add_row(g, bias);
            let left = t.slice_cols(g, 0, 2);
            let right = t.slice_cols(g, 2, 2);
            let m = t.max_of(vec![left, right]);
            let wide = t.concat_cols(vec![m, right]);
            let m = t.slice_cols(wide, 1, 2);
            let stacked = t.concat_rows(vec![m, left]);
            let comb = t.row_combine(stacked, vec![vec![(0, 0.5), (3, 0.5)], vec![(1, 2.0)], vec![]]);
            let flat = t.reshape(comb, 1, 6);
            let p = t.sigmoid(flat);
            t.bce_mean(p, array![[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]], 1e-12)
        });
    }

    #[test]
    fn bce_of_half_is_ln2() {
        let params: Vec<Mat> = vec![];
        let mut t = Tape::new(&params);
        let p = t.constant(Mat::from_elem((3, 4), 0.5));
        let l = t.bce_mean(p, Mat::from_shape_fn((3, 4), |(i, j)| ((i + j) % 2) as f64), 1e-12);
        assert!((t.scalar(l) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn row_combine_single_weight_is_bitwise_copy() {
        let params: Vec<Mat> = vec![];
        let mut t = Tape::new(&params);
        let a = t.constant(array![[-0.0, 1.5e-300], [3.25, -7.0]]);
        let c = t.row_combine(a, vec![vec![(1, 1.0)], vec![(0, 1.0)]]);
        let out = t.value(c);
        assert_eq!(out[[0, 0]].to_bits(), 3.25f64.to_bits());
        assert_eq!(out[[1, 0]].to_bits(), (-0.0f64).to_bits());
        assert_eq!(out[[1, 1]].to_bits(), 1.5e-300f64.to_bits());
    }
}
