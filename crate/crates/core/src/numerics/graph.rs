//! Reverse-mode differentiation over vector-valued nodes.
//!
//! A [`Graph`] borrows a [`ParameterSet`] read-only and records every
//! operation as a node. Matrices only appear as parameters; all recorded
//! intermediate values are flat vectors. Calling [`Graph::backward`] returns
//! a dense [`Gradients`] buffer for the parameter set, so several graphs
//! can run against one parameter snapshot and their gradients be summed.

use std::rc::Rc;

use super::tensor::{Gradients, ParamId, ParameterSet};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Lookup(ParamId, usize),
    MatVec(ParamId, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Mask(Var, Rc<Vec<f64>>),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Sum(Vec<Var>),
    WeightedSum(Var, Vec<Var>),
    Softmax(Var),
    /// Stores the softmax of the logits for the backward pass.
    CrossEntropy(Var, usize, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Graph<'p> {
    params: &'p ParameterSet,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParameterSet) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(1024),
        }
    }

    pub fn params(&self) -> &'p ParameterSet {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let value = self.value(v);
        debug_assert_eq!(value.len(), 1);
        value[0]
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.constant(vec![0.0; n])
    }

    /// The whole parameter as a flat vector (used for biases).
    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.params.tensor(id).values().to_vec();
        self.push(value, Op::Param(id))
    }

    /// Row `index` of an embedding matrix.
    pub fn lookup(&mut self, table: ParamId, index: usize) -> Var {
        let value = self.params.tensor(table).row(index).to_vec();
        self.push(value, Op::Lookup(table, index))
    }

    /// `W x` with `W` a parameter of shape `out × in`.
    pub fn matvec(&mut self, w: ParamId, x: Var) -> Var {
        let t = self.params.tensor(w);
        let (rows, cols) = (t.rows(), t.cols());
        let xv = &self.nodes[x.0].value;
        assert_eq!(cols, xv.len(), "matvec: matrix has {cols} columns, input has {}", xv.len());
        let wv = t.values();
        let value = (0..rows)
            .map(|r| dot(&wv[r * cols..(r + 1) * cols], xv))
            .collect();
        self.push(value, Op::MatVec(w, x))
    }

    /// `W x + b`.
    pub fn affine(&mut self, w: ParamId, b: ParamId, x: Var) -> Var {
        let wx = self.matvec(w, x);
        let bias = self.param(b);
        self.add(wx, bias)
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "elementwise operands differ in length");
        av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |x, y| x - y);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.zip_with(a, b, |x, y| x * y);
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).iter().map(|x| x * factor).collect();
        self.push(value, Op::Scale(a, factor))
    }

    /// Elementwise product with a constant mask (dropout).
    pub fn mask(&mut self, a: Var, mask: Rc<Vec<f64>>) -> Var {
        let value = self
            .value(a)
            .iter()
            .zip(mask.iter())
            .map(|(x, m)| x * m)
            .collect();
        self.push(value, Op::Mask(a, mask))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(value, Op::Tanh(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut value = Vec::with_capacity(parts.iter().map(|&p| self.dim(p)).sum());
        for &p in parts {
            value.extend_from_slice(self.value(p));
        }
        self.push(value, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a)[start..end].to_vec();
        self.push(value, Op::Slice(a, start))
    }

    /// Sum of equally sized vectors.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "sum of nothing");
        let mut value = self.value(parts[0]).to_vec();
        for &p in &parts[1..] {
            value
                .iter_mut()
                .zip(self.value(p))
                .for_each(|(a, b)| *a += b);
        }
        self.push(value, Op::Sum(parts.to_vec()))
    }

    /// `Σ_i weights[i] · items[i]`.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Var {
        assert_eq!(self.dim(weights), items.len());
        let width = self.dim(items[0]);
        let mut value = vec![0.0; width];
        for (i, &item) in items.iter().enumerate() {
            let w = self.value(weights)[i];
            value
                .iter_mut()
                .zip(self.value(item))
                .for_each(|(a, b)| *a += w * b);
        }
        self.push(value, Op::WeightedSum(weights, items.to_vec()))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax(self.value(a));
        self.push(value, Op::Softmax(a))
    }

    /// `-log softmax(logits)[target]` as a scalar node.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let probs = softmax(self.value(logits));
        assert!(target < probs.len(), "target {target} out of range");
        let loss = -log_softmax_at(self.value(logits), target);
        self.push(vec![loss], Op::CrossEntropy(logits, target, probs))
    }

    /// Back-propagate from a scalar node, seeding its gradient with `seed`.
    pub fn backward_with_seed(&self, root: Var, seed: f64) -> Gradients {
        let mut pgrads = Gradients::zeros_like(self.params);
        self.backward_into(root, seed, &mut pgrads);
        pgrads
    }

    /// Back-propagate from a scalar node and add the parameter gradients
    /// into `pgrads`.
    pub fn backward_into(&self, root: Var, seed: f64, pgrads: &mut Gradients) {
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        assert_eq!(self.dim(root), 1, "backward root must be scalar");
        grads[root.0] = Some(vec![seed]);

        fn acc(grads: &mut [Option<Vec<f64>>], nodes: &[Node], v: Var, f: impl FnOnce(&mut [f64])) {
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
            f(slot);
        }

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    if self.params.tensor(*id).requires_grad() {
                        add_into(pgrads.get_mut(*id), &g);
                    }
                }
                Op::Lookup(id, row) => {
                    let t = self.params.tensor(*id);
                    if t.requires_grad() {
                        let c = t.cols();
                        add_into(&mut pgrads.get_mut(*id)[row * c..(row + 1) * c], &g);
                    }
                }
                Op::MatVec(w, x) => {
                    let t = self.params.tensor(*w);
                    let cols = t.cols();
                    let xv = &self.nodes[x.0].value;
                    if t.requires_grad() {
                        let gw = pgrads.get_mut(*w);
                        for (r, &gr) in g.iter().enumerate() {
                            if gr != 0.0 {
                                gw[r * cols..(r + 1) * cols]
                                    .iter_mut()
                                    .zip(xv)
                                    .for_each(|(a, &b)| *a += gr * b);
                            }
                        }
                    }
                    let wv = t.values();
                    acc(&mut grads, &self.nodes, *x, |gx| {
                        for (r, &gr) in g.iter().enumerate() {
                            if gr != 0.0 {
                                gx.iter_mut()
                                    .zip(&wv[r * cols..(r + 1) * cols])
                                    .for_each(|(a, &b)| *a += gr * b);
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    acc(&mut grads, &self.nodes, *a, |ga| add_into(ga, &g));
                    acc(&mut grads, &self.nodes, *b, |gb| add_into(gb, &g));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, &self.nodes, *a, |ga| add_into(ga, &g));
                    acc(&mut grads, &self.nodes, *b, |gb| {
                        gb.iter_mut().zip(&g).for_each(|(x, y)| *x -= y)
                    });
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    acc(&mut grads, &self.nodes, *a, |ga| {
                        for k in 0..g.len() {
                            ga[k] += g[k] * bv[k];
                        }
                    });
                    acc(&mut grads, &self.nodes, *b, |gb| {
                        for k in 0..g.len() {
                            gb[k] += g[k] * av[k];
                        }
                    });
                }
                Op::Scale(a, factor) => {
                    acc(&mut grads, &self.nodes, *a, |ga| {
                        ga.iter_mut().zip(&g).for_each(|(x, y)| *x += factor * y)
                    });
                }
                Op::Mask(a, mask) => {
                    acc(&mut grads, &self.nodes, *a, |ga| {
                        for k in 0..g.len() {
                            ga[k] += g[k] * mask[k];
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(&mut grads, &self.nodes, *a, |ga| {
                        for k in 0..g.len() {
                            ga[k] += g[k] * y[k] * (1.0 - y[k]);
                        }
                    });
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(&mut grads, &self.nodes, *a, |ga| {
                        for k in 0..g.len() {
                            ga[k] += g[k] * (1.0 - y[k] * y[k]);
                        }
                    });
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.nodes[p.0].value.len();
                        let seg = &g[offset..offset + n];
                        acc(&mut grads, &self.nodes, p, |gp| add_into(gp, seg));
                        offset += n;
                    }
                }
                Op::Slice(a, start) => {
                    let start = *start;
                    acc(&mut grads, &self.nodes, *a, |ga| {
                        add_into(&mut ga[start..start + g.len()], &g)
                    });
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        acc(&mut grads, &self.nodes, p, |gp| add_into(gp, &g));
                    }
                }
                Op::WeightedSum(weights, items) => {
                    let wv = &self.nodes[weights.0].value;
                    let gw: Vec<f64> = items
                        .iter()
                        .map(|it| dot(&self.nodes[it.0].value, &g))
                        .collect();
                    acc(&mut grads, &self.nodes, *weights, |gws| add_into(gws, &gw));
                    for (k, &it) in items.iter().enumerate() {
                        let w = wv[k];
                        acc(&mut grads, &self.nodes, it, |gi| {
                            gi.iter_mut().zip(&g).for_each(|(x, y)| *x += w * y)
                        });
                    }
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let inner = dot(y, &g);
                    acc(&mut grads, &self.nodes, *a, |ga| {
                        for k in 0..g.len() {
                            ga[k] += y[k] * (g[k] - inner);
                        }
                    });
                }
                Op::CrossEntropy(logits, target, probs) => {
                    let scale = g[0];
                    let target = *target;
                    acc(&mut grads, &self.nodes, *logits, |gl| {
                        for k in 0..probs.len() {
                            let onehot = if k == target { 1.0 } else { 0.0 };
                            gl[k] += scale * (probs[k] - onehot);
                        }
                    });
                }
            }
        }
    }

    pub fn backward(&self, root: Var) -> Gradients {
        self.backward_with_seed(root, 1.0)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

fn log_softmax_at(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    logits[target] - lse
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tensor::Tensor;

    #[test]
    fn matvec_and_backward() {
        let mut ps = ParameterSet::new();
        let w = ps
            .insert("w", Tensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap())
            .unwrap();
        let mut g = Graph::new(&ps);
        let x = g.constant(vec![1.0, 0.0, -1.0]);
        let y = g.matvec(w, x);
        assert_eq!(g.value(y), &[-2.0, -2.0]);
        let s = g.sum(&[y]);
        let half = g.slice(s, 0, 1);
        let grads = g.backward(half);
        // d y0 / d W row 0 = x, row 1 untouched
        assert_eq!(grads.get(w), &[1.0, 0.0, -1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_is_normalized() {
        let p = softmax(&[1000.0, 0.0, -5.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn shared_storage_gradients_add() {
        let mut ps = ParameterSet::new();
        ps.insert("a", Tensor::new(vec![1, 1], vec![2.0]).unwrap()).unwrap();
        ps.alias("b", "a").unwrap();
        let (a, b) = (ps.id("a").unwrap(), ps.id("b").unwrap());
        let mut g = Graph::new(&ps);
        let x = g.constant(vec![3.0]);
        let ya = g.matvec(a, x);
        let yb = g.matvec(b, x);
        let s = g.add(ya, yb);
        let grads = g.backward(s);
        assert_eq!(grads.get(a), &[6.0]);
    }
}
