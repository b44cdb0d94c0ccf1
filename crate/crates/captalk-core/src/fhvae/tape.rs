//! Reverse-mode gradient tape over dynamic-dimension arrays.
//!
//! Nodes are appended in evaluation order, so reverse id order is already a
//! topological order for the backward sweep. Values are computed eagerly;
//! each op records its parents and the backward rule runs off the stored
//! values. Sized for this module's small encoder/decoder networks: one node
//! per vector/matrix op, not per scalar.

use crate::num::Real;
use ndarray::{Array1, Array2, ArrayD, ArrayViewD, Axis, Ix1, Ix2};
use std::cell::RefCell;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<F> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    /// Elementwise product.
    Mul(Var, Var),
    /// Multiply by a fixed scalar.
    Scale(Var, F),
    /// Add a fixed scalar to every element.
    Offset(Var, F),
    /// `w · x` for a matrix `w` and vector `x`.
    MatVec { w: Var, x: Var },
    Tanh(Var),
    /// `softplus(x) + floor`; the floor keeps scales strictly positive.
    SoftplusFloor(Var),
    Ln(Var),
    Square(Var),
    /// Column means of a matrix (temporal pooling).
    MeanRows(Var),
    SumAll(Var),
    Concat(Var, Var),
    /// Value passes through; gradient does not.
    StopGrad,
}

struct Node<F> {
    value: ArrayD<F>,
    op: Op<F>,
}

pub struct Tape<F> {
    nodes: RefCell<Vec<Node<F>>>,
}

impl<F: Real> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: ArrayD<F>, op: Op<F>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> ArrayD<F> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn scalar_value(&self, v: Var) -> F {
        let nodes = self.nodes.borrow();
        *nodes[v.0].value.iter().next().expect("scalar node")
    }

    pub fn vector_value(&self, v: Var) -> Array1<F> {
        self.value(v).into_dimensionality::<Ix1>().expect("1-d node")
    }

    // ---- graph construction -------------------------------------------

    pub fn leaf(&self, value: ArrayD<F>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn leaf_vector(&self, value: Array1<F>) -> Var {
        self.leaf(value.into_dyn())
    }

    pub fn leaf_matrix(&self, value: Array2<F>) -> Var {
        self.leaf(value.into_dyn())
    }

    pub fn leaf_scalar(&self, value: F) -> Var {
        self.leaf(ndarray::arr0(value).into_dyn())
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            &nodes[a.0].value + &nodes[b.0].value
        };
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            &nodes[a.0].value - &nodes[b.0].value
        };
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            &nodes[a.0].value * &nodes[b.0].value
        };
        self.push(value, Op::Mul(a, b))
    }

    pub fn scale(&self, a: Var, c: F) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|v| v * c)
        };
        self.push(value, Op::Scale(a, c))
    }

    pub fn offset(&self, a: Var, c: F) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|v| v + c)
        };
        self.push(value, Op::Offset(a, c))
    }

    pub fn matvec(&self, w: Var, x: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let wm = nodes[w.0]
                .value
                .view()
                .into_dimensionality::<Ix2>()
                .expect("matvec weight must be 2-d");
            let xv = nodes[x.0]
                .value
                .view()
                .into_dimensionality::<Ix1>()
                .expect("matvec input must be 1-d");
            wm.dot(&xv).into_dyn()
        };
        self.push(value, Op::MatVec { w, x })
    }

    pub fn tanh(&self, a: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|v| v.tanh())
        };
        self.push(value, Op::Tanh(a))
    }

    /// Strictly positive map for scale heads.
    pub fn softplus_floor(&self, a: Var, floor: F) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|v| softplus(v) + floor)
        };
        self.push(value, Op::SoftplusFloor(a))
    }

    pub fn ln(&self, a: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|v| v.ln())
        };
        self.push(value, Op::Ln(a))
    }

    pub fn square(&self, a: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.mapv(|v| v * v)
        };
        self.push(value, Op::Square(a))
    }

    /// Column means; values are accumulated in sorted order so the result is
    /// bit-identical under row permutation.
    pub fn mean_rows(&self, a: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let m = nodes[a.0]
                .value
                .view()
                .into_dimensionality::<Ix2>()
                .expect("mean_rows input must be 2-d");
            pooled_mean(&m.view()).into_dyn()
        };
        self.push(value, Op::MeanRows(a))
    }

    pub fn sum_all(&self, a: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let s = nodes[a.0].value.iter().copied().fold(F::zero(), |x, y| x + y);
            ndarray::arr0(s).into_dyn()
        };
        self.push(value, Op::SumAll(a))
    }

    pub fn concat(&self, a: Var, b: Var) -> Var {
        let value = {
            let nodes = self.nodes.borrow();
            let av = nodes[a.0]
                .value
                .view()
                .into_dimensionality::<Ix1>()
                .expect("concat inputs must be 1-d");
            let bv = nodes[b.0]
                .value
                .view()
                .into_dimensionality::<Ix1>()
                .expect("concat inputs must be 1-d");
            let mut out = Array1::<F>::zeros(av.len() + bv.len());
            out.slice_mut(ndarray::s![..av.len()]).assign(&av);
            out.slice_mut(ndarray::s![av.len()..]).assign(&bv);
            out.into_dyn()
        };
        self.push(value, Op::Concat(a, b))
    }

    pub fn stop_grad(&self, a: Var) -> Var {
        let value = self.nodes.borrow()[a.0].value.clone();
        self.push(value, Op::StopGrad)
    }

    /// Mean of a list of scalar nodes.
    pub fn mean_of(&self, vars: &[Var]) -> Var {
        assert!(!vars.is_empty());
        let mut acc = vars[0];
        for &v in &vars[1..] {
            acc = self.add(acc, v);
        }
        self.scale(acc, F::one() / F::from_f64_c(vars.len() as f64))
    }

    // ---- backward ------------------------------------------------------

    /// Gradients of a scalar output with respect to every node.
    pub fn backward(&self, out: Var) -> Gradients<F> {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<ArrayD<F>>> = vec![None; nodes.len()];
        grads[out.0] = Some(ArrayD::ones(nodes[out.0].value.raw_dim()));

        for id in (0..=out.0).rev() {
            let Some(g) = grads[id].take() else {
                continue;
            };
            match &nodes[id].op {
                Op::Leaf => {
                    grads[id] = Some(g); // keep for the caller
                    continue;
                }
                Op::Add(a, b) => {
                    acc(&mut grads, a.0, g.clone());
                    acc(&mut grads, b.0, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, a.0, g.clone());
                    acc(&mut grads, b.0, g.mapv(|v| -v));
                }
                Op::Mul(a, b) => {
                    acc(&mut grads, a.0, &g * &nodes[b.0].value);
                    acc(&mut grads, b.0, &g * &nodes[a.0].value);
                }
                Op::Scale(a, c) => acc(&mut grads, a.0, g.mapv(|v| v * *c)),
                Op::Offset(a, _) => acc(&mut grads, a.0, g),
                Op::MatVec { w, x } => {
                    let gv = g.view().into_dimensionality::<Ix1>().unwrap();
                    let w_mat = nodes[w.0].value.view().into_dimensionality::<Ix2>().unwrap();
                    let xv = nodes[x.0].value.view().into_dimensionality::<Ix1>().unwrap();
                    // dW = g ⊗ x
                    let mut gw = Array2::<F>::zeros((gv.len(), xv.len()));
                    for (i, gi) in gv.iter().enumerate() {
                        for (j, xj) in xv.iter().enumerate() {
                            gw[(i, j)] = *gi * *xj;
                        }
                    }
                    // dx = Wᵀ g
                    let gx = w_mat.t().dot(&gv);
                    acc(&mut grads, w.0, gw.into_dyn());
                    acc(&mut grads, x.0, gx.into_dyn());
                }
                Op::Tanh(a) => {
                    let y = &nodes[id].value;
                    let one = F::one();
                    let d = ndarray::Zip::from(&g)
                        .and(y)
                        .map_collect(|&gi, &yi| gi * (one - yi * yi));
                    acc(&mut grads, a.0, d);
                }
                Op::SoftplusFloor(a) => {
                    let x = &nodes[a.0].value;
                    let d = ndarray::Zip::from(&g)
                        .and(x)
                        .map_collect(|&gi, &xi| gi * sigmoid(xi));
                    acc(&mut grads, a.0, d);
                }
                Op::Ln(a) => {
                    let x = &nodes[a.0].value;
                    let d = ndarray::Zip::from(&g).and(x).map_collect(|&gi, &xi| gi / xi);
                    acc(&mut grads, a.0, d);
                }
                Op::Square(a) => {
                    let x = &nodes[a.0].value;
                    let two = F::from_f64_c(2.0);
                    let d = ndarray::Zip::from(&g)
                        .and(x)
                        .map_collect(|&gi, &xi| gi * two * xi);
                    acc(&mut grads, a.0, d);
                }
                Op::MeanRows(a) => {
                    let shape = nodes[a.0].value.shape().to_vec();
                    let (rows, cols) = (shape[0], shape[1]);
                    let gv = g.view().into_dimensionality::<Ix1>().unwrap();
                    let inv = F::one() / F::from_f64_c(rows as f64);
                    let mut d = Array2::<F>::zeros((rows, cols));
                    for mut row in d.axis_iter_mut(Axis(0)) {
                        for (j, cell) in row.iter_mut().enumerate() {
                            *cell = gv[j] * inv;
                        }
                    }
                    acc(&mut grads, a.0, d.into_dyn());
                }
                Op::SumAll(a) => {
                    let gs = *g.iter().next().unwrap();
                    let d = ArrayD::from_elem(nodes[a.0].value.raw_dim(), gs);
                    acc(&mut grads, a.0, d);
                }
                Op::Concat(a, b) => {
                    let gv = g.view().into_dimensionality::<Ix1>().unwrap();
                    let na = nodes[a.0].value.len();
                    let ga = gv.slice(ndarray::s![..na]).to_owned();
                    let gb = gv.slice(ndarray::s![na..]).to_owned();
                    acc(&mut grads, a.0, ga.into_dyn());
                    acc(&mut grads, b.0, gb.into_dyn());
                }
                Op::StopGrad => {
                    // nothing flows upstream
                }
            }
        }

        Gradients { grads }
    }
}

fn acc<F: Real>(grads: &mut [Option<ArrayD<F>>], id: usize, delta: ArrayD<F>) {
    match &mut grads[id] {
        Some(g) => *g += &delta,
        slot @ None => *slot = Some(delta),
    }
}

pub struct Gradients<F> {
    grads: Vec<Option<ArrayD<F>>>,
}

impl<F: Real> Gradients<F> {
    /// Gradient of the output with respect to `v`; zero-shaped nodes that
    /// never received gradient return `None`.
    pub fn get(&self, v: Var) -> Option<ArrayViewD<'_, F>> {
        self.grads[v.0].as_ref().map(|g| g.view())
    }
}

fn softplus<F: Real>(x: F) -> F {
    if x > F::zero() {
        x + (F::one() + (-x).exp()).ln()
    } else {
        (F::one() + x.exp()).ln()
    }
}

fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Permutation-invariant column means: entries are sorted before summing.
pub fn pooled_mean<F: Real>(m: &ndarray::ArrayView2<'_, F>) -> Array1<F> {
    let cols = m.ncols();
    let mut out = Array1::<F>::zeros(cols);
    let mut column = Vec::with_capacity(m.nrows());
    for j in 0..cols {
        column.clear();
        column.extend(m.column(j).iter().copied());
        out[j] = crate::num::stable_mean(&column);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    #[test]
    fn scalar_quadratic_gradient() {
        let tape = Tape::<f64>::new();
        let w = tape.leaf_scalar(3.0);
        let loss = tape.square(w);
        let grads = tape.backward(loss);
        let g = grads.get(w).unwrap();
        assert!((g.iter().next().unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn matvec_gradients_match_finite_differences() {
        let tape = Tape::<f64>::new();
        let w = tape.leaf_matrix(arr2(&[[0.5, -0.2, 0.1], [0.3, 0.7, -0.4]]));
        let x = tape.leaf_vector(arr1(&[1.0, -2.0, 0.5]));
        let y = tape.matvec(w, x);
        let loss = tape.sum_all(tape.square(y));
        let grads = tape.backward(loss);
        let gw = grads.get(w).unwrap().to_owned();

        let eval = |wm: &Array2<f64>| {
            let t = Tape::<f64>::new();
            let wv = t.leaf_matrix(wm.clone());
            let xv = t.leaf_vector(arr1(&[1.0, -2.0, 0.5]));
            let y = t.matvec(wv, xv);
            t.scalar_value(t.sum_all(t.square(y)))
        };
        let eps = 1e-6;
        let base = arr2(&[[0.5, -0.2, 0.1], [0.3, 0.7, -0.4]]);
        for i in 0..2 {
            for j in 0..3 {
                let mut plus = base.clone();
                plus[(i, j)] += eps;
                let mut minus = base.clone();
                minus[(i, j)] -= eps;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                let a = gw[[i, j]];
                assert!((a - fd).abs() < 1e-6, "({i},{j}): {a} vs {fd}");
            }
        }
    }

    #[test]
    fn composite_ops_match_finite_differences() {
        let eval = |v: &Array1<f64>, want_grad: bool| -> (f64, Option<Array1<f64>>) {
            let t = Tape::<f64>::new();
            let x = t.leaf_vector(v.clone());
            let h = t.tanh(x);
            let s = t.softplus_floor(x, 1e-4);
            let l = t.ln(s);
            let c = t.concat(h, l);
            let loss = t.sum_all(t.square(c));
            let value = t.scalar_value(loss);
            if want_grad {
                let g = t.backward(loss);
                let gx = g.get(x).unwrap().to_owned().into_dimensionality().unwrap();
                (value, Some(gx))
            } else {
                (value, None)
            }
        };

        let base = arr1(&[0.3, -1.2, 2.0, -0.01]);
        let (_, g) = eval(&base, true);
        let g = g.unwrap();
        let eps = 1e-6;
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += eps;
            let mut minus = base.clone();
            minus[i] -= eps;
            let fd = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * eps);
            assert!((g[i] - fd).abs() < 1e-5, "coord {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn stop_grad_blocks_and_mul_routes_gradient() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf_scalar(2.0);
        let b = tape.leaf_scalar(5.0);
        let detached = tape.stop_grad(a);
        let prod = tape.mul(detached, b);
        let loss = tape.square(prod);
        let grads = tape.backward(loss);
        assert!(grads.get(a).is_none());
        let gb = *grads.get(b).unwrap().iter().next().unwrap();
        // d/db (2b)^2 = 8b = 40
        assert!((gb - 40.0).abs() < 1e-12);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // loss = x·x + x → d = 2x + 1
        let tape = Tape::<f64>::new();
        let x = tape.leaf_scalar(3.0);
        let loss = tape.add(tape.mul(x, x), x);
        let grads = tape.backward(loss);
        let g = *grads.get(x).unwrap().iter().next().unwrap();
        assert!((g - 7.0).abs() < 1e-12);
    }

    #[test]
    fn mean_rows_is_permutation_invariant() {
        let a: Array2<f64> = arr2(&[[1.0e-8, 2.0], [3.7, -1.0], [1.0e8, 0.5]]);
        let mut b = a.clone();
        b.swap(( 0, 0), (2, 0));
        b.swap((0, 1), (1, 1));
        // b has permuted columns entries; pooled means must be bit-equal
        let pa = pooled_mean(&a.view());
        let pb = pooled_mean(&b.view());
        for j in 0..2 {
            assert_eq!(pa[j].to_bits(), pb[j].to_bits());
        }
    }
}
