//! Tape-based reverse-mode differentiation over small dense vectors.
//!
//! Every value on the tape is a flat `Vec<f64>`; scalars are vectors of
//! length one and matrices are stored row-major. Operations append a node
//! and return a [`Var`] handle. [`Tape::backward`] walks the tape in
//! reverse and accumulates adjoints for every node that transitively
//! depends on a gradient-tracking leaf.
//!
//! ```
//! use fdgnn::autodiff::Tape;
//!
//! let mut tape = Tape::new();
//! let w = tape.param(vec![2.0, -1.0]);
//! let x = tape.constant(vec![3.0, 4.0]);
//! let y = tape.dot(w, x);
//! let grads = tape.backward(y);
//! assert_eq!(tape.scalar(y), 2.0);
//! assert_eq!(grads.get(w).unwrap(), &[3.0, 4.0]);
//! ```

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, Var),
    ScaleConst(Var, f64),
    AddConst(Var),
    MatVec { m: Var, x: Var, rows: usize },
    Concat(Vec<Var>),
    Sum(Var),
    SumOf(Vec<Var>),
    Dot(Var, Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Div(Var, Var),
    ScaledSoftplus { x: Var, rho: Var },
    Cosine(Var, Var),
    Mean(Vec<Var>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
    tracked: bool,
}

/// Append-only record of a computation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` when the output does not
    /// depend on it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient with respect to `v`, zero-filled to `len` when absent.
    pub fn get_or_zero(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; len])
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Mean computed as a running update so that identical inputs give back
/// exactly that input.
pub fn running_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut mean = 0.0;
    for (i, v) in values.into_iter().enumerate() {
        mean += (v - mean) / (i as f64 + 1.0);
    }
    mean
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Gradient-tracking leaf.
    pub fn param(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.constant(vec![0.0; len])
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// Same value as `v`, cut off from the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        if !self.tracked(v) {
            return v;
        }
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        debug_assert_eq!(va.len(), vb.len());
        let value = va.iter().zip(vb).map(|(x, y)| x + y).collect();
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, Op::Add(a, b), tracked)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        debug_assert_eq!(va.len(), vb.len());
        let value = va.iter().zip(vb).map(|(x, y)| x - y).collect();
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, Op::Sub(a, b), tracked)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        debug_assert_eq!(va.len(), vb.len());
        let value = va.iter().zip(vb).map(|(x, y)| x * y).collect();
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, Op::Mul(a, b), tracked)
    }

    /// Vector times a length-one node.
    pub fn scale(&mut self, a: Var, s: Var) -> Var {
        debug_assert_eq!(self.value(s).len(), 1);
        let k = self.scalar(s);
        let value = self.value(a).iter().map(|x| x * k).collect();
        let tracked = self.tracked(a) || self.tracked(s);
        self.push(value, Op::Scale(a, s), tracked)
    }

    pub fn scale_const(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).iter().map(|x| x * k).collect();
        let tracked = self.tracked(a);
        self.push(value, Op::ScaleConst(a, k), tracked)
    }

    /// `a + c` for a constant vector `c`.
    pub fn add_const(&mut self, a: Var, c: &[f64]) -> Var {
        let value = self.value(a).iter().zip(c).map(|(x, y)| x + y).collect();
        let tracked = self.tracked(a);
        self.push(value, Op::AddConst(a), tracked)
    }

    /// Row-major `rows x cols` matrix times a length-`cols` vector.
    pub fn matvec(&mut self, m: Var, x: Var, rows: usize) -> Var {
        let (vm, vx) = (self.value(m), self.value(x));
        let cols = vx.len();
        assert_eq!(vm.len(), rows * cols, "matvec shape mismatch");
        let value = vm
            .chunks_exact(cols.max(1))
            .take(rows)
            .map(|row| row.iter().zip(vx).map(|(a, b)| a * b).sum())
            .collect::<Vec<f64>>();
        let value = if cols == 0 { vec![0.0; rows] } else { value };
        let tracked = self.tracked(m) || self.tracked(x);
        self.push(value, Op::MatVec { m, x, rows }, tracked)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut value = Vec::new();
        for p in parts {
            value.extend_from_slice(self.value(*p));
        }
        let tracked = parts.iter().any(|p| self.tracked(*p));
        self.push(value, Op::Concat(parts.to_vec()), tracked)
    }

    /// Sum of entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = vec![self.value(a).iter().sum()];
        let tracked = self.tracked(a);
        self.push(value, Op::Sum(a), tracked)
    }

    /// Elementwise sum of equal-length nodes. `parts` must be non-empty.
    pub fn sum_of(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "sum_of needs at least one term");
        let mut value = vec![0.0; self.value(parts[0]).len()];
        for p in parts {
            for (acc, v) in value.iter_mut().zip(self.value(*p)) {
                *acc += v;
            }
        }
        let tracked = parts.iter().any(|p| self.tracked(*p));
        self.push(value, Op::SumOf(parts.to_vec()), tracked)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        debug_assert_eq!(va.len(), vb.len());
        let value = vec![va.iter().zip(vb).map(|(x, y)| x * y).sum()];
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, Op::Dot(a, b), tracked)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|x| sigmoid(*x)).collect();
        let tracked = self.tracked(a);
        self.push(value, Op::Sigmoid(a), tracked)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|x| x.exp()).collect();
        let tracked = self.tracked(a);
        self.push(value, Op::Exp(a), tracked)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|x| x.ln()).collect();
        let tracked = self.tracked(a);
        self.push(value, Op::Ln(a), tracked)
    }

    /// Scalar quotient `a / b`.
    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let value = vec![self.scalar(a) / self.scalar(b)];
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, Op::Div(a, b), tracked)
    }

    /// `psi * ln(1 + exp(x / psi))` with `psi = exp(rho)`; both scalar.
    pub fn scaled_softplus(&mut self, x: Var, rho: Var) -> Var {
        let psi = self.scalar(rho).exp();
        let value = vec![psi * softplus(self.scalar(x) / psi)];
        let tracked = self.tracked(x) || self.tracked(rho);
        self.push(value, Op::ScaledSoftplus { x, rho }, tracked)
    }

    /// Cosine similarity; zero when either operand is the zero vector.
    pub fn cosine(&mut self, a: Var, b: Var) -> Var {
        let value = vec![cosine(self.value(a), self.value(b))];
        let tracked = self.tracked(a) || self.tracked(b);
        self.push(value, Op::Cosine(a, b), tracked)
    }

    /// Mean of scalar nodes. `parts` must be non-empty.
    pub fn mean(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "mean needs at least one term");
        let value = vec![running_mean(parts.iter().map(|p| self.scalar(*p)))];
        let tracked = parts.iter().any(|p| self.tracked(*p));
        self.push(value, Op::Mean(parts.to_vec()), tracked)
    }

    /// Reverse sweep seeded with `d output = 1`. `output` must be scalar.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        if !self.tracked(output) {
            return Gradients { grads };
        }
        grads[output.0] = Some(vec![1.0; self.nodes[output.0].value.len()]);

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let acc = |v: Var, delta: &dyn Fn(usize) -> f64, grads: &mut Vec<Option<Vec<f64>>>| {
                if !self.nodes[v.0].tracked {
                    return;
                }
                let len = self.nodes[v.0].value.len();
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
                for (j, s) in slot.iter_mut().enumerate() {
                    *s += delta(j);
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    acc(*a, &|j| g[j], &mut grads);
                    acc(*b, &|j| g[j], &mut grads);
                }
                Op::Sub(a, b) => {
                    acc(*a, &|j| g[j], &mut grads);
                    acc(*b, &|j| -g[j], &mut grads);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    acc(*a, &|j| g[j] * vb[j], &mut grads);
                    acc(*b, &|j| g[j] * va[j], &mut grads);
                }
                Op::Scale(a, s) => {
                    let k = self.scalar(*s);
                    let va = self.value(*a);
                    acc(*a, &|j| g[j] * k, &mut grads);
                    let ds: f64 = g.iter().zip(va).map(|(x, y)| x * y).sum();
                    acc(*s, &|_| ds, &mut grads);
                }
                Op::ScaleConst(a, k) => acc(*a, &|j| g[j] * k, &mut grads),
                Op::AddConst(a) => acc(*a, &|j| g[j], &mut grads),
                Op::MatVec { m, x, rows } => {
                    let (vm, vx) = (self.value(*m), self.value(*x));
                    let cols = vx.len();
                    acc(*m, &|j| g[j / cols] * vx[j % cols], &mut grads);
                    acc(
                        *x,
                        &|c| (0..*rows).map(|r| g[r] * vm[r * cols + c]).sum(),
                        &mut grads,
                    );
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.value(*p).len();
                        let o = offset;
                        acc(*p, &|j| g[o + j], &mut grads);
                        offset += len;
                    }
                }
                Op::Sum(a) => acc(*a, &|_| g[0], &mut grads),
                Op::SumOf(parts) => {
                    for p in parts {
                        acc(*p, &|j| g[j], &mut grads);
                    }
                }
                Op::Dot(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    acc(*a, &|j| g[0] * vb[j], &mut grads);
                    acc(*b, &|j| g[0] * va[j], &mut grads);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(*a, &|j| g[j] * y[j] * (1.0 - y[j]), &mut grads);
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    acc(*a, &|j| g[j] * y[j], &mut grads);
                }
                Op::Ln(a) => {
                    let va = self.value(*a);
                    acc(*a, &|j| g[j] / va[j], &mut grads);
                }
                Op::Div(a, b) => {
                    let (va, vb) = (self.scalar(*a), self.scalar(*b));
                    acc(*a, &|_| g[0] / vb, &mut grads);
                    acc(*b, &|_| -g[0] * va / (vb * vb), &mut grads);
                }
                Op::ScaledSoftplus { x, rho } => {
                    let psi = self.scalar(*rho).exp();
                    let z = self.scalar(*x) / psi;
                    let s = sigmoid(z);
                    acc(*x, &|_| g[0] * s, &mut grads);
                    let d_rho = psi * (softplus(z) - z * s);
                    acc(*rho, &|_| g[0] * d_rho, &mut grads);
                }
                Op::Cosine(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (na, nb) = (norm(va), norm(vb));
                    if na > 0.0 && nb > 0.0 {
                        let c = node.value[0];
                        acc(
                            *a,
                            &|j| g[0] * (vb[j] / (na * nb) - c * va[j] / (na * na)),
                            &mut grads,
                        );
                        acc(
                            *b,
                            &|j| g[0] * (va[j] / (na * nb) - c * vb[j] / (nb * nb)),
                            &mut grads,
                        );
                    }
                }
                Op::Mean(parts) => {
                    let w = g[0] / parts.len() as f64;
                    for p in parts {
                        acc(*p, &|_| w, &mut grads);
                    }
                }
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }
}
