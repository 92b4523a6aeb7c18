use super::scalar::Scalar;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(u32);

impl Var {
    /// Handle of input `i`; inputs occupy the first slots of every tape.
    pub const fn input(i: usize) -> Var {
        Var(i as u32)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Scalar reverse-mode tape.
///
/// The first `n_inputs` nodes are the differentiation inputs (the parameter
/// coordinates). Every other node stores its parents together with the local
/// partial derivative towards each of them, so nodes are topologically
/// ordered by construction.
#[derive(Debug, Clone)]
pub struct Tape<S> {
    n_inputs: usize,
    values: Vec<S>,
    offsets: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<S>,
    adjoints: Vec<S>,
}

impl<S: Scalar> Tape<S> {
    pub fn new(inputs: &[S]) -> Self {
        let mut tape = Tape {
            n_inputs: 0,
            values: Vec::new(),
            offsets: vec![0],
            parents: Vec::new(),
            partials: Vec::new(),
            adjoints: Vec::new(),
        };
        tape.reset(inputs);
        tape
    }

    /// Drops every recorded node and installs a new set of inputs, keeping
    /// the allocations.
    pub fn reset(&mut self, inputs: &[S]) {
        self.n_inputs = inputs.len();
        self.values.clear();
        self.values.extend_from_slice(inputs);
        self.offsets.clear();
        self.offsets.resize(inputs.len() + 1, 0);
        self.parents.clear();
        self.partials.clear();
    }

    /// Drops every node recorded after the inputs.
    pub fn truncate(&mut self) {
        let n = self.n_inputs;
        self.values.truncate(n);
        self.offsets.truncate(n + 1);
        self.parents.clear();
        self.partials.clear();
    }

    pub fn num_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn input(&self, i: usize) -> Var {
        assert!(i < self.n_inputs, "input {i} out of range");
        Var(i as u32)
    }

    pub fn inputs(&self) -> impl Iterator<Item = Var> {
        (0..self.n_inputs as u32).map(Var)
    }

    #[inline]
    pub fn value(&self, v: Var) -> S {
        self.values[v.index()]
    }

    /// Parent indices and local partials of a node.
    pub fn node(&self, v: Var) -> (&[u32], &[S]) {
        let i = v.index();
        if i < self.n_inputs {
            return (&[], &[]);
        }
        let lo = self.offsets[i] as usize;
        let hi = self.offsets[i + 1] as usize;
        (&self.parents[lo..hi], &self.partials[lo..hi])
    }

    #[inline]
    fn finish(&mut self, value: S) -> Var {
        let id = self.values.len();
        self.values.push(value);
        self.offsets.push(self.parents.len() as u32);
        Var(id as u32)
    }

    #[inline]
    fn unary(&mut self, a: Var, value: S, da: S) -> Var {
        self.parents.push(a.0);
        self.partials.push(da);
        self.finish(value)
    }

    #[inline]
    fn binary(&mut self, a: Var, b: Var, value: S, da: S, db: S) -> Var {
        self.parents.extend_from_slice(&[a.0, b.0]);
        self.partials.extend_from_slice(&[da, db]);
        self.finish(value)
    }

    /// Leaf node that does not depend on the inputs.
    pub fn constant(&mut self, value: S) -> Var {
        self.finish(value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.binary(a, b, v, S::one(), S::one())
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.binary(a, b, v, S::one(), -S::one())
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.binary(a, b, x * y, y, x)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let q = x / y;
        let inv = S::one() / y;
        self.binary(a, b, q, inv, -(q * inv))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.value(a);
        self.unary(a, v, -S::one())
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).scale(c);
        self.unary(a, v, S::constant(c))
    }

    pub fn add_const(&mut self, a: Var, c: S) -> Var {
        let v = self.value(a) + c;
        self.unary(a, v, S::one())
    }

    pub fn square(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(a, x * x, x.scale(2.0))
    }

    pub fn powi(&mut self, a: Var, n: i32) -> Var {
        let x = self.value(a);
        let v = powi(x, n);
        let d = if n == 0 { S::zero() } else { powi(x, n - 1).scale(n as f64) };
        self.unary(a, v, d)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let e = self.value(a).exp();
        self.unary(a, e, e)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(a, x.ln(), S::one() / x)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).tanh();
        self.unary(a, t, S::one() - t * t)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.unary(a, x.softplus(), x.sigmoid())
    }

    /// Rectifier. The local partial is a constant 0 or 1, so its second
    /// derivative is zero everywhere (including the kink).
    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        if x.value() > 0.0 {
            self.unary(a, x, S::one())
        } else {
            self.unary(a, S::zero(), S::zero())
        }
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let mut acc = S::zero();
        for &x in xs {
            acc += self.value(x);
            self.parents.push(x.0);
            self.partials.push(S::one());
        }
        self.finish(acc)
    }

    /// `Σ a_i·b_i` over two variable slices.
    pub fn dot(&mut self, a: &[Var], b: &[Var]) -> Var {
        assert_eq!(a.len(), b.len(), "dot: length mismatch");
        let mut acc = S::zero();
        self.parents.reserve(2 * a.len());
        self.partials.reserve(2 * a.len());
        for (&x, &y) in a.iter().zip(b) {
            let (vx, vy) = (self.value(x), self.value(y));
            acc += vx * vy;
            self.parents.extend_from_slice(&[x.0, y.0]);
            self.partials.extend_from_slice(&[vy, vx]);
        }
        self.finish(acc)
    }

    /// `Σ w_i·x_i + bias` with variable weights and constant inputs `x`.
    pub fn affine_const(&mut self, weights: &[Var], x: &[f64], bias: Var) -> Var {
        assert_eq!(weights.len(), x.len(), "affine_const: length mismatch");
        let mut acc = self.value(bias);
        self.parents.reserve(weights.len() + 1);
        self.partials.reserve(weights.len() + 1);
        for (&w, &xi) in weights.iter().zip(x) {
            acc += self.value(w).scale(xi);
            self.parents.push(w.0);
            self.partials.push(S::constant(xi));
        }
        self.parents.push(bias.0);
        self.partials.push(S::one());
        self.finish(acc)
    }

    /// `Σ w_i·x_i + bias` with variable weights and variable inputs.
    pub fn affine(&mut self, weights: &[Var], x: &[Var], bias: Var) -> Var {
        assert_eq!(weights.len(), x.len(), "affine: length mismatch");
        let mut acc = self.value(bias);
        self.parents.reserve(2 * weights.len() + 1);
        self.partials.reserve(2 * weights.len() + 1);
        for (&w, &xi) in weights.iter().zip(x) {
            let (vw, vx) = (self.value(w), self.value(xi));
            acc += vw * vx;
            self.parents.extend_from_slice(&[w.0, xi.0]);
            self.partials.extend_from_slice(&[vx, vw]);
        }
        self.parents.push(bias.0);
        self.partials.push(S::one());
        self.finish(acc)
    }

    /// Softmax cross-entropy `logsumexp(z) − z[label]`.
    ///
    /// The max logit is subtracted as a constant before exponentiating; the
    /// loss is invariant to that shift, so derivatives are unaffected.
    pub fn softmax_cross_entropy(&mut self, logits: &[Var], label: usize) -> Var {
        assert!(label < logits.len(), "label out of range");
        let shift = logits.iter().map(|&z| self.value(z).value()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<Var> = logits
            .iter()
            .map(|&z| {
                let shifted = self.add_const(z, S::constant(-shift));
                self.exp(shifted)
            })
            .collect();
        let total = self.sum(&exps);
        let lse = self.ln(total);
        let lse = self.add_const(lse, S::constant(shift));
        self.sub(lse, logits[label])
    }

    /// Reverse sweep from `output`; returns the adjoint of every node.
    pub fn backward(&mut self, output: Var) -> &[S] {
        let n = output.index() + 1;
        self.adjoints.clear();
        self.adjoints.resize(n, S::zero());
        self.adjoints[n - 1] = S::one();
        for i in (self.n_inputs..n).rev() {
            let adj = self.adjoints[i];
            let lo = self.offsets[i] as usize;
            let hi = self.offsets[i + 1] as usize;
            for k in lo..hi {
                let p = self.parents[k] as usize;
                self.adjoints[p] += adj * self.partials[k];
            }
        }
        &self.adjoints
    }
}

fn powi<S: Scalar>(x: S, n: i32) -> S {
    let mut acc = S::one();
    for _ in 0..n.unsigned_abs() {
        acc = acc * x;
    }
    if n < 0 {
        S::one() / acc
    } else {
        acc
    }
}
