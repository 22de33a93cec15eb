//! Tape-based reverse-mode differentiation over array values.
//!
//! Values are real or complex arrays. Complex quantities are carried as (re, im) pairs and
//! their adjoints follow the convention `ḡ = ∂L/∂re + i·∂L/∂im` for a real scalar `L`, under
//! which a complex-linear map `A` back-propagates as `Aᴴ ḡ`. Only real scalars can be
//! differentiated, and only with respect to real nodes.
//!
//! Every recorded node keeps its forward value; [`Tape::replay`] recomputes all nodes from
//! the stored leaves and constants through the same evaluation routine.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::conv::{self, ConvGeometry, ConvTransposeGeometry};
use crate::numerics::{ComplexArray, LinearOperator, RealArray};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// Dense row-major real matrix used by constant affine maps.
#[derive(Clone, Debug, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!("{rows}×{cols} matrix with {} entries", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.data.chunks(self.cols).map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, yi) in self.data.chunks(self.cols).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Value {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl Value {
    fn real(&self) -> &[f64] {
        match self {
            Value::Real(v) => v,
            Value::Complex(_) => panic!("expected a real node, found complex"),
        }
    }

    fn complex(&self) -> &[Complex64] {
        match self {
            Value::Complex(v) => v,
            Value::Real(_) => panic!("expected a complex node, found real"),
        }
    }
}

#[derive(Clone)]
enum Op {
    Leaf,
    Const,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Offset(usize, f64),
    Relu(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Sum(usize),
    Dot(usize, usize),
    MulScalar(usize, usize),
    DivScalar(usize, usize),
    Matvec(Arc<RealMatrix>, usize),
    Conv2d { geom: ConvGeometry, x: usize, w: usize, b: Option<usize> },
    ConvTranspose2d { geom: ConvTransposeGeometry, x: usize, w: usize, b: Option<usize> },
    Reshape(usize),
    ToComplex(usize),
    CAdd(usize, usize),
    CSub(usize, usize),
    CScaleConst(usize, Complex64),
    CScaleVar(usize, usize),
    CApply(Arc<dyn LinearOperator>, usize),
    ReDot(usize, usize),
}

struct Node {
    op: Op,
    shape: Vec<usize>,
    value: Value,
}

/// Record of primitive operations in execution order.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

trait ValueLookup {
    fn get(&self, i: usize) -> &Value;
}

impl ValueLookup for [Node] {
    fn get(&self, i: usize) -> &Value {
        &self[i].value
    }
}

impl ValueLookup for [Value] {
    fn get(&self, i: usize) -> &Value {
        &self[i]
    }
}

fn eval<L: ValueLookup + ?Sized>(op: &Op, vals: &L) -> Value {
    use Value::{Complex as C, Real as R};
    let r = |i: usize| vals.get(i).real();
    let c = |i: usize| vals.get(i).complex();
    match op {
        Op::Leaf | Op::Const => unreachable!("leaves carry their own values"),
        Op::Add(a, b) => R(r(*a).iter().zip(r(*b)).map(|(x, y)| x + y).collect()),
        Op::Sub(a, b) => R(r(*a).iter().zip(r(*b)).map(|(x, y)| x - y).collect()),
        Op::Mul(a, b) => R(r(*a).iter().zip(r(*b)).map(|(x, y)| x * y).collect()),
        Op::Scale(a, k) => R(r(*a).iter().map(|x| x * k).collect()),
        Op::Offset(a, k) => R(r(*a).iter().map(|x| x + k).collect()),
        Op::Relu(a) => R(r(*a).iter().map(|x| x.max(0.0)).collect()),
        Op::Exp(a) => R(r(*a).iter().map(|x| x.exp()).collect()),
        Op::Log(a) => R(r(*a).iter().map(|x| x.ln()).collect()),
        Op::Square(a) => R(r(*a).iter().map(|x| x * x).collect()),
        Op::Sum(a) => R(vec![r(*a).iter().sum()]),
        Op::Dot(a, b) => R(vec![r(*a).iter().zip(r(*b)).map(|(x, y)| x * y).sum()]),
        Op::MulScalar(s, a) => {
            let s = r(*s)[0];
            R(r(*a).iter().map(|x| x * s).collect())
        }
        Op::DivScalar(a, b) => R(vec![r(*a)[0] / r(*b)[0]]),
        Op::Matvec(m, x) => R(m.matvec(r(*x))),
        Op::Conv2d { geom, x, w, b } => {
            R(conv::conv2d_forward(geom, r(*x), r(*w), b.map(|b| vals.get(b).real())))
        }
        Op::ConvTranspose2d { geom, x, w, b } => {
            R(conv::conv_transpose2d_forward(geom, r(*x), r(*w), b.map(|b| vals.get(b).real())))
        }
        Op::Reshape(a) => vals.get(*a).clone(),
        Op::ToComplex(a) => C(r(*a).iter().map(|&x| Complex64::new(x, 0.0)).collect()),
        Op::CAdd(a, b) => C(c(*a).iter().zip(c(*b)).map(|(x, y)| x + y).collect()),
        Op::CSub(a, b) => C(c(*a).iter().zip(c(*b)).map(|(x, y)| x - y).collect()),
        Op::CScaleConst(a, k) => C(c(*a).iter().map(|x| x * k).collect()),
        Op::CScaleVar(s, a) => {
            let s = r(*s)[0];
            C(c(*a).iter().map(|x| x * s).collect())
        }
        Op::CApply(op, a) => C(op.apply_slice(c(*a))),
        Op::ReDot(a, b) => R(vec![c(*a).iter().zip(c(*b)).map(|(x, y)| (x.conj() * y).re).sum()]),
    }
}

fn accumulate_real(slot: &mut Option<Value>, delta: impl FnOnce(&mut [f64]), len: usize) {
    let buf = slot.get_or_insert_with(|| Value::Real(vec![0.0; len]));
    match buf {
        Value::Real(v) => delta(v),
        Value::Complex(_) => unreachable!(),
    }
}

fn accumulate_complex(slot: &mut Option<Value>, delta: impl FnOnce(&mut [Complex64]), len: usize) {
    let buf = slot.get_or_insert_with(|| Value::Complex(vec![Complex64::new(0.0, 0.0); len]));
    match buf {
        Value::Complex(v) => delta(v),
        Value::Real(_) => unreachable!(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> usize {
        assert_eq!(v.tape, self.id, "variable belongs to a different tape");
        v.index
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> Var {
        let value = eval(&op, self.nodes.as_slice());
        self.push_value(op, shape, value)
    }

    fn push_value(&mut self, op: Op, shape: Vec<usize>, value: Value) -> Var {
        self.nodes.push(Node { op, shape, value });
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[self.idx(v)]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        self.node(v).value.real()
    }

    pub fn complex_value(&self, v: Var) -> &[Complex64] {
        self.node(v).value.complex()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let vals = self.value(v);
        assert_eq!(vals.len(), 1, "node is not a scalar");
        vals[0]
    }

    pub fn real_array(&self, v: Var) -> RealArray {
        RealArray::from_parts(self.shape(v).to_vec(), self.value(v).to_vec())
    }

    pub fn complex_array(&self, v: Var) -> ComplexArray {
        ComplexArray::from_parts(self.shape(v).to_vec(), self.complex_value(v).to_vec())
    }

    fn is_complex(&self, v: Var) -> bool {
        matches!(self.node(v).value, Value::Complex(_))
    }

    fn same_shape(&self, a: Var, b: Var) -> Vec<usize> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(
            sa.iter().product::<usize>(),
            sb.iter().product::<usize>(),
            "shape mismatch {sa:?} vs {sb:?}"
        );
        sa.to_vec()
    }

    fn expect_real(&self, v: Var) {
        assert!(!self.is_complex(v), "expected a real node");
    }

    fn expect_complex(&self, v: Var) {
        assert!(self.is_complex(v), "expected a complex node");
    }

    fn expect_scalar(&self, v: Var) {
        assert_eq!(self.shape(v).iter().product::<usize>(), 1, "expected a scalar node");
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: &RealArray) -> Var {
        self.push_value(Op::Leaf, value.shape().to_vec(), Value::Real(value.data().to_vec()))
    }

    pub fn constant(&mut self, value: &RealArray) -> Var {
        self.push_value(Op::Const, value.shape().to_vec(), Value::Real(value.data().to_vec()))
    }

    pub fn constant_scalar(&mut self, value: f64) -> Var {
        self.push_value(Op::Const, vec![], Value::Real(vec![value]))
    }

    pub fn constant_complex(&mut self, value: &ComplexArray) -> Var {
        self.push_value(Op::Const, value.shape().to_vec(), Value::Complex(value.data().to_vec()))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.expect_real(a);
        self.expect_real(b);
        let shape = self.same_shape(a, b);
        self.push(Op::Add(a.index, b.index), shape)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.expect_real(a);
        self.expect_real(b);
        let shape = self.same_shape(a, b);
        self.push(Op::Sub(a.index, b.index), shape)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.expect_real(a);
        self.expect_real(b);
        let shape = self.same_shape(a, b);
        self.push(Op::Mul(a.index, b.index), shape)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.expect_real(a);
        let shape = self.shape(a).to_vec();
        self.push(Op::Scale(self.idx(a), k), shape)
    }

    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        self.expect_real(a);
        let shape = self.shape(a).to_vec();
        self.push(Op::Offset(self.idx(a), k), shape)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.expect_real(a);
        let shape = self.shape(a).to_vec();
        self.push(Op::Relu(self.idx(a)), shape)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.expect_real(a);
        let shape = self.shape(a).to_vec();
        self.push(Op::Exp(self.idx(a)), shape)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.expect_real(a);
        let shape = self.shape(a).to_vec();
        self.push(Op::Log(self.idx(a)), shape)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.expect_real(a);
        let shape = self.shape(a).to_vec();
        self.push(Op::Square(self.idx(a)), shape)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.expect_real(a);
        self.push(Op::Sum(self.idx(a)), vec![])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        self.expect_real(a);
        self.expect_real(b);
        self.same_shape(a, b);
        self.push(Op::Dot(a.index, b.index), vec![])
    }

    /// Scalar node times array node.
    pub fn mul_scalar(&mut self, s: Var, a: Var) -> Var {
        self.expect_real(s);
        self.expect_scalar(s);
        self.expect_real(a);
        let shape = self.shape(a).to_vec();
        self.push(Op::MulScalar(self.idx(s), self.idx(a)), shape)
    }

    /// Scalar division `a / b`.
    pub fn div_scalar(&mut self, a: Var, b: Var) -> Var {
        self.expect_scalar(a);
        self.expect_scalar(b);
        self.push(Op::DivScalar(self.idx(a), self.idx(b)), vec![])
    }

    /// `M · x` for a constant matrix.
    pub fn matvec(&mut self, m: Arc<RealMatrix>, x: Var) -> Var {
        self.expect_real(x);
        assert_eq!(self.value(x).len(), m.cols, "matvec dimension mismatch");
        let rows = m.rows;
        self.push(Op::Matvec(m, self.idx(x)), vec![rows])
    }

    /// Strided, zero-padded 2D convolution on `[B, C, H, W]` with weight `[O, C, KH, KW]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert!(xs.len() == 4 && ws.len() == 4 && xs[1] == ws[1], "conv2d shapes {xs:?} {ws:?}");
        let geom = ConvGeometry {
            batch: xs[0],
            in_channels: xs[1],
            out_channels: ws[0],
            in_h: xs[2],
            in_w: xs[3],
            kernel_h: ws[2],
            kernel_w: ws[3],
            stride,
            pad,
        };
        if let Some(b) = b {
            assert_eq!(self.value(b).len(), ws[0], "conv2d bias length");
        }
        let shape = vec![xs[0], ws[0], geom.out_h(), geom.out_w()];
        self.push(Op::Conv2d { geom, x: x.index, w: w.index, b: b.map(|b| b.index) }, shape)
    }

    /// Transposed convolution on `[B, C, H, W]` with weight `[C, O, KH, KW]`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Var {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        assert!(xs.len() == 4 && ws.len() == 4 && xs[1] == ws[0], "conv_transpose2d shapes {xs:?} {ws:?}");
        let geom = ConvTransposeGeometry {
            batch: xs[0],
            in_channels: xs[1],
            out_channels: ws[1],
            in_h: xs[2],
            in_w: xs[3],
            kernel_h: ws[2],
            kernel_w: ws[3],
            stride,
            pad,
        };
        if let Some(b) = b {
            assert_eq!(self.value(b).len(), ws[1], "conv_transpose2d bias length");
        }
        let shape = vec![xs[0], ws[1], geom.out_h(), geom.out_w()];
        self.push(Op::ConvTranspose2d { geom, x: x.index, w: w.index, b: b.map(|b| b.index) }, shape)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.shape(a).iter().product::<usize>(),
            "reshape changes element count"
        );
        self.push(Op::Reshape(self.idx(a)), shape.to_vec())
    }

    /// Embeds a real array as complex with zero imaginary part.
    pub fn to_complex(&mut self, a: Var) -> Var {
        self.expect_real(a);
        let shape = self.shape(a).to_vec();
        self.push(Op::ToComplex(self.idx(a)), shape)
    }

    pub fn cadd(&mut self, a: Var, b: Var) -> Var {
        self.expect_complex(a);
        self.expect_complex(b);
        let shape = self.same_shape(a, b);
        self.push(Op::CAdd(a.index, b.index), shape)
    }

    pub fn csub(&mut self, a: Var, b: Var) -> Var {
        self.expect_complex(a);
        self.expect_complex(b);
        let shape = self.same_shape(a, b);
        self.push(Op::CSub(a.index, b.index), shape)
    }

    pub fn cscale(&mut self, a: Var, k: Complex64) -> Var {
        self.expect_complex(a);
        let shape = self.shape(a).to_vec();
        self.push(Op::CScaleConst(self.idx(a), k), shape)
    }

    /// Real scalar node times complex array node.
    pub fn cmul_scalar(&mut self, s: Var, a: Var) -> Var {
        self.expect_real(s);
        self.expect_scalar(s);
        self.expect_complex(a);
        let shape = self.shape(a).to_vec();
        self.push(Op::CScaleVar(self.idx(s), self.idx(a)), shape)
    }

    /// Applies a fixed linear operator; back-propagates through its adjoint.
    pub fn apply(&mut self, op: Arc<dyn LinearOperator>, a: Var) -> Var {
        self.expect_complex(a);
        assert_eq!(self.complex_value(a).len(), op.domain_len(), "operator domain mismatch");
        let shape = op.codomain_shape();
        self.push(Op::CApply(op, self.idx(a)), shape)
    }

    /// `Re⟨a, b⟩ = Re Σ conj(aᵢ)·bᵢ` as a real scalar.
    pub fn re_dot(&mut self, a: Var, b: Var) -> Var {
        self.expect_complex(a);
        self.expect_complex(b);
        self.same_shape(a, b);
        self.push(Op::ReDot(a.index, b.index), vec![])
    }

    /// Recomputes every node from the recorded leaves and constants.
    pub fn replay(&self) -> Vec<Vec<f64>> {
        let mut vals: Vec<Value> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf | Op::Const => node.value.clone(),
                _ => eval(&node.op, vals.as_slice()),
            };
            vals.push(v);
        }
        vals.into_iter()
            .map(|v| match v {
                Value::Real(r) => r,
                Value::Complex(c) => c.iter().flat_map(|z| [z.re, z.im]).collect(),
            })
            .collect()
    }

    /// Stored forward values in the same flattened layout as [`replay`](Self::replay).
    pub fn recorded(&self) -> Vec<Vec<f64>> {
        self.nodes
            .iter()
            .map(|n| match &n.value {
                Value::Real(r) => r.clone(),
                Value::Complex(c) => c.iter().flat_map(|z| [z.re, z.im]).collect(),
            })
            .collect()
    }

    /// ∂objective/∂wrtᵢ for each requested real node.
    pub fn grad(&self, objective: Var, wrt: &[Var]) -> Result<Vec<RealArray>> {
        for v in std::iter::once(&objective).chain(wrt) {
            if v.tape != self.id || v.index >= self.nodes.len() {
                return Err(Error::Dependency(v.index));
            }
        }
        for v in wrt {
            if self.is_complex(*v) {
                return Err(Error::InvalidArgument("gradients are taken w.r.t. real nodes only".into()));
            }
        }
        if self.is_complex(objective) || self.value(objective).len() != 1 {
            return Err(Error::InvalidArgument("objective must be a real scalar".into()));
        }
        let adj = self.backward(objective.index);
        Ok(wrt
            .iter()
            .map(|v| {
                let node = &self.nodes[v.index];
                let data = match &adj[v.index] {
                    Some(Value::Real(g)) => g.clone(),
                    _ => vec![0.0; node.value.real().len()],
                };
                RealArray::from_parts(node.shape.clone(), data)
            })
            .collect())
    }

    fn backward(&self, out: usize) -> Vec<Option<Value>> {
        let mut adj: Vec<Option<Value>> = vec![None; out + 1];
        adj[out] = Some(Value::Real(vec![1.0]));
        for i in (0..=out).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(&node.op, i, &g, &mut adj);
            adj[i] = Some(g);
        }
        adj
    }

    fn len_of(&self, i: usize) -> usize {
        match &self.nodes[i].value {
            Value::Real(v) => v.len(),
            Value::Complex(v) => v.len(),
        }
    }

    fn rv(&self, i: usize) -> &[f64] {
        self.nodes[i].value.real()
    }

    fn cv(&self, i: usize) -> &[Complex64] {
        self.nodes[i].value.complex()
    }

    fn propagate(&self, op: &Op, me: usize, g: &Value, adj: &mut [Option<Value>]) {
        match op {
            Op::Leaf | Op::Const => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let g = g.real();
                let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
                accumulate_real(&mut adj[*a], |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y), g.len());
                accumulate_real(&mut adj[*b], |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += sign * y), g.len());
            }
            Op::Mul(a, b) => {
                let g = g.real();
                let (va, vb) = (self.rv(*a), self.rv(*b));
                accumulate_real(&mut adj[*a], |d| {
                    d.iter_mut().zip(g).zip(vb).for_each(|((x, y), w)| *x += y * w)
                }, g.len());
                accumulate_real(&mut adj[*b], |d| {
                    d.iter_mut().zip(g).zip(va).for_each(|((x, y), w)| *x += y * w)
                }, g.len());
            }
            Op::Scale(a, k) => {
                let g = g.real();
                accumulate_real(&mut adj[*a], |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += k * y), g.len());
            }
            Op::Offset(a, _) | Op::Reshape(a) => match g {
                Value::Real(g) => accumulate_real(&mut adj[*a], |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y), g.len()),
                Value::Complex(g) => accumulate_complex(&mut adj[*a], |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y), g.len()),
            },
            Op::Relu(a) => {
                let g = g.real();
                let va = self.rv(*a);
                accumulate_real(&mut adj[*a], |d| {
                    d.iter_mut().zip(g).zip(va).for_each(|((x, y), v)| if *v > 0.0 { *x += y })
                }, g.len());
            }
            Op::Exp(a) => {
                let g = g.real();
                let out = self.rv(me);
                accumulate_real(&mut adj[*a], |d| {
                    d.iter_mut().zip(g).zip(out).for_each(|((x, y), o)| *x += y * o)
                }, g.len());
            }
            Op::Log(a) => {
                let g = g.real();
                let va = self.rv(*a);
                accumulate_real(&mut adj[*a], |d| {
                    d.iter_mut().zip(g).zip(va).for_each(|((x, y), v)| *x += y / v)
                }, g.len());
            }
            Op::Square(a) => {
                let g = g.real();
                let va = self.rv(*a);
                accumulate_real(&mut adj[*a], |d| {
                    d.iter_mut().zip(g).zip(va).for_each(|((x, y), v)| *x += 2.0 * v * y)
                }, g.len());
            }
            Op::Sum(a) => {
                let g = g.real()[0];
                let n = self.len_of(*a);
                accumulate_real(&mut adj[*a], |d| d.iter_mut().for_each(|x| *x += g), n);
            }
            Op::Dot(a, b) => {
                let g = g.real()[0];
                let (va, vb) = (self.rv(*a), self.rv(*b));
                accumulate_real(&mut adj[*a], |d| d.iter_mut().zip(vb).for_each(|(x, w)| *x += g * w), va.len());
                accumulate_real(&mut adj[*b], |d| d.iter_mut().zip(va).for_each(|(x, w)| *x += g * w), vb.len());
            }
            Op::MulScalar(s, a) => {
                let g = g.real();
                let sv = self.rv(*s)[0];
                let va = self.rv(*a);
                let gs: f64 = g.iter().zip(va).map(|(x, y)| x * y).sum();
                accumulate_real(&mut adj[*s], |d| d[0] += gs, 1);
                accumulate_real(&mut adj[*a], |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += sv * y), g.len());
            }
            Op::DivScalar(a, b) => {
                let g = g.real()[0];
                let (va, vb) = (self.rv(*a)[0], self.rv(*b)[0]);
                accumulate_real(&mut adj[*a], |d| d[0] += g / vb, 1);
                accumulate_real(&mut adj[*b], |d| d[0] -= g * va / (vb * vb), 1);
            }
            Op::Matvec(m, x) => {
                let gx = m.matvec_t(g.real());
                accumulate_real(&mut adj[*x], |d| d.iter_mut().zip(&gx).for_each(|(p, q)| *p += q), gx.len());
            }
            Op::Conv2d { geom, x, w, b } => {
                let g = g.real();
                let gx = conv::conv2d_backward_input(geom, g, self.rv(*w));
                let gw = conv::conv2d_backward_weight(geom, self.rv(*x), g);
                accumulate_real(&mut adj[*x], |d| d.iter_mut().zip(&gx).for_each(|(p, q)| *p += q), gx.len());
                accumulate_real(&mut adj[*w], |d| d.iter_mut().zip(&gw).for_each(|(p, q)| *p += q), gw.len());
                if let Some(b) = b {
                    let gb = conv::bias_grad(geom.batch, geom.out_channels, geom.out_h() * geom.out_w(), g);
                    accumulate_real(&mut adj[*b], |d| d.iter_mut().zip(&gb).for_each(|(p, q)| *p += q), gb.len());
                }
            }
            Op::ConvTranspose2d { geom, x, w, b } => {
                let g = g.real();
                let gx = conv::conv_transpose2d_backward_input(geom, g, self.rv(*w));
                let gw = conv::conv_transpose2d_backward_weight(geom, self.rv(*x), g);
                accumulate_real(&mut adj[*x], |d| d.iter_mut().zip(&gx).for_each(|(p, q)| *p += q), gx.len());
                accumulate_real(&mut adj[*w], |d| d.iter_mut().zip(&gw).for_each(|(p, q)| *p += q), gw.len());
                if let Some(b) = b {
                    let gb = conv::bias_grad(geom.batch, geom.out_channels, geom.out_h() * geom.out_w(), g);
                    accumulate_real(&mut adj[*b], |d| d.iter_mut().zip(&gb).for_each(|(p, q)| *p += q), gb.len());
                }
            }
            Op::ToComplex(a) => {
                let g = g.complex();
                accumulate_real(&mut adj[*a], |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y.re), g.len());
            }
            Op::CAdd(a, b) | Op::CSub(a, b) => {
                let g = g.complex();
                let sign = if matches!(op, Op::CSub(..)) { -1.0 } else { 1.0 };
                accumulate_complex(&mut adj[*a], |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y), g.len());
                accumulate_complex(&mut adj[*b], |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y * sign), g.len());
            }
            Op::CScaleConst(a, k) => {
                let g = g.complex();
                let kc = k.conj();
                accumulate_complex(&mut adj[*a], |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y * kc), g.len());
            }
            Op::CScaleVar(s, a) => {
                let g = g.complex();
                let sv = self.rv(*s)[0];
                let va = self.cv(*a);
                let gs: f64 = va.iter().zip(g).map(|(x, y)| (x.conj() * y).re).sum();
                accumulate_real(&mut adj[*s], |d| d[0] += gs, 1);
                accumulate_complex(&mut adj[*a], |d| d.iter_mut().zip(g).for_each(|(x, y)| *x += y * sv), g.len());
            }
            Op::CApply(lin, a) => {
                let ga = lin.adjoint_slice(g.complex());
                accumulate_complex(&mut adj[*a], |d| d.iter_mut().zip(&ga).for_each(|(x, y)| *x += y), ga.len());
            }
            Op::ReDot(a, b) => {
                let g = g.real()[0];
                let (va, vb) = (self.cv(*a), self.cv(*b));
                accumulate_complex(&mut adj[*a], |d| d.iter_mut().zip(vb).for_each(|(x, w)| *x += w * g), va.len());
                accumulate_complex(&mut adj[*b], |d| d.iter_mut().zip(va).for_each(|(x, w)| *x += w * g), vb.len());
            }
        }
    }
}
