//! Reverse-mode differentiation over dense matrices.
//!
//! The same backward sweep runs in two linearizations: ordinary gradients,
//! or DeepLIFT multipliers computed against a reference tape of identical
//! structure. Under the second, every unary nonlinearity uses the secant
//! slope `(f(x) - f(x0)) / (x - x0)` (the rescale rule) and every product of
//! two variables uses the midpoint of both operands, so each local step
//! satisfies `Δy = Σ m·Δx` exactly and the composition sums to delta.

use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};

use crate::error::{Error, Result};

pub type NodeId = usize;
pub type Matrix = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryFn {
    Exp,
    Ln,
    Tanh,
    /// Tanh approximation of the Gaussian error linear unit.
    Gelu,
    Relu,
    Square,
    /// `x^(-1/2)`
    Rsqrt,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl UnaryFn {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryFn::Exp => x.exp(),
            UnaryFn::Ln => x.ln(),
            UnaryFn::Tanh => x.tanh(),
            UnaryFn::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()),
            UnaryFn::Relu => x.max(0.0),
            UnaryFn::Square => x * x,
            UnaryFn::Rsqrt => 1.0 / x.sqrt(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            UnaryFn::Exp => x.exp(),
            UnaryFn::Ln => 1.0 / x,
            UnaryFn::Tanh => 1.0 - x.tanh().powi(2),
            UnaryFn::Gelu => {
                let u = GELU_C * (x + GELU_A * x * x * x);
                let t = u.tanh();
                let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
            }
            UnaryFn::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryFn::Square => 2.0 * x,
            UnaryFn::Rsqrt => -0.5 * x.powf(-1.5),
        }
    }

    /// Slope of the chord between `x0` and `x`.
    pub fn secant(self, x: f64, x0: f64) -> f64 {
        let dx = x - x0;
        match self {
            UnaryFn::Square => x + x0,
            UnaryFn::Rsqrt => {
                let (a, b) = (x.sqrt(), x0.sqrt());
                -1.0 / (a * b * (a + b))
            }
            UnaryFn::Exp if dx != 0.0 => x0.exp() * dx.exp_m1() / dx,
            UnaryFn::Ln if dx != 0.0 => (dx / x0).ln_1p() / dx,
            _ => {
                let scale = 1.0f64.max(x.abs()).max(x0.abs());
                if dx.abs() <= 1e-7 * scale {
                    self.derivative(0.5 * (x + x0))
                } else {
                    (self.apply(x) - self.apply(x0)) / dx
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    /// `a (n×m) + b (1×m)`
    AddRow(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `a (n×m) ⊙ b (n×1)` broadcast across columns.
    MulCol(NodeId, NodeId),
    /// `a (n×m) ⊙ b (1×m)` broadcast across rows.
    MulRow(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    /// `a · bᵀ`
    MatMulTransB(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Unary(NodeId, UnaryFn),
    RowMean(NodeId),
    CenterRows(NodeId),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    RowMax(NodeId),
    SliceRows(NodeId, usize, usize),
    SliceCols(NodeId, usize, usize),
    ConcatCols(Vec<NodeId>),
    GatherRows(NodeId, Vec<usize>),
    /// Row-wise sum over a subset of columns, giving `n×1`.
    SumCols(NodeId, Vec<usize>),
    SumAll(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Mul(..) => "mul",
            Op::MulCol(..) => "mul_col",
            Op::MulRow(..) => "mul_row",
            Op::MatMul(..) => "matmul",
            Op::MatMulTransB(..) => "matmul_t",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Unary(..) => "unary",
            Op::RowMean(..) => "row_mean",
            Op::CenterRows(..) => "center_rows",
            Op::SoftmaxRows(..) => "softmax",
            Op::LogSoftmaxRows(..) => "log_softmax",
            Op::RowMax(..) => "row_max",
            Op::SliceRows(..) => "slice_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::GatherRows(..) => "gather_rows",
            Op::SumCols(..) => "sum_cols",
            Op::SumAll(..) => "sum_all",
        }
    }

    fn has_rescale_rule(&self) -> bool {
        !matches!(self, Op::LogSoftmaxRows(..) | Op::RowMax(..))
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Arc<Matrix>,
    op: Op,
}

/// How the backward sweep linearizes each operation.
#[derive(Clone, Copy)]
pub enum Linearization<'a> {
    Gradient,
    /// DeepLIFT multipliers relative to `reference`, a tape recorded by the
    /// same program on the baseline input.
    Rescale {
        reference: &'a Tape,
    },
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn row_softmax(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn row_log_softmax(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

fn col(v: ndarray::Array1<f64>) -> Matrix {
    let n = v.len();
    v.into_shape_with_order((n, 1)).expect("column reshape")
}

fn row(v: ndarray::Array1<f64>) -> Matrix {
    let n = v.len();
    v.into_shape_with_order((1, n)).expect("row reshape")
}

fn accumulate(slot: &mut Option<Matrix>, delta: Matrix) {
    match slot {
        Some(g) => *g += &delta,
        None => *slot = Some(delta),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id].value[[0, 0]]
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
        });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Leaf sharing storage with `value` (used for parameters).
    pub fn leaf_shared(&mut self, value: Arc<Matrix>) -> NodeId {
        self.nodes.push(Node { value, op: Op::Leaf });
        self.nodes.len() - 1
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let v = self.value(a) + self.value(bias);
        self.push(v, Op::AddRow(a, bias))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn mul_col(&mut self, a: NodeId, c: NodeId) -> NodeId {
        let v = self.value(a) * self.value(c);
        self.push(v, Op::MulCol(a, c))
    }

    pub fn mul_row(&mut self, a: NodeId, r: NodeId) -> NodeId {
        let v = self.value(a) * self.value(r);
        self.push(v, Op::MulRow(a, r))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulTransB(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a) + c;
        self.push(v, Op::AddScalar(a))
    }

    pub fn unary(&mut self, a: NodeId, f: UnaryFn) -> NodeId {
        let v = self.value(a).mapv(|x| f.apply(x));
        self.push(v, Op::Unary(a, f))
    }

    pub fn row_mean(&mut self, a: NodeId) -> NodeId {
        let v = col(self.value(a).mean_axis(Axis(1)).expect("non-empty row"));
        self.push(v, Op::RowMean(a))
    }

    pub fn center_rows(&mut self, a: NodeId) -> NodeId {
        let x = self.value(a);
        let mean = col(x.mean_axis(Axis(1)).expect("non-empty row"));
        let v = x - &mean;
        self.push(v, Op::CenterRows(a))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let v = row_softmax(self.value(a));
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: NodeId) -> NodeId {
        let v = row_log_softmax(self.value(a));
        self.push(v, Op::LogSoftmaxRows(a))
    }

    pub fn row_max(&mut self, a: NodeId) -> NodeId {
        let v = col(self
            .value(a)
            .map_axis(Axis(1), |r| r.fold(f64::NEG_INFINITY, |m, &x| m.max(x))));
        self.push(v, Op::RowMax(a))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        let v = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start, end))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, end: usize) -> NodeId {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(v, Op::SliceCols(a, start, end))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("equal row counts");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, a: NodeId, rows: &[usize]) -> NodeId {
        let v = self.value(a).select(Axis(0), rows);
        self.push(v, Op::GatherRows(a, rows.to_vec()))
    }

    pub fn sum_cols(&mut self, a: NodeId, cols: &[usize]) -> NodeId {
        let x = self.value(a);
        let v = col(x.select(Axis(1), cols).sum_axis(Axis(1)));
        self.push(v, Op::SumCols(a, cols.to_vec()))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::SumAll(a))
    }

    /// Names of operations reachable from `output` that lack a rescale rule.
    pub fn unsupported_for_rescale(&self, output: NodeId) -> Vec<String> {
        let mut reach = vec![false; output + 1];
        reach[output] = true;
        let mut names: Vec<String> = Vec::new();
        for id in (0..=output).rev() {
            if !reach[id] {
                continue;
            }
            let op = &self.nodes[id].op;
            if !op.has_rescale_rule() && !names.iter().any(|n| n == op.name()) {
                names.push(op.name().to_string());
            }
            for p in parents(op) {
                reach[p] = true;
            }
        }
        names
    }

    /// Backpropagates `seed` (shaped like `output`) and returns the
    /// accumulated multiplier for every node, `None` where nothing flowed.
    pub fn backward(&self, output: NodeId, seed: Matrix, mode: Linearization<'_>) -> Result<Vec<Option<Matrix>>> {
        if let Linearization::Rescale { reference } = mode {
            self.check_reference(reference, output)?;
            let unsupported = self.unsupported_for_rescale(output);
            if !unsupported.is_empty() {
                return Err(Error::UnsupportedLayer(unsupported));
            }
        }
        if seed.dim() != self.value(output).dim() {
            return Err(Error::Shape {
                expected: format!("{:?}", self.value(output).dim()),
                actual: format!("{:?}", seed.dim()),
            });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; output + 1];
        grads[output] = Some(seed);
        for id in (0..=output).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.backward_node(id, &g, mode, &mut grads);
            grads[id] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Ok(grads)
    }

    fn check_reference(&self, reference: &Tape, output: NodeId) -> Result<()> {
        if reference.nodes.len() <= output {
            return Err(Error::Shape {
                expected: format!("reference tape with at least {} nodes", output + 1),
                actual: format!("{} nodes", reference.nodes.len()),
            });
        }
        for id in 0..=output {
            let (a, b) = (&self.nodes[id], &reference.nodes[id]);
            if a.op.name() != b.op.name() || a.value.dim() != b.value.dim() {
                return Err(Error::Shape {
                    expected: format!("node {id}: {} {:?}", a.op.name(), a.value.dim()),
                    actual: format!("{} {:?}", b.op.name(), b.value.dim()),
                });
            }
        }
        Ok(())
    }

    /// Linearization point for a bilinear operand.
    fn point(&self, id: NodeId, mode: Linearization<'_>) -> Matrix {
        match mode {
            Linearization::Gradient => (*self.nodes[id].value).clone(),
            Linearization::Rescale { reference } => (&*self.nodes[id].value + &*reference.nodes[id].value) * 0.5,
        }
    }

    fn backward_node(&self, id: NodeId, g: &Matrix, mode: Linearization<'_>, grads: &mut [Option<Matrix>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(&mut grads[*a], g.clone());
                accumulate(&mut grads[*b], g.clone());
            }
            Op::AddRow(a, b) => {
                accumulate(&mut grads[*a], g.clone());
                accumulate(&mut grads[*b], row(g.sum_axis(Axis(0))));
            }
            Op::Mul(a, b) => {
                let (pa, pb) = (self.point(*a, mode), self.point(*b, mode));
                accumulate(&mut grads[*a], g * &pb);
                accumulate(&mut grads[*b], g * &pa);
            }
            Op::MulCol(a, c) => {
                let (pa, pc) = (self.point(*a, mode), self.point(*c, mode));
                accumulate(&mut grads[*a], g * &pc);
                accumulate(&mut grads[*c], col((g * &pa).sum_axis(Axis(1))));
            }
            Op::MulRow(a, r) => {
                let (pa, pr) = (self.point(*a, mode), self.point(*r, mode));
                accumulate(&mut grads[*a], g * &pr);
                accumulate(&mut grads[*r], row((g * &pa).sum_axis(Axis(0))));
            }
            Op::MatMul(a, b) => {
                let (pa, pb) = (self.point(*a, mode), self.point(*b, mode));
                accumulate(&mut grads[*a], g.dot(&pb.t()));
                accumulate(&mut grads[*b], pa.t().dot(g));
            }
            Op::MatMulTransB(a, b) => {
                let (pa, pb) = (self.point(*a, mode), self.point(*b, mode));
                accumulate(&mut grads[*a], g.dot(&pb));
                accumulate(&mut grads[*b], g.t().dot(&pa));
            }
            Op::Scale(a, c) => accumulate(&mut grads[*a], g * *c),
            Op::AddScalar(a) => accumulate(&mut grads[*a], g.clone()),
            Op::Unary(a, f) => {
                let x = self.value(*a);
                let slope = match mode {
                    Linearization::Gradient => x.mapv(|v| f.derivative(v)),
                    Linearization::Rescale { reference } => {
                        let mut m = x.clone();
                        Zip::from(&mut m)
                            .and(reference.value(*a))
                            .for_each(|m, &x0| *m = f.secant(*m, x0));
                        m
                    }
                };
                accumulate(&mut grads[*a], g * &slope);
            }
            Op::RowMean(a) => {
                let m = self.value(*a).ncols() as f64;
                let shape = self.value(*a).raw_dim();
                let gi = Array2::from_shape_fn(shape, |(i, _)| g[[i, 0]] / m);
                accumulate(&mut grads[*a], gi);
            }
            Op::CenterRows(a) => {
                let mean = col(g.mean_axis(Axis(1)).expect("non-empty row"));
                accumulate(&mut grads[*a], g - &mean);
            }
            Op::SoftmaxRows(a) => {
                let gz = match mode {
                    Linearization::Gradient => {
                        let y = self.value(id);
                        let dot = col((g * y).sum_axis(Axis(1)));
                        y * &(g - &dot)
                    }
                    Linearization::Rescale { reference } => softmax_rescale(self.value(*a), reference.value(*a), g),
                };
                accumulate(&mut grads[*a], gz);
            }
            Op::LogSoftmaxRows(a) => {
                let p = self.value(id).mapv(f64::exp);
                let total = col(g.sum_axis(Axis(1)));
                accumulate(&mut grads[*a], g - &(&p * &total));
            }
            Op::RowMax(a) => {
                let x = self.value(*a);
                let mut gi = Array2::zeros(x.raw_dim());
                for (i, r) in x.rows().into_iter().enumerate() {
                    let arg = r
                        .iter()
                        .enumerate()
                        .fold(
                            (0, f64::NEG_INFINITY),
                            |best, (j, &v)| if v > best.1 { (j, v) } else { best },
                        )
                        .0;
                    gi[[i, arg]] = g[[i, 0]];
                }
                accumulate(&mut grads[*a], gi);
            }
            Op::SliceRows(a, start, end) => {
                let mut gi = Array2::zeros(self.value(*a).raw_dim());
                gi.slice_mut(s![*start..*end, ..]).assign(g);
                accumulate(&mut grads[*a], gi);
            }
            Op::SliceCols(a, start, end) => {
                let mut gi = Array2::zeros(self.value(*a).raw_dim());
                gi.slice_mut(s![.., *start..*end]).assign(g);
                accumulate(&mut grads[*a], gi);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).ncols();
                    accumulate(&mut grads[p], g.slice(s![.., offset..offset + w]).to_owned());
                    offset += w;
                }
            }
            Op::GatherRows(a, rows) => {
                let mut gi = Array2::zeros(self.value(*a).raw_dim());
                for (k, &r) in rows.iter().enumerate() {
                    let mut dst = gi.row_mut(r);
                    dst += &g.row(k);
                }
                accumulate(&mut grads[*a], gi);
            }
            Op::SumCols(a, cols) => {
                let mut gi = Array2::zeros(self.value(*a).raw_dim());
                for &c in cols {
                    let mut dst = gi.column_mut(c);
                    dst += &g.column(0);
                }
                accumulate(&mut grads[*a], gi);
            }
            Op::SumAll(a) => {
                let gi = Array2::from_elem(self.value(*a).raw_dim(), g[[0, 0]]);
                accumulate(&mut grads[*a], gi);
            }
        }
    }
}

fn parents(op: &Op) -> Vec<NodeId> {
    match op {
        Op::Leaf => vec![],
        Op::Add(a, b)
        | Op::AddRow(a, b)
        | Op::Mul(a, b)
        | Op::MulCol(a, b)
        | Op::MulRow(a, b)
        | Op::MatMul(a, b)
        | Op::MatMulTransB(a, b) => vec![*a, *b],
        Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::Unary(a, _)
        | Op::RowMean(a)
        | Op::CenterRows(a)
        | Op::SoftmaxRows(a)
        | Op::LogSoftmaxRows(a)
        | Op::RowMax(a)
        | Op::SliceRows(a, ..)
        | Op::SliceCols(a, ..)
        | Op::GatherRows(a, _)
        | Op::SumCols(a, _)
        | Op::SumAll(a) => vec![*a],
        Op::ConcatCols(parts) => parts.clone(),
    }
}

/// Multipliers for `y = e ⊙ r` with `e = exp(z - c)`, `r = 1 / Σ e`,
/// linearized between `z` and `z0` with a shared per-row shift `c`.
fn softmax_rescale(z: &Matrix, z0: &Matrix, g: &Matrix) -> Matrix {
    let mut out = Array2::zeros(z.raw_dim());
    for i in 0..z.nrows() {
        let (zr, z0r, gr) = (z.row(i), z0.row(i), g.row(i));
        let shift = zr.iter().chain(z0r.iter()).fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let e: Vec<f64> = zr.iter().map(|&v| (v - shift).exp()).collect();
        let e0: Vec<f64> = z0r.iter().map(|&v| (v - shift).exp()).collect();
        let (s, s0) = (e.iter().sum::<f64>(), e0.iter().sum::<f64>());
        let (r, r0) = (1.0 / s, 1.0 / s0);
        let r_mid = 0.5 * (r + r0);
        let r_slope = -r * r0;
        let through_r: f64 = gr
            .iter()
            .zip(e.iter().zip(&e0))
            .map(|(&gj, (&a, &b))| gj * 0.5 * (a + b))
            .sum::<f64>()
            * r_slope;
        for j in 0..zr.len() {
            let exp_slope = UnaryFn::Exp.secant(zr[j] - shift, z0r[j] - shift);
            out[[i, j]] = exp_slope * (r_mid * gr[j] + through_r);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
    }

    /// A small program exercising every rescale-capable op.
    fn program(tape: &mut Tape, x: Matrix, w: &Matrix) -> (NodeId, NodeId) {
        let xin = tape.leaf(x);
        let wl = tape.leaf(w.clone());
        let h = tape.matmul(xin, wl);
        let c = tape.center_rows(h);
        let sq = tape.unary(c, UnaryFn::Square);
        let var = tape.row_mean(sq);
        let var = tape.add_scalar(var, 1e-5);
        let inv = tape.unary(var, UnaryFn::Rsqrt);
        let n = tape.mul_col(c, inv);
        let act = tape.unary(n, UnaryFn::Gelu);
        let scores = tape.matmul_t(act, n);
        let att = tape.softmax_rows(scores);
        let mixed = tape.matmul(att, act);
        let t = tape.unary(mixed, UnaryFn::Tanh);
        let prod = tape.mul(t, act);
        let first = tape.slice_rows(prod, 0, 1);
        let parts = [tape.slice_cols(first, 0, 2), tape.slice_cols(first, 2, 4)];
        let joined = tape.concat_cols(&parts);
        let scaled = tape.scale(joined, 2.0);
        let probs = tape.softmax_rows(scaled);
        (xin, probs)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(5, 4, &mut rng);
        let w = random(4, 4, &mut rng);
        let f = |x: &Matrix| {
            let mut t = Tape::new();
            let (_, out) = program(&mut t, x.clone(), &w);
            t.value(out)[[0, 1]]
        };
        let mut tape = Tape::new();
        let (xin, out) = program(&mut tape, x.clone(), &w);
        let mut seed = Array2::zeros((1, 4));
        seed[[0, 1]] = 1.0;
        let grads = tape.backward(out, seed, Linearization::Gradient).unwrap();
        let gx = grads[xin].as_ref().unwrap();
        let h = 1e-5;
        for i in 0..5 {
            for j in 0..4 {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[[i, j]] += h;
                xm[[i, j]] -= h;
                let fd = (f(&xp) - f(&xm)) / (2.0 * h);
                assert!(
                    (fd - gx[[i, j]]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{i},{j}: {fd} vs {}",
                    gx[[i, j]]
                );
            }
        }
    }

    #[test]
    fn rescale_sums_to_delta() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = random(6, 4, &mut rng);
            let x0 = random(6, 4, &mut rng);
            let w = random(4, 4, &mut rng);
            let mut reference = Tape::new();
            let (_, out0) = program(&mut reference, x0.clone(), &w);
            let mut tape = Tape::new();
            let (xin, out) = program(&mut tape, x.clone(), &w);
            for class in 0..4 {
                let mut seed = Array2::zeros((1, 4));
                seed[[0, class]] = 1.0;
                let m = tape
                    .backward(out, seed, Linearization::Rescale { reference: &reference })
                    .unwrap();
                let contrib = (m[xin].as_ref().unwrap() * &(&x - &x0)).sum();
                let delta = tape.value(out)[[0, class]] - reference.value(out0)[[0, class]];
                assert!((contrib - delta).abs() < 1e-10, "{contrib} vs {delta}");
            }
        }
    }

    #[test]
    fn secant_limits_match_derivative() {
        for f in [
            UnaryFn::Exp,
            UnaryFn::Ln,
            UnaryFn::Tanh,
            UnaryFn::Gelu,
            UnaryFn::Square,
            UnaryFn::Rsqrt,
        ] {
            for x in [0.3, 1.7, 2.5] {
                let s = f.secant(x, x);
                assert!((s - f.derivative(x)).abs() < 1e-9, "{f:?} at {x}");
                let wide = f.secant(x + 0.5, x);
                let chord = (f.apply(x + 0.5) - f.apply(x)) / 0.5;
                assert!((wide - chord).abs() < 1e-12, "{f:?} at {x}");
            }
        }
    }

    #[test]
    fn max_has_no_rescale_rule() {
        let mut tape = Tape::new();
        let x = tape.leaf(Array2::from_elem((2, 3), 1.0));
        let m = tape.row_max(x);
        let out = tape.sum_all(m);
        let reference = tape.clone();
        match tape.backward(
            out,
            Array2::ones((1, 1)),
            Linearization::Rescale { reference: &reference },
        ) {
            Err(Error::UnsupportedLayer(layers)) => assert_eq!(layers, vec!["row_max".to_string()]),
            other => panic!("{other:?}"),
        }
        assert!(tape
            .backward(out, Array2::ones((1, 1)), Linearization::Gradient)
            .is_ok());
    }

    #[test]
    fn gather_and_sum_cols_scatter_back() {
        let mut tape = Tape::new();
        let table = tape.leaf(Array2::from_shape_fn((3, 2), |(i, j)| (i * 2 + j) as f64));
        let picked = tape.gather_rows(table, &[2, 0, 2]);
        let summed = tape.sum_cols(picked, &[1]);
        let out = tape.sum_all(summed);
        assert_eq!(tape.scalar(out), 5.0 + 1.0 + 5.0);
        let g = tape
            .backward(out, Array2::ones((1, 1)), Linearization::Gradient)
            .unwrap();
        let gt = g[table].as_ref().unwrap();
        assert_eq!(gt[[2, 1]], 2.0);
        assert_eq!(gt[[0, 1]], 1.0);
        assert_eq!(gt[[1, 1]], 0.0);
        assert_eq!(gt[[2, 0]], 0.0);
    }
}
