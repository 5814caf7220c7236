use super::tensor::{matmul, matmul_at, matmul_bt, Tensor};
use super::NdError;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// Adds a `1 x m` row to every row.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// Multiplies every element by a 1x1 variable.
    MulScalar(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Min(Var, Var),
    Clamp(Var, f64, f64),
    Concat(Var, Var),
    Column(Var, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Tape of tensor operations supporting one reverse pass.
///
/// Every operation validates shapes and rejects non-finite results.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to every node that requires them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<(), NdError> {
    if a.shape() != b.shape() {
        return Err(NdError::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Result<Var, NdError> {
        self.leaf(value, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Result<Var, NdError> {
        self.leaf(value, false)
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var, NdError> {
        if !value.is_finite() {
            return Err(NdError::NonFinite("leaf"));
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, what: &'static str) -> Result<Var, NdError> {
        if !value.is_finite() {
            return Err(NdError::NonFinite(what));
        }
        let requires_grad = match op {
            Op::Leaf => false,
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::AddRow(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MulScalar(a, b)
            | Op::Min(a, b)
            | Op::Concat(a, b) => self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad,
            Op::Scale(a, _)
            | Op::Offset(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Square(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Clamp(a, _, _)
            | Op::Column(a, _) => self.nodes[a.0].requires_grad,
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let v = matmul(self.value(a), self.value(b))?;
        self.push(v, Op::MatMul(a, b), "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        same_shape(self.value(a), self.value(b), "add")?;
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b), "add")
    }

    /// `a + row`, broadcasting a `1 x m` row over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NdError> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(NdError::Shape(format!(
                "add_row: {:?} + {:?}",
                ta.shape(),
                tr.shape()
            )));
        }
        let m = ta.cols();
        let mut v = ta.clone();
        for (i, x) in v.data_mut().iter_mut().enumerate() {
            *x += tr.data()[i % m];
        }
        self.push(v, Op::AddRow(a, row), "add_row")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b), "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        same_shape(self.value(a), self.value(b), "mul")?;
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b), "mul")
    }

    /// `a * s` where `s` is a 1x1 variable.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var, NdError> {
        if self.value(s).shape() != (1, 1) {
            return Err(NdError::Shape("mul_scalar needs a 1x1 factor".into()));
        }
        let k = self.value(s).item();
        let v = self.value(a).map(|x| x * k);
        self.push(v, Op::MulScalar(a, s), "mul_scalar")
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var, NdError> {
        let v = self.value(a).map(|x| x * k);
        self.push(v, Op::Scale(a, k), "scale")
    }

    /// `a + k` elementwise.
    pub fn offset(&mut self, a: Var, k: f64) -> Result<Var, NdError> {
        let v = self.value(a).map(|x| x + k);
        self.push(v, Op::Offset(a), "offset")
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, NdError> {
        self.scale(a, -1.0)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NdError> {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a), "tanh")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NdError> {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a), "relu")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NdError> {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a), "exp")
    }

    pub fn log(&mut self, a: Var) -> Result<Var, NdError> {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a), "log")
    }

    pub fn square(&mut self, a: Var) -> Result<Var, NdError> {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a), "square")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NdError> {
        let v = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(v, Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NdError> {
        let t = self.value(a);
        if t.data().is_empty() {
            return Err(NdError::Shape("mean of empty tensor".into()));
        }
        let v = Tensor::scalar(t.data().iter().sum::<f64>() / t.data().len() as f64);
        self.push(v, Op::Mean(a), "mean")
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        same_shape(self.value(a), self.value(b), "min")?;
        let v = self.value(a).zip(self.value(b), f64::min);
        self.push(v, Op::Min(a, b), "min")
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, NdError> {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi), "clamp")
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(NdError::Shape(format!(
                "concat: {:?} and {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (n, ca, cb) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(n * (ca + cb));
        for i in 0..n {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let v = Tensor::new(n, ca + cb, data)?;
        self.push(v, Op::Concat(a, b), "concat")
    }

    /// Extracts column `c` as an `n x 1` tensor.
    pub fn column(&mut self, a: Var, c: usize) -> Result<Var, NdError> {
        let t = self.value(a);
        if c >= t.cols() {
            return Err(NdError::Shape(format!("column {c} of {:?}", t.shape())));
        }
        let data = (0..t.rows()).map(|i| t.get(i, c)).collect();
        let v = Tensor::new(t.rows(), 1, data)?;
        self.push(v, Op::Column(a, c), "column")
    }

    /// Reverse pass from a 1x1 output.
    pub fn backward(&self, output: Var) -> Result<Gradients, NdError> {
        if self.value(output).shape() != (1, 1) {
            return Err(NdError::Shape("backward needs a scalar output".into()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            // leaves keep their gradient for the caller
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let val = &node.value;
            match node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    if self.needs(a) {
                        let ga = matmul_bt(&g, self.value(b));
                        self.accumulate(&mut grads, a, ga);
                    }
                    if self.needs(b) {
                        let gb = matmul_at(self.value(a), &g);
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(a) {
                        self.accumulate(&mut grads, a, g.clone());
                    }
                    if self.needs(b) {
                        self.accumulate(&mut grads, b, g.clone());
                    }
                }
                Op::AddRow(a, row) => {
                    if self.needs(row) {
                        let m = g.cols();
                        let mut gr = Tensor::zeros(1, m);
                        for i in 0..g.rows() {
                            for (d, s) in gr.data_mut().iter_mut().zip(g.row(i)) {
                                *d += s;
                            }
                        }
                        self.accumulate(&mut grads, row, gr);
                    }
                    if self.needs(a) {
                        self.accumulate(&mut grads, a, g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if self.needs(a) {
                        self.accumulate(&mut grads, a, g.clone());
                    }
                    if self.needs(b) {
                        self.accumulate(&mut grads, b, g.map(|x| -x));
                    }
                }
                Op::Mul(a, b) => {
                    if self.needs(a) {
                        let ga = g.zip(self.value(b), |x, y| x * y);
                        self.accumulate(&mut grads, a, ga);
                    }
                    if self.needs(b) {
                        let gb = g.zip(self.value(a), |x, y| x * y);
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::MulScalar(a, s) => {
                    let k = self.value(s).item();
                    if self.needs(s) {
                        let dot: f64 = g.data().iter().zip(self.value(a).data()).map(|(x, y)| x * y).sum();
                        self.accumulate(&mut grads, s, Tensor::scalar(dot));
                    }
                    if self.needs(a) {
                        self.accumulate(&mut grads, a, g.map(|x| x * k));
                    }
                }
                Op::Scale(a, k) => self.accumulate(&mut grads, a, g.map(|x| x * k)),
                Op::Offset(a) => self.accumulate(&mut grads, a, g),
                Op::Tanh(a) => {
                    let ga = g.zip(val, |x, y| x * (1.0 - y * y));
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip(self.value(a), |x, y| if y > 0.0 { x } else { 0.0 });
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.zip(val, |x, y| x * y);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Log(a) => {
                    let ga = g.zip(self.value(a), |x, y| x / y);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Square(a) => {
                    let ga = g.zip(self.value(a), |x, y| 2.0 * x * y);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(a).shape();
                    self.accumulate(&mut grads, a, Tensor::filled(r, c, g.item()));
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(a).shape();
                    let k = g.item() / (r * c) as f64;
                    self.accumulate(&mut grads, a, Tensor::filled(r, c, k));
                }
                Op::Min(a, b) => {
                    let (ta, tb) = (self.value(a), self.value(b));
                    if self.needs(a) {
                        let mut ga = g.clone();
                        for ((d, x), y) in ga.data_mut().iter_mut().zip(ta.data()).zip(tb.data()) {
                            if x > y {
                                *d = 0.0;
                            }
                        }
                        self.accumulate(&mut grads, a, ga);
                    }
                    if self.needs(b) {
                        let mut gb = g.clone();
                        for ((d, x), y) in gb.data_mut().iter_mut().zip(ta.data()).zip(tb.data()) {
                            if x <= y {
                                *d = 0.0;
                            }
                        }
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let ga = g.zip(self.value(a), |x, y| if y >= lo && y <= hi { x } else { 0.0 });
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Concat(a, b) => {
                    let ca = self.value(a).cols();
                    let cb = self.value(b).cols();
                    let n = g.rows();
                    if self.needs(a) {
                        let mut ga = Vec::with_capacity(n * ca);
                        for i in 0..n {
                            ga.extend_from_slice(&g.row(i)[..ca]);
                        }
                        self.accumulate(&mut grads, a, Tensor::new(n, ca, ga)?);
                    }
                    if self.needs(b) {
                        let mut gb = Vec::with_capacity(n * cb);
                        for i in 0..n {
                            gb.extend_from_slice(&g.row(i)[ca..]);
                        }
                        self.accumulate(&mut grads, b, Tensor::new(n, cb, gb)?);
                    }
                }
                Op::Column(a, c) => {
                    let (r, cols) = self.value(a).shape();
                    let mut ga = Tensor::zeros(r, cols);
                    for i in 0..r {
                        ga.data_mut()[i * cols + c] = g.data()[i];
                    }
                    self.accumulate(&mut grads, a, ga);
                }
            }
        }
        for g in grads.iter().flatten() {
            if !g.is_finite() {
                return Err(NdError::NonFinite("gradient"));
            }
        }
        Ok(Gradients { grads })
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }
}
