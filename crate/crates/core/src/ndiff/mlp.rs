use rand::Rng;

use super::graph::{Gradients, Graph, Var};
use super::tensor::{matmul, Tensor};
use super::NdError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    fn apply_graph(self, g: &mut Graph, v: Var) -> Result<Var, NdError> {
        match self {
            Activation::Linear => Ok(v),
            Activation::Tanh => g.tanh(v),
            Activation::Relu => g.relu(v),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = NdError;

    fn from_str(s: &str) -> Result<Self, NdError> {
        match s {
            "linear" => Ok(Activation::Linear),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(NdError::Shape(format!("unknown activation `{other}`"))),
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Activation::Linear => "linear",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

/// Fully connected network layout: `widths[0]` inputs, `widths.last()`
/// outputs, hidden layers in between.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, hidden: Activation, output: Activation) -> Result<Self, NdError> {
        if widths.len() < 3 {
            return Err(NdError::Shape("an MLP needs at least one hidden layer".into()));
        }
        if widths.contains(&0) {
            return Err(NdError::Shape("layer widths must be >= 1".into()));
        }
        Ok(MlpSpec { widths, hidden, output })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn layers(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.widths.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(|(i, o)| i * o + o).sum()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 2 == self.widths.len() {
            self.output
        } else {
            self.hidden
        }
    }
}

impl std::fmt::Display for MlpSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let widths: Vec<String> = self.widths.iter().map(usize::to_string).collect();
        write!(f, "{} {} {}", widths.join(","), self.hidden, self.output)
    }
}

impl std::str::FromStr for MlpSpec {
    type Err = NdError;

    fn from_str(s: &str) -> Result<Self, NdError> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let [widths, hidden, output] = parts[..] else {
            return Err(NdError::Shape(format!("bad MLP spec `{s}`")));
        };
        let widths = widths
            .split(',')
            .map(|w| w.parse::<usize>().map_err(|e| NdError::Shape(format!("width `{w}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        MlpSpec::new(widths, hidden.parse()?, output.parse()?)
    }
}

/// A network: its layout plus a flat parameter vector laid out layer by
/// layer as `W (in x out, row-major)` followed by `b (out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self, NdError> {
        if params.len() != spec.param_count() {
            return Err(NdError::Shape(format!(
                "{} parameters for a network needing {}",
                params.len(),
                spec.param_count()
            )));
        }
        Ok(Mlp { spec, params })
    }

    /// Uniform fan-in initialisation, `U(-1/sqrt(in), 1/sqrt(in))`.
    pub fn init<R: Rng>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(spec.param_count());
        for (i, o) in spec.layers() {
            let bound = 1.0 / (i as f64).sqrt();
            for _ in 0..(i * o + o) {
                params.push(rng.gen_range(-bound..bound));
            }
        }
        Mlp { spec, params }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let params = vec![0.0; spec.param_count()];
        Mlp { spec, params }
    }

    /// Places every weight matrix and bias row on the graph.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Result<Vec<Var>, NdError> {
        let mut vars = Vec::with_capacity(2 * (self.spec.widths.len() - 1));
        let mut off = 0;
        for (i, o) in self.spec.layers() {
            let w = Tensor::new(i, o, self.params[off..off + i * o].to_vec())?;
            off += i * o;
            let b = Tensor::new(1, o, self.params[off..off + o].to_vec())?;
            off += o;
            if trainable {
                vars.push(g.param(w)?);
                vars.push(g.param(b)?);
            } else {
                vars.push(g.constant(w)?);
                vars.push(g.constant(b)?);
            }
        }
        Ok(vars)
    }

    /// Flattens the gradients of bound parameters into this network's layout.
    pub fn collect_grads(&self, grads: &Gradients, vars: &[Var]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.params.len());
        for (k, &v) in vars.iter().enumerate() {
            match grads.wrt(v) {
                Some(t) => out.extend_from_slice(t.data()),
                None => {
                    let (i, o) = self.spec.layers().nth(k / 2).expect("layer");
                    let n = if k % 2 == 0 { i * o } else { o };
                    out.extend(std::iter::repeat_n(0.0, n));
                }
            }
        }
        out
    }

    /// Batched forward pass without recording a graph.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NdError> {
        if input.cols() != self.spec.input_dim() {
            return Err(NdError::Shape(format!(
                "input has {} columns, network expects {}",
                input.cols(),
                self.spec.input_dim()
            )));
        }
        let mut x = input.clone();
        let mut off = 0;
        for (layer, (i, o)) in self.spec.layers().enumerate() {
            let w = Tensor::new(i, o, self.params[off..off + i * o].to_vec())?;
            off += i * o;
            let b = &self.params[off..off + o];
            off += o;
            let mut y = matmul(&x, &w)?;
            let act = self.spec.activation(layer);
            for (k, v) in y.data_mut().iter_mut().enumerate() {
                *v = act.apply(*v + b[k % o]);
            }
            x = y;
        }
        if !x.is_finite() {
            return Err(NdError::NonFinite("mlp forward"));
        }
        Ok(x)
    }

    /// Single-sample forward pass.
    pub fn forward_row(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.spec.input_dim());
        let mut x = input.to_vec();
        let mut off = 0;
        for (layer, (i, o)) in self.spec.layers().enumerate() {
            let w = &self.params[off..off + i * o];
            off += i * o;
            let mut y = self.params[off..off + o].to_vec();
            off += o;
            for (p, &xp) in x.iter().enumerate() {
                for (yj, wj) in y.iter_mut().zip(&w[p * o..(p + 1) * o]) {
                    *yj += xp * wj;
                }
            }
            let act = self.spec.activation(layer);
            for v in &mut y {
                *v = act.apply(*v);
            }
            x = y;
        }
        x
    }

    /// Records the forward pass on `g` using parameters bound by [`Mlp::bind`].
    pub fn forward_graph(&self, g: &mut Graph, vars: &[Var], input: Var) -> Result<Var, NdError> {
        mlp_forward_vars(&self.spec, g, vars, input)
    }
}

pub(crate) fn mlp_forward_vars(spec: &MlpSpec, g: &mut Graph, vars: &[Var], input: Var) -> Result<Var, NdError> {
    if vars.len() != 2 * (spec.widths.len() - 1) {
        return Err(NdError::Shape("parameter bindings do not match the spec".into()));
    }
    let mut x = input;
    for layer in 0..spec.widths.len() - 1 {
        let z = g.matmul(x, vars[2 * layer])?;
        let z = g.add_row(z, vars[2 * layer + 1])?;
        x = spec.activation(layer).apply_graph(g, z)?;
    }
    Ok(x)
}

/// Differentiable forward pass of `spec` with flat `params` on `input`.
///
/// Returns the output variable and the bound parameter variables.
pub fn mlp_forward(spec: &MlpSpec, params: &[f64], g: &mut Graph, input: Var) -> Result<(Var, Vec<Var>), NdError> {
    let net = Mlp::from_params(spec.clone(), params.to_vec())?;
    let vars = net.bind(g, true)?;
    let out = net.forward_graph(g, &vars, input)?;
    Ok((out, vars))
}
