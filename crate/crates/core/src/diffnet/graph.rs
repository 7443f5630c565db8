use rand::Rng;
use rand_distr::StandardNormal;

use super::{axpy, dot, NetError, ParamSet, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

/// One op record of a sequential graph.
///
/// Dense weights are stored `[inputs, outputs]` row-major so the forward
/// pass accumulates whole output rows at a time.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Dense {
        inputs: usize,
        outputs: usize,
        weight: String,
        bias: String,
    },
    Act(Activation),
}

/// A topologically ordered chain of ops from a flat input vector to a flat
/// output vector. Parameters are looked up by name in a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    name: String,
    input_dim: usize,
    nodes: Vec<Node>,
}

/// Activations recorded by a forward pass, consumed by backward.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache<T> {
    rows: usize,
    // values[0] is the input, values[i + 1] the output of node i.
    values: Vec<Vec<T>>,
    params_version: u64,
    ready: bool,
}

impl<T: Real> ForwardCache<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn is_ready(&self) -> bool {
        self.ready
    }

    /// Output of the last node, `rows x output_dim`.
    pub fn output(&self) -> &[T] {
        self.values.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn input(&self) -> &[T] {
        self.values.first().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn clear(&mut self) {
        self.ready = false;
    }
}

impl Graph {
    /// A graph with no ops; its output is its input.
    pub fn identity(name: impl Into<String>, dim: usize) -> Self {
        Self {
            name: name.into(),
            input_dim: dim,
            nodes: Vec::new(),
        }
    }

    /// Dense layers with `activation` after every hidden layer and a linear
    /// output layer. Parameter names are `<name>.l<i>.w` / `<name>.l<i>.b`.
    pub fn mlp(
        name: impl Into<String>,
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
    ) -> Self {
        let name = name.into();
        let mut nodes = Vec::new();
        let mut prev = input_dim;
        for (i, &h) in hidden.iter().enumerate() {
            nodes.push(Node::Dense {
                inputs: prev,
                outputs: h,
                weight: format!("{name}.l{i}.w"),
                bias: format!("{name}.l{i}.b"),
            });
            nodes.push(Node::Act(activation));
            prev = h;
        }
        let i = hidden.len();
        nodes.push(Node::Dense {
            inputs: prev,
            outputs: output_dim,
            weight: format!("{name}.l{i}.w"),
            bias: format!("{name}.l{i}.b"),
        });
        Self {
            name,
            input_dim,
            nodes,
        }
    }

    /// Dense layers each followed by `activation`, including the last one.
    /// Used for encoders whose output feeds further heads.
    pub fn feature_mlp(
        name: impl Into<String>,
        input_dim: usize,
        hidden: &[usize],
        activation: Activation,
    ) -> Self {
        let name = name.into();
        let mut nodes = Vec::new();
        let mut prev = input_dim;
        for (i, &h) in hidden.iter().enumerate() {
            nodes.push(Node::Dense {
                inputs: prev,
                outputs: h,
                weight: format!("{name}.l{i}.w"),
                bias: format!("{name}.l{i}.b"),
            });
            nodes.push(Node::Act(activation));
            prev = h;
        }
        Self {
            name,
            input_dim,
            nodes,
        }
    }

    /// `self` followed by `next`.
    pub fn chain(&self, next: &Graph, name: impl Into<String>) -> Result<Graph, NetError> {
        if self.output_dim() != next.input_dim {
            return Err(NetError::ShapeMismatch {
                node: format!("{} -> {}", self.name, next.name),
                expected: self.output_dim(),
                got: next.input_dim,
            });
        }
        let mut nodes = self.nodes.clone();
        nodes.extend(next.nodes.iter().cloned());
        Ok(Graph {
            name: name.into(),
            input_dim: self.input_dim,
            nodes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.nodes
            .iter()
            .rev()
            .find_map(|n| match n {
                Node::Dense { outputs, .. } => Some(*outputs),
                Node::Act(_) => None,
            })
            .unwrap_or(self.input_dim)
    }

    /// Orthogonal weights scaled by `hidden_gain` (last dense layer:
    /// `output_gain`), zero biases.
    pub fn init_params<T: Real, R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        hidden_gain: f64,
        output_gain: f64,
    ) -> ParamSet<T> {
        let last_dense = self
            .nodes
            .iter()
            .rposition(|n| matches!(n, Node::Dense { .. }));
        let mut params = ParamSet::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Dense {
                inputs,
                outputs,
                weight,
                bias,
            } = node
            {
                let gain = if Some(i) == last_dense {
                    output_gain
                } else {
                    hidden_gain
                };
                let w = orthogonal(rng, *inputs, *outputs, gain);
                params
                    .push(
                        weight.clone(),
                        vec![*inputs, *outputs],
                        w.into_iter().map(T::lit).collect(),
                    )
                    .expect("graph parameter names are unique");
                params
                    .push(bias.clone(), vec![*outputs], vec![T::zero(); *outputs])
                    .expect("graph parameter names are unique");
            }
        }
        params
    }

    fn lookup<'p, T: Real>(
        &self,
        params: &'p ParamSet<T>,
        name: &str,
        expected: usize,
    ) -> Result<&'p [T], NetError> {
        let entry = params
            .get(name)
            .ok_or_else(|| NetError::MissingParam(name.to_string()))?;
        if entry.values.len() != expected {
            return Err(NetError::ShapeMismatch {
                node: name.to_string(),
                expected,
                got: entry.values.len(),
            });
        }
        Ok(&entry.values)
    }

    pub fn forward<T: Real>(
        &self,
        params: &ParamSet<T>,
        input: &[T],
        rows: usize,
    ) -> Result<ForwardCache<T>, NetError> {
        let mut cache = ForwardCache::default();
        self.forward_into(params, input, rows, &mut cache)?;
        Ok(cache)
    }

    /// Forward pass reusing the buffers of `cache`.
    pub fn forward_into<T: Real>(
        &self,
        params: &ParamSet<T>,
        input: &[T],
        rows: usize,
        cache: &mut ForwardCache<T>,
    ) -> Result<(), NetError> {
        cache.ready = false;
        if input.len() != rows * self.input_dim {
            return Err(NetError::ShapeMismatch {
                node: format!("{}: input", self.name),
                expected: rows * self.input_dim,
                got: input.len(),
            });
        }
        cache.values.resize_with(self.nodes.len() + 1, Vec::new);
        cache.values[0].clear();
        cache.values[0].extend_from_slice(input);
        let mut width = self.input_dim;
        for (i, node) in self.nodes.iter().enumerate() {
            let (done, rest) = cache.values.split_at_mut(i + 1);
            let x = &done[i];
            let y = &mut rest[0];
            match node {
                Node::Dense {
                    inputs,
                    outputs,
                    weight,
                    bias,
                } => {
                    if *inputs != width {
                        return Err(NetError::ShapeMismatch {
                            node: format!("{}: node {i} ({weight})", self.name),
                            expected: width,
                            got: *inputs,
                        });
                    }
                    let w = self.lookup(params, weight, inputs * outputs)?;
                    let b = self.lookup(params, bias, *outputs)?;
                    y.clear();
                    y.resize(rows * outputs, T::zero());
                    for r in 0..rows {
                        let xr = &x[r * inputs..(r + 1) * inputs];
                        let yr = &mut y[r * outputs..(r + 1) * outputs];
                        yr.copy_from_slice(b);
                        for (k, &xk) in xr.iter().enumerate() {
                            if xk != T::zero() {
                                axpy(yr, xk, &w[k * outputs..(k + 1) * outputs]);
                            }
                        }
                    }
                    width = *outputs;
                }
                Node::Act(act) => {
                    y.clear();
                    match act {
                        Activation::Relu => {
                            y.extend(x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }))
                        }
                        Activation::Tanh => y.extend(x.iter().map(|&v| v.tanh())),
                    }
                }
            }
        }
        cache.rows = rows;
        cache.params_version = params.version();
        cache.ready = true;
        Ok(())
    }

    /// Reverse pass.
    ///
    /// Accumulates parameter gradients into `grads` (which must carry this
    /// graph's parameter names) and returns the gradient with respect to the
    /// input, or an empty vector when `need_input_grad` is false.
    pub fn backward<T: Real>(
        &self,
        params: &ParamSet<T>,
        cache: &ForwardCache<T>,
        upstream: &[T],
        grads: &mut ParamSet<T>,
        need_input_grad: bool,
    ) -> Result<Vec<T>, NetError> {
        if !cache.ready || cache.values.len() != self.nodes.len() + 1 {
            return Err(NetError::NoForwardCache);
        }
        if cache.params_version != params.version() {
            return Err(NetError::StaleCache);
        }
        let rows = cache.rows;
        if upstream.len() != rows * self.output_dim() {
            return Err(NetError::ShapeMismatch {
                node: format!("{}: upstream gradient", self.name),
                expected: rows * self.output_dim(),
                got: upstream.len(),
            });
        }
        let mut grad = upstream.to_vec();
        for (i, node) in self.nodes.iter().enumerate().rev() {
            let x = &cache.values[i];
            let y = &cache.values[i + 1];
            let first = i == 0;
            match node {
                Node::Dense {
                    inputs,
                    outputs,
                    weight,
                    bias,
                } => {
                    let w = self.lookup(params, weight, inputs * outputs)?;
                    let wi = grads
                        .index_of(weight)
                        .ok_or_else(|| NetError::MissingParam(weight.clone()))?;
                    let bi = grads
                        .index_of(bias)
                        .ok_or_else(|| NetError::MissingParam(bias.clone()))?;
                    {
                        let gb = grads.values_at_mut(bi);
                        for r in 0..rows {
                            for (acc, &g) in gb.iter_mut().zip(&grad[r * outputs..(r + 1) * outputs])
                            {
                                *acc += g;
                            }
                        }
                    }
                    {
                        let gw = grads.values_at_mut(wi);
                        if gw.len() != inputs * outputs {
                            return Err(NetError::ShapeMismatch {
                                node: weight.clone(),
                                expected: inputs * outputs,
                                got: gw.len(),
                            });
                        }
                        for r in 0..rows {
                            let xr = &x[r * inputs..(r + 1) * inputs];
                            let gr = &grad[r * outputs..(r + 1) * outputs];
                            for (k, &xk) in xr.iter().enumerate() {
                                if xk != T::zero() {
                                    axpy(&mut gw[k * outputs..(k + 1) * outputs], xk, gr);
                                }
                            }
                        }
                    }
                    if first && !need_input_grad {
                        return Ok(Vec::new());
                    }
                    let mut gx = vec![T::zero(); rows * inputs];
                    for r in 0..rows {
                        let gr = &grad[r * outputs..(r + 1) * outputs];
                        let gxr = &mut gx[r * inputs..(r + 1) * inputs];
                        for (k, slot) in gxr.iter_mut().enumerate() {
                            *slot = dot(&w[k * outputs..(k + 1) * outputs], gr);
                        }
                    }
                    grad = gx;
                }
                Node::Act(act) => {
                    match act {
                        Activation::Relu => {
                            for (g, &yv) in grad.iter_mut().zip(y) {
                                if yv <= T::zero() {
                                    *g = T::zero();
                                }
                            }
                        }
                        Activation::Tanh => {
                            for (g, &yv) in grad.iter_mut().zip(y) {
                                *g *= T::one() - yv * yv;
                            }
                        }
                    }
                    let _ = x;
                }
            }
        }
        Ok(if need_input_grad { grad } else { Vec::new() })
    }
}

/// `inputs x outputs` matrix (row-major) with orthonormal rows or columns.
fn orthogonal<R: Rng + ?Sized>(rng: &mut R, inputs: usize, outputs: usize, gain: f64) -> Vec<f64> {
    // Orthonormalize the columns of a tall Gaussian matrix.
    let (tall, short) = if inputs >= outputs {
        (inputs, outputs)
    } else {
        (outputs, inputs)
    };
    let mut cols: Vec<Vec<f64>> = (0..short)
        .map(|_| (0..tall).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for j in 0..short {
        for p in 0..j {
            let proj: f64 = cols[j].iter().zip(&cols[p]).map(|(a, b)| a * b).sum();
            let (head, tail) = cols.split_at_mut(j);
            for (v, q) in tail[0].iter_mut().zip(&head[p]) {
                *v -= proj * q;
            }
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in &mut cols[j] {
            *v /= norm;
        }
    }
    let mut w = vec![0.0; inputs * outputs];
    for k in 0..inputs {
        for j in 0..outputs {
            w[k * outputs + j] = gain
                * if inputs >= outputs {
                    cols[j][k]
                } else {
                    cols[k][j]
                };
        }
    }
    w
}
