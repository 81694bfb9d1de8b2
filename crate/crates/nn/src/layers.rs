//! Trainable layers.
//!
//! Each layer stores its parameters as plain tensors. To differentiate, a
//! layer is *bound* to a tape: its parameters become leaves once, and the
//! bound handle can then be applied any number of times (every LSTM time
//! step reuses the same leaves, so their gradients accumulate). Bound
//! handles report their leaves via `vars()` in the same order as
//! [`Params::params`], which is what the optimizer consumes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kernels::gemm_nn;
use crate::{Gradients, NnError, Result, Scalar, Tape, Tensor, Var};

/// Ordered, named access to a network's parameters.
pub trait Params<F: Scalar> {
    fn named_params(&self) -> Vec<(String, &Tensor<F>)>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<F>>;

    fn params(&self) -> Vec<&Tensor<F>> {
        self.named_params().into_iter().map(|(_, t)| t).collect()
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Copies (and converts) every tensor from a network of identical layout.
    fn copy_from<G: Scalar, P: Params<G>>(&mut self, other: &P) -> Result<()>
    where
        Self: Sized,
    {
        let src = other.params();
        let mut dst = self.params_mut();
        if src.len() != dst.len() {
            return Err(NnError::ShapeMismatch {
                op: "Params::copy_from",
                expected: vec![dst.len()],
                actual: vec![src.len()],
            });
        }
        for (d, s) in dst.iter_mut().zip(src) {
            if d.shape() != s.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "Params::copy_from",
                    expected: d.shape().to_vec(),
                    actual: s.shape().to_vec(),
                });
            }
            **d = s.cast();
        }
        Ok(())
    }
}

fn prefixed<'a, F: Scalar>(
    prefix: &str,
    inner: Vec<(String, &'a Tensor<F>)>,
) -> Vec<(String, &'a Tensor<F>)> {
    inner
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}

/// Collects gradients for `vars`, zero-filling any that received none.
pub fn collect_grads<F: Scalar>(
    grads: &mut Gradients<F>,
    vars: &[Var],
    params: &[&Tensor<F>],
) -> Vec<Tensor<F>> {
    vars.iter()
        .zip(params)
        .map(|(&v, p)| grads.take_or_zeros(v, p))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<F: Scalar>(self, tape: &mut Tape<F>, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }

    fn eval<F: Scalar>(self, x: F) -> F {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(F::zero()),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => F::one() / (F::one() + (-x).exp()),
        }
    }
}

/// Fully connected layer `y = x W + b` with `W: in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<F = f32> {
    pub weight: Tensor<F>,
    pub bias: Tensor<F>,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Var,
    in_features: usize,
}

impl<F: Scalar> Linear<F> {
    /// Uniform init in `±1/sqrt(fan_in)` for weights and bias.
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_features as f64).sqrt();
        Self {
            weight: Tensor::uniform(&[in_features, out_features], bound, rng),
            bias: Tensor::uniform(&[out_features], bound, rng),
        }
    }

    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[in_features, out_features]),
            bias: Tensor::zeros(&[out_features]),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape<F>) -> BoundLinear {
        BoundLinear {
            weight: tape.param(&self.weight),
            bias: tape.param(&self.bias),
            in_features: self.in_features(),
        }
    }

    /// Tape-free forward for inference.
    pub fn apply(&self, input: &Tensor<F>) -> Tensor<F> {
        let (m, k, n) = (input.rows(), self.in_features(), self.out_features());
        debug_assert_eq!(input.cols(), k);
        let mut out = Vec::with_capacity(m * n);
        for _ in 0..m {
            out.extend_from_slice(self.bias.data());
        }
        gemm_nn(m, k, n, input.data(), self.weight.data(), &mut out);
        Tensor::from_vec(&[m, n], out).expect("linear output shape")
    }
}

impl<F: Scalar> Params<F> for Linear<F> {
    fn named_params(&self) -> Vec<(String, &Tensor<F>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

impl BoundLinear {
    pub fn forward<F: Scalar>(&self, tape: &mut Tape<F>, x: Var) -> Var {
        debug_assert_eq!(tape.value(x).cols(), self.in_features);
        let xw = tape.matmul(x, self.weight);
        tape.add_row(xw, self.bias)
    }

    pub fn vars(&self) -> Vec<Var> {
        vec![self.weight, self.bias]
    }
}

/// Layer widths and activations of an [`Mlp`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input width, hidden widths..., output width.
    pub sizes: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl MlpSpec {
    /// Two hidden layers of 128 ReLU units.
    pub fn two_hidden(input: usize, output: usize, out_act: Activation) -> Self {
        Self {
            sizes: vec![input, 128, 128, output],
            hidden: Activation::Relu,
            output: out_act,
        }
    }

    pub fn input(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().expect("mlp has at least one layer")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<F = f32> {
    pub spec: MlpSpec,
    pub layers: Vec<Linear<F>>,
}

#[derive(Clone, Debug)]
pub struct BoundMlp {
    layers: Vec<BoundLinear>,
    hidden: Activation,
    output: Activation,
}

impl<F: Scalar> Mlp<F> {
    pub fn new<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Self {
        let layers = spec
            .sizes
            .windows(2)
            .map(|w| Linear::new(w[0], w[1], rng))
            .collect();
        Self {
            spec: spec.clone(),
            layers,
        }
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .sizes
            .windows(2)
            .map(|w| Linear::zeros(w[0], w[1]))
            .collect();
        Self {
            spec: spec.clone(),
            layers,
        }
    }

    pub fn bind(&self, tape: &mut Tape<F>) -> BoundMlp {
        BoundMlp {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
            hidden: self.spec.hidden,
            output: self.spec.output,
        }
    }

    /// Tape-free batched forward.
    pub fn infer(&self, input: &Tensor<F>) -> Result<Tensor<F>> {
        check_width("Mlp::infer", self.spec.input(), input)?;
        let last = self.layers.len() - 1;
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let act = if i == last {
                self.spec.output
            } else {
                self.spec.hidden
            };
            x = layer.apply(&x);
            x.data_mut().iter_mut().for_each(|v| *v = act.eval(*v));
        }
        Ok(x)
    }
}

fn check_width<F: Scalar>(op: &'static str, expected: usize, x: &Tensor<F>) -> Result<()> {
    if x.cols() != expected {
        return Err(NnError::ShapeMismatch {
            op,
            expected: vec![expected],
            actual: vec![x.cols()],
        });
    }
    Ok(())
}

impl<F: Scalar> Params<F> for Mlp<F> {
    fn named_params(&self) -> Vec<(String, &Tensor<F>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| prefixed(&format!("layers.{i}"), l.named_params()))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

impl BoundMlp {
    pub fn forward<F: Scalar>(&self, tape: &mut Tape<F>, x: Var) -> Result<Var> {
        let expected = self.layers[0].in_features;
        check_width("Mlp::forward", expected, tape.value(x))?;
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h);
            let act = if i == last { self.output } else { self.hidden };
            h = act.apply(tape, h);
        }
        Ok(h)
    }

    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|l| l.vars()).collect()
    }
}

/// Single-direction LSTM with gate order (input, forget, cell, output).
#[derive(Clone, Debug, PartialEq)]
pub struct Lstm<F = f32> {
    pub w_ih: Tensor<F>,
    pub w_hh: Tensor<F>,
    pub bias: Tensor<F>,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLstm {
    w_ih: Var,
    w_hh: Var,
    bias: Var,
    hidden: usize,
}

impl<F: Scalar> Lstm<F> {
    /// Uniform `±1/sqrt(fan_in)` init; forget-gate bias starts at 1.
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut bias = Tensor::uniform(&[4 * hidden], 1.0 / (hidden as f64).sqrt(), rng);
        bias.data_mut()[hidden..2 * hidden].fill(F::one());
        Self {
            w_ih: Tensor::uniform(&[input, 4 * hidden], 1.0 / (input as f64).sqrt(), rng),
            w_hh: Tensor::uniform(&[hidden, 4 * hidden], 1.0 / (hidden as f64).sqrt(), rng),
            bias,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_ih: Tensor::zeros(&[input, 4 * hidden]),
            w_hh: Tensor::zeros(&[hidden, 4 * hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_ih.shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.shape()[0]
    }

    pub fn bind(&self, tape: &mut Tape<F>) -> BoundLstm {
        BoundLstm {
            w_ih: tape.param(&self.w_ih),
            w_hh: tape.param(&self.w_hh),
            bias: tape.param(&self.bias),
            hidden: self.hidden_size(),
        }
    }
}

impl<F: Scalar> Params<F> for Lstm<F> {
    fn named_params(&self) -> Vec<(String, &Tensor<F>)> {
        vec![
            ("w_ih".into(), &self.w_ih),
            ("w_hh".into(), &self.w_hh),
            ("bias".into(), &self.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }
}

impl BoundLstm {
    pub fn vars(&self) -> Vec<Var> {
        vec![self.w_ih, self.w_hh, self.bias]
    }

    /// Runs the cell over `order` (time indices into `xw`, which holds the
    /// precomputed `x W_ih + b` for every step). Returns the hidden state
    /// after each visited position, indexed by position.
    fn run<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        xw: Var,
        batch: usize,
        order: impl Iterator<Item = usize>,
        masks: &[Option<Var>],
        lengths: &[usize],
    ) -> (Vec<Option<Var>>, Var) {
        let hdim = self.hidden;
        let zeros = Tensor::zeros(&[batch, hdim]);
        let mut h = tape.constant(zeros.clone());
        let mut c = tape.constant(zeros);
        let mut outputs = vec![None; masks.len()];
        for t in order {
            if lengths.iter().all(|&len| t >= len) {
                continue;
            }
            let x_t = tape.slice_rows(xw, t * batch, batch);
            let hh = tape.matmul(h, self.w_hh);
            let z = tape.add(x_t, hh);
            let zi = tape.slice_cols(z, 0, hdim);
            let zf = tape.slice_cols(z, hdim, hdim);
            let zg = tape.slice_cols(z, 2 * hdim, hdim);
            let zo = tape.slice_cols(z, 3 * hdim, hdim);
            let i = tape.sigmoid(zi);
            let f = tape.sigmoid(zf);
            let g = tape.tanh(zg);
            let o = tape.sigmoid(zo);
            let fc = tape.mul(f, c);
            let ig = tape.mul(i, g);
            let c_new = tape.add(fc, ig);
            let tc = tape.tanh(c_new);
            let h_new = tape.mul(o, tc);
            match masks[t] {
                None => {
                    h = h_new;
                    c = c_new;
                    outputs[t] = Some(h);
                }
                Some(m) => {
                    // Padded rows keep their previous state.
                    let dh = tape.sub(h_new, h);
                    let dh = tape.scale_rows(dh, m);
                    h = tape.add(h, dh);
                    let dc = tape.sub(c_new, c);
                    let dc = tape.scale_rows(dc, m);
                    c = tape.add(c, dc);
                    outputs[t] = Some(tape.scale_rows(h, m));
                }
            }
        }
        (outputs, h)
    }
}

/// One bidirectional LSTM layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstm<F = f32> {
    pub forward: Lstm<F>,
    pub backward: Lstm<F>,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundBiLstm {
    forward: BoundLstm,
    backward: BoundLstm,
}

/// Output of a bidirectional pass.
#[derive(Clone, Debug)]
pub struct BiLstmOutput {
    /// Forward hidden state at each position (`batch x H`, zero at padding).
    pub forward_states: Vec<Var>,
    /// Backward hidden state at each position.
    pub backward_states: Vec<Var>,
    /// `[last valid forward state, first-position backward state]`, `batch x 2H`.
    pub summary: Var,
}

impl<F: Scalar> BiLstm<F> {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            forward: Lstm::new(input, hidden, rng),
            backward: Lstm::new(input, hidden, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            forward: Lstm::zeros(input, hidden),
            backward: Lstm::zeros(input, hidden),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.forward.hidden_size()
    }

    pub fn input_size(&self) -> usize {
        self.forward.input_size()
    }

    pub fn bind(&self, tape: &mut Tape<F>) -> BoundBiLstm {
        BoundBiLstm {
            forward: self.forward.bind(tape),
            backward: self.backward.bind(tape),
        }
    }
}

impl<F: Scalar> Params<F> for BiLstm<F> {
    fn named_params(&self) -> Vec<(String, &Tensor<F>)> {
        let mut out = prefixed("forward", self.forward.named_params());
        out.extend(prefixed("backward", self.backward.named_params()));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut out = self.forward.params_mut();
        out.extend(self.backward.params_mut());
        out
    }
}

impl BoundBiLstm {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.forward.vars();
        v.extend(self.backward.vars());
        v
    }

    /// `sequence` is time-major: rows `t*batch .. (t+1)*batch` hold step `t`.
    /// Row `b` is valid for positions `0..lengths[b]`; later positions are
    /// padding and never reach the summary.
    pub fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        sequence: Var,
        batch: usize,
        lengths: &[usize],
    ) -> Result<BiLstmOutput> {
        let rows = tape.value(sequence).rows();
        if batch == 0 || rows == 0 {
            return Err(NnError::EmptySequence("BiLstm::forward"));
        }
        if rows % batch != 0 || lengths.len() != batch {
            return Err(NnError::ShapeMismatch {
                op: "BiLstm::forward",
                expected: vec![batch, lengths.len()],
                actual: vec![rows],
            });
        }
        let steps = rows / batch;
        if lengths.iter().any(|&l| l == 0) {
            return Err(NnError::EmptySequence("BiLstm::forward"));
        }
        if let Some(&l) = lengths.iter().find(|&&l| l > steps) {
            return Err(NnError::ShapeMismatch {
                op: "BiLstm::forward",
                expected: vec![steps],
                actual: vec![l],
            });
        }

        let masks: Vec<Option<Var>> = (0..steps)
            .map(|t| {
                if lengths.iter().all(|&l| t < l) {
                    None
                } else {
                    let m = lengths
                        .iter()
                        .map(|&l| if t < l { F::one() } else { F::zero() })
                        .collect();
                    Some(tape.constant(Tensor::from_vec(&[batch, 1], m).expect("mask")))
                }
            })
            .collect();

        let xw_f = tape.matmul(sequence, self.forward.w_ih);
        let xw_f = tape.add_row(xw_f, self.forward.bias);
        let xw_b = tape.matmul(sequence, self.backward.w_ih);
        let xw_b = tape.add_row(xw_b, self.backward.bias);

        let (fwd, h_fwd) = self
            .forward
            .run(tape, xw_f, batch, 0..steps, &masks, lengths);
        let (bwd, h_bwd) = self
            .backward
            .run(tape, xw_b, batch, (0..steps).rev(), &masks, lengths);

        let hdim = self.forward.hidden;
        let mut fill = |states: Vec<Option<Var>>| -> Vec<Var> {
            states
                .into_iter()
                .map(|s| s.unwrap_or_else(|| tape.constant(Tensor::zeros(&[batch, hdim]))))
                .collect()
        };
        let forward_states = fill(fwd);
        let backward_states = fill(bwd);
        let summary = tape.concat_cols(&[h_fwd, h_bwd]);
        Ok(BiLstmOutput {
            forward_states,
            backward_states,
            summary,
        })
    }
}
