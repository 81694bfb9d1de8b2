//! Bidirectional-LSTM mixture density network.
//!
//! A history window runs through a BiLSTM; its summary feeds a shared
//! fully connected layer and three heads (weights, means, deviations), each
//! with one hidden layer. Outputs live in normalized workspace coordinates.

use pposg_nn::{
    collect_grads, Activation, Adam, AdamConfig, BiLstm, BoundBiLstm, BoundLinear, Linear, Params,
    Scalar, Tape, Tensor, Var,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::history::{pack_windows, HistoryWindow};
use super::mixture::{GaussianMixture, SIGMA_FLOOR};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiMdnSpec {
    pub input: usize,
    pub hidden: usize,
    pub trunk: usize,
    pub head_hidden: usize,
    pub components: usize,
}

impl BiMdnSpec {
    /// H = 128, 32-unit trunk and heads, three components.
    pub fn standard(input: usize) -> Self {
        Self {
            input,
            hidden: 128,
            trunk: 32,
            head_hidden: 32,
            components: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiMdn<F = f32> {
    pub spec: BiMdnSpec,
    lstm: BiLstm<F>,
    trunk: Linear<F>,
    heads: [(Linear<F>, Linear<F>); 3],
}

const HEAD_NAMES: [&str; 3] = ["pi", "mu", "sigma"];

pub struct BoundBiMdn {
    lstm: BoundBiLstm,
    trunk: BoundLinear,
    heads: [(BoundLinear, BoundLinear); 3],
    components: usize,
}

/// Head outputs for a batch: weight logits `B x K`, means `B x 2K` and
/// deviations `B x 2K` (after ELU + 1), component `k` in columns `2k, 2k+1`.
#[derive(Clone, Copy, Debug)]
pub struct MdnHeads {
    pub logits: Var,
    pub means: Var,
    pub stds: Var,
}

impl<F: Scalar> BiMdn<F> {
    pub fn new<R: Rng + ?Sized>(spec: BiMdnSpec, rng: &mut R) -> Self {
        let k = spec.components;
        let outs = [k, 2 * k, 2 * k];
        Self {
            spec,
            lstm: BiLstm::new(spec.input, spec.hidden, rng),
            trunk: Linear::new(2 * spec.hidden, spec.trunk, rng),
            heads: outs.map(|o| {
                (
                    Linear::new(spec.trunk, spec.head_hidden, rng),
                    Linear::new(spec.head_hidden, o, rng),
                )
            }),
        }
    }

    pub fn zeros(spec: BiMdnSpec) -> Self {
        let k = spec.components;
        let outs = [k, 2 * k, 2 * k];
        Self {
            spec,
            lstm: BiLstm::zeros(spec.input, spec.hidden),
            trunk: Linear::zeros(2 * spec.hidden, spec.trunk),
            heads: outs.map(|o| {
                (
                    Linear::zeros(spec.trunk, spec.head_hidden),
                    Linear::zeros(spec.head_hidden, o),
                )
            }),
        }
    }

    pub fn bind(&self, tape: &mut Tape<F>) -> BoundBiMdn {
        BoundBiMdn {
            lstm: self.lstm.bind(tape),
            trunk: self.trunk.bind(tape),
            heads: [0, 1, 2].map(|i| (self.heads[i].0.bind(tape), self.heads[i].1.bind(tape))),
            components: self.spec.components,
        }
    }

    /// Normalized-coordinate mixtures for a batch of windows, no gradients.
    pub fn infer(&self, windows: &[&HistoryWindow]) -> Result<Vec<GaussianMixture>> {
        let mut tape = Tape::<F>::new();
        let net = self.bind(&mut tape);
        let (seq, lengths) = pack_windows::<F>(windows)?;
        let seq = tape.constant(seq);
        let heads = net.forward(&mut tape, seq, windows.len(), &lengths)?;
        let k = self.spec.components;
        let logits = tape.value(heads.logits);
        let means = tape.value(heads.means);
        let stds = tape.value(heads.stds);
        let mut out = Vec::with_capacity(windows.len());
        for b in 0..windows.len() {
            let row: Vec<f64> = logits.row(b).iter().map(|x| x.as_f64()).collect();
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = e.iter().sum();
            let pair =
                |t: &Tensor<F>, c: usize| [t.row(b)[2 * c].as_f64(), t.row(b)[2 * c + 1].as_f64()];
            let mix = GaussianMixture {
                weights: e.iter().map(|x| x / z).collect(),
                means: (0..k).map(|c| pair(means, c)).collect(),
                stds: (0..k)
                    .map(|c| pair(stds, c).map(|s| s.max(SIGMA_FLOOR)))
                    .collect(),
            };
            if mix.means.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("BiMDN output".into()));
            }
            out.push(mix);
        }
        Ok(out)
    }
}

impl<F: Scalar> Params<F> for BiMdn<F> {
    fn named_params(&self) -> Vec<(String, &Tensor<F>)> {
        let mut v: Vec<(String, &Tensor<F>)> = self
            .lstm
            .named_params()
            .into_iter()
            .map(|(n, t)| (format!("lstm.{n}"), t))
            .collect();
        for (n, t) in self.trunk.named_params() {
            v.push((format!("trunk.{n}"), t));
        }
        for (name, (h, o)) in HEAD_NAMES.iter().zip(&self.heads) {
            for (n, t) in h.named_params() {
                v.push((format!("{name}.hidden.{n}"), t));
            }
            for (n, t) in o.named_params() {
                v.push((format!("{name}.out.{n}"), t));
            }
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        let mut v = self.lstm.params_mut();
        v.extend(self.trunk.params_mut());
        for (h, o) in &mut self.heads {
            v.extend(h.params_mut());
            v.extend(o.params_mut());
        }
        v
    }
}

impl BoundBiMdn {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = self.lstm.vars();
        v.extend(self.trunk.vars());
        for (h, o) in &self.heads {
            v.extend(h.vars());
            v.extend(o.vars());
        }
        v
    }

    pub fn forward<F: Scalar>(
        &self,
        tape: &mut Tape<F>,
        sequence: Var,
        batch: usize,
        lengths: &[usize],
    ) -> Result<MdnHeads> {
        let summary = self.lstm.forward(tape, sequence, batch, lengths)?.summary;
        let trunk = self.trunk.forward(tape, summary);
        let trunk = Activation::Relu.apply(tape, trunk);
        let mut outs = self.heads.iter().map(|(h, o)| {
            let x = h.forward(tape, trunk);
            let x = tape.relu(x);
            o.forward(tape, x)
        });
        let logits = outs.next().expect("pi head");
        let means = outs.next().expect("mu head");
        let raw = outs.next().expect("sigma head");
        let stds = tape.elu(raw);
        let stds = tape.add_scalar(stds, F::one());
        Ok(MdnHeads {
            logits,
            means,
            stds,
        })
    }

    pub fn components(&self) -> usize {
        self.components
    }
}

/// Mean mixture NLL of `targets` (`B x 2`) under `heads`, built on the tape.
pub fn mixture_nll_tape<F: Scalar>(
    tape: &mut Tape<F>,
    heads: &MdnHeads,
    targets: &Tensor<F>,
    components: usize,
) -> Var {
    let b = targets.rows();
    let k = components;
    let mut tiled = Vec::with_capacity(b * 2 * k);
    for i in 0..b {
        for _ in 0..k {
            tiled.extend_from_slice(targets.row(i));
        }
    }
    let tgt = tape.constant(Tensor::from_vec(&[b, 2 * k], tiled).expect("tiled targets"));
    let log_pi = tape.log_softmax_rows(heads.logits);
    let sigma = tape.clamp_min(heads.stds, F::lit(SIGMA_FLOOR));
    let log_sigma = tape.ln(sigma);
    let neg_log_sigma = tape.neg(log_sigma);
    let inv_sigma = tape.exp(neg_log_sigma);
    let diff = tape.sub(heads.means, tgt);
    let z = tape.mul(diff, inv_sigma);
    let z2 = tape.square(z);
    let half_z2 = tape.scale(z2, F::lit(-0.5));
    let per_axis = tape.sub(half_z2, log_sigma);
    let per_comp: Vec<Var> = (0..k)
        .map(|c| {
            let s = tape.slice_cols(per_axis, 2 * c, 2);
            tape.sum_rows(s)
        })
        .collect();
    let comp = tape.concat_cols(&per_comp);
    let joint = tape.add(comp, log_pi);
    let joint = tape.add_scalar(joint, F::lit(-(2.0 * std::f64::consts::PI).ln()));
    let ll = tape.log_sum_exp_rows(joint);
    let mean_ll = tape.mean_all(ll);
    tape.neg(mean_ll)
}

/// BiMDN plus its Adam state, trained on (window, target) pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct BiMdnTrainer {
    pub net: BiMdn<f32>,
    pub opt: Adam<f32>,
}

impl BiMdnTrainer {
    pub fn new(net: BiMdn<f32>, lr: f64) -> Self {
        let opt = Adam::new(AdamConfig::with_lr(lr), &net);
        Self { net, opt }
    }

    fn build(
        &self,
        tape: &mut Tape<f32>,
        windows: &[&HistoryWindow],
        targets: &[[f32; 2]],
    ) -> Result<(BoundBiMdn, Var)> {
        if windows.len() != targets.len() || windows.is_empty() {
            return Err(Error::Contract(format!(
                "{} windows vs {} targets",
                windows.len(),
                targets.len()
            )));
        }
        let bound = self.net.bind(tape);
        let (seq, lengths) = pack_windows::<f32>(windows)?;
        let seq = tape.constant(seq);
        let heads = bound.forward(tape, seq, windows.len(), &lengths)?;
        let flat: Vec<f32> = targets.iter().flatten().copied().collect();
        let t = Tensor::from_vec(&[targets.len(), 2], flat)?;
        let loss = mixture_nll_tape(tape, &heads, &t, self.net.spec.components);
        Ok((bound, loss))
    }

    /// Mean NLL without updating.
    pub fn loss(&self, windows: &[&HistoryWindow], targets: &[[f32; 2]]) -> Result<f64> {
        let mut tape = Tape::new();
        let (_, loss) = self.build(&mut tape, windows, targets)?;
        Ok(tape.value(loss).item() as f64)
    }

    /// One Adam step on the batch; returns the pre-step mean NLL.
    pub fn step(&mut self, windows: &[&HistoryWindow], targets: &[[f32; 2]]) -> Result<f64> {
        let mut tape = Tape::new();
        let (bound, loss) = self.build(&mut tape, windows, targets)?;
        let value = tape.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("BiMDN loss is {value}")));
        }
        let mut grads = tape.backward(loss);
        let grads = collect_grads(&mut grads, &bound.vars(), &self.net.params());
        self.opt.step(&mut self.net, &grads)?;
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn window(len: usize, width: usize, fill: f32) -> HistoryWindow {
        HistoryWindow {
            data: vec![fill; len * width],
            len,
            width,
        }
    }

    #[test]
    fn zero_net_gives_uniform_unit_mixture() {
        let net: BiMdn = BiMdn::zeros(BiMdnSpec::standard(11));
        let w = window(5, 11, 0.3);
        let m = &net.infer(&[&w]).unwrap()[0];
        assert_eq!(m.components(), 3);
        for c in 0..3 {
            assert!((m.weights[c] - 1.0 / 3.0).abs() < 1e-7);
            assert_eq!(m.means[c], [0.0, 0.0]);
            assert_eq!(m.stds[c], [1.0, 1.0]);
        }
    }

    #[test]
    fn tape_nll_matches_closed_form() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let spec = BiMdnSpec {
            input: 3,
            hidden: 4,
            trunk: 5,
            head_hidden: 6,
            components: 3,
        };
        let net: BiMdn<f64> = BiMdn::new(spec, &mut rng);
        let ws = [window(4, 3, 0.2), window(2, 3, -0.5)];
        let refs: Vec<&HistoryWindow> = ws.iter().collect();
        let mixes = net.infer(&refs).unwrap();
        let targets = [[0.1, -0.3], [0.7, 0.2]];
        let expect = (mixes[0].nll(targets[0]) + mixes[1].nll(targets[1])) / 2.0;

        let mut tape = Tape::<f64>::new();
        let bound = net.bind(&mut tape);
        let (seq, lens) = pack_windows::<f64>(&refs).unwrap();
        let seq = tape.constant(seq);
        let heads = bound.forward(&mut tape, seq, 2, &lens).unwrap();
        let t = Tensor::from_rows(&[&targets[0], &targets[1]]).unwrap();
        let loss = mixture_nll_tape(&mut tape, &heads, &t, 3);
        assert!((tape.value(loss).item() - expect).abs() < 1e-10);
    }
}
