use pposg_nn::{
    collect_grads, soft_update, Activation, Adam, AdamConfig, Mlp, MlpSpec, Params, Tape, Tensor,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::replay::{Batch, BeliefBuffer};
use crate::belief::BiMdnTrainer;
use crate::{Error, Result};

/// One agent's actor, centralized critic, their targets and optimizers.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentNets {
    pub actor: Mlp<f32>,
    pub critic: Mlp<f32>,
    pub target_actor: Mlp<f32>,
    pub target_critic: Mlp<f32>,
    pub actor_opt: Adam<f32>,
    pub critic_opt: Adam<f32>,
}

impl AgentNets {
    /// Targets start as exact copies of the online networks.
    pub fn new(actor: Mlp<f32>, critic: Mlp<f32>, lr: f64) -> Self {
        Self {
            actor_opt: Adam::new(AdamConfig::with_lr(lr), &actor),
            critic_opt: Adam::new(AdamConfig::with_lr(lr), &critic),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
        }
    }

    pub fn init<R: Rng + ?Sized>(actor: &MlpSpec, critic: &MlpSpec, lr: f64, rng: &mut R) -> Self {
        let a = Mlp::new(actor, rng);
        let c = Mlp::new(critic, rng);
        Self::new(a, c, lr)
    }
}

/// Critic layout for two agents with the given actor input widths.
pub fn critic_spec(input_widths: [usize; 2], action_width: usize) -> MlpSpec {
    MlpSpec::two_hidden(
        input_widths[0] + input_widths[1] + 2 * action_width,
        1,
        Activation::Identity,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateParams {
    pub gamma: f64,
    pub tau: f64,
    pub reward_scale: f64,
}

/// Losses before the step, per agent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateLosses {
    pub critic: [f64; 2],
    pub actor: [f64; 2],
}

impl UpdateLosses {
    pub fn is_finite(&self) -> bool {
        self.critic.iter().chain(&self.actor).all(|x| x.is_finite())
    }
}

fn concat_cols(parts: &[&Tensor<f32>]) -> Result<Tensor<f32>> {
    let rows = parts[0].rows();
    let width: usize = parts.iter().map(|p| p.cols()).sum();
    let mut out = Vec::with_capacity(rows * width);
    for r in 0..rows {
        for p in parts {
            out.extend_from_slice(p.row(r));
        }
    }
    Ok(Tensor::from_vec(&[rows, width], out)?)
}

fn check_layout(batch: &Batch, agents: &[AgentNets; 2]) -> Result<()> {
    let n = batch.len();
    let mut critic_in = 0;
    for (i, a) in agents.iter().enumerate() {
        let (w, aw) = (a.actor.spec.input(), a.actor.spec.output_width());
        let ok = batch.inputs[i].cols() == w
            && batch.next_inputs[i].cols() == w
            && batch.actions[i].cols() == aw
            && [
                &batch.inputs[i],
                &batch.next_inputs[i],
                &batch.actions[i],
                &batch.rewards[i],
            ]
            .iter()
            .all(|t| t.rows() == n);
        if !ok {
            return Err(Error::Contract(format!(
                "batch widths {}/{}/{} do not match agent {i} (input {w}, action {aw})",
                batch.inputs[i].cols(),
                batch.next_inputs[i].cols(),
                batch.actions[i].cols()
            )));
        }
        critic_in += w + aw;
    }
    for (i, a) in agents.iter().enumerate() {
        if a.critic.spec.input() != critic_in || a.critic.spec.output_width() != 1 {
            return Err(Error::Contract(format!(
                "critic {i} expects {} inputs, batch gives {critic_in}",
                a.critic.spec.input()
            )));
        }
    }
    Ok(())
}

fn check_finite(batch: &Batch, agents: &[AgentNets; 2]) -> Result<()> {
    let tensors = [
        &batch.inputs,
        &batch.next_inputs,
        &batch.actions,
        &batch.rewards,
    ];
    if !tensors
        .iter()
        .flat_map(|t| t.iter())
        .chain([&batch.terminal])
        .all(|t| t.is_finite())
    {
        return Err(Error::Numeric(
            "non-finite values in the replay batch".into(),
        ));
    }
    for (i, a) in agents.iter().enumerate() {
        for (name, net) in [
            ("actor", &a.actor),
            ("critic", &a.critic),
            ("target actor", &a.target_actor),
            ("target critic", &a.target_critic),
        ] {
            if !net.params().iter().all(|t| t.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite parameters in agent {i} {name}"
                )));
            }
        }
    }
    Ok(())
}

/// One MADDPG step for both agents on a shared minibatch.
///
/// Critic `i` regresses onto `y = s r_i + gamma (1 - terminal) Q'_i(x', mu'(x'))`;
/// actor `i` then ascends `Q_i` with its own action replaced by the actor
/// output and the other agent's stored action kept. Targets are soft
/// updated after both agents have stepped.
pub fn maddpg_update(
    batch: &Batch,
    agents: &mut [AgentNets; 2],
    hp: &UpdateParams,
) -> Result<UpdateLosses> {
    check_layout(batch, agents)?;
    check_finite(batch, agents)?;
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let n = batch.len();
    let next_actions = [
        agents[0].target_actor.infer(&batch.next_inputs[0])?,
        agents[1].target_actor.infer(&batch.next_inputs[1])?,
    ];
    let next_joint = concat_cols(&[
        &batch.next_inputs[0],
        &batch.next_inputs[1],
        &next_actions[0],
        &next_actions[1],
    ])?;
    let joint = concat_cols(&[
        &batch.inputs[0],
        &batch.inputs[1],
        &batch.actions[0],
        &batch.actions[1],
    ])?;
    let mut losses = UpdateLosses::default();
    for i in 0..2 {
        let q_next = agents[i].target_critic.infer(&next_joint)?;
        let y: Vec<f32> = (0..n)
            .map(|k| {
                let r = batch.rewards[i].data()[k] as f64 * hp.reward_scale;
                let cont = 1.0 - batch.terminal.data()[k] as f64;
                (r + hp.gamma * cont * q_next.data()[k] as f64) as f32
            })
            .collect();
        let y = Tensor::from_vec(&[n, 1], y)?;

        let agent = &mut agents[i];
        let mut tape = Tape::new();
        let critic = agent.critic.bind(&mut tape);
        let x = tape.constant(joint.clone());
        let q = critic.forward(&mut tape, x)?;
        let yv = tape.constant(y);
        let diff = tape.sub(q, yv);
        let sq = tape.square(diff);
        let loss = tape.mean_all(sq);
        losses.critic[i] = tape.value(loss).item() as f64;
        let mut grads = tape.backward(loss);
        let g = collect_grads(&mut grads, &critic.vars(), &agent.critic.params());
        agent.critic_opt.step(&mut agent.critic, &g)?;

        let mut tape = Tape::new();
        let actor = agent.actor.bind(&mut tape);
        let critic = agent.critic.bind(&mut tape);
        let own_in = tape.constant(batch.inputs[i].clone());
        let own_action = actor.forward(&mut tape, own_in)?;
        let x0 = tape.constant(batch.inputs[0].clone());
        let x1 = tape.constant(batch.inputs[1].clone());
        let stored = tape.constant(batch.actions[1 - i].clone());
        let acts = if i == 0 {
            [own_action, stored]
        } else {
            [stored, own_action]
        };
        let joint_var = tape.concat_cols(&[x0, x1, acts[0], acts[1]]);
        let q = critic.forward(&mut tape, joint_var)?;
        let mean_q = tape.mean_all(q);
        let loss = tape.neg(mean_q);
        losses.actor[i] = tape.value(loss).item() as f64;
        let mut grads = tape.backward(loss);
        let g = collect_grads(&mut grads, &actor.vars(), &agent.actor.params());
        agent.actor_opt.step(&mut agent.actor, &g)?;
    }
    for agent in agents.iter_mut() {
        soft_update(&mut agent.target_actor, &agent.actor, hp.tau);
        soft_update(&mut agent.target_critic, &agent.critic, hp.tau);
    }
    Ok(losses)
}

/// One BiMDN step on a uniform batch; `None` while the buffer holds fewer
/// than `warmup` samples.
pub fn bimdn_update<R: Rng + ?Sized>(
    trainer: &mut BiMdnTrainer,
    buffer: &BeliefBuffer,
    batch: usize,
    warmup: usize,
    rng: &mut R,
) -> Result<Option<f64>> {
    if buffer.len() < warmup.max(1) {
        return Ok(None);
    }
    let (windows, targets) = buffer.sample(batch, rng);
    trainer.step(&windows, &targets).map(Some)
}
