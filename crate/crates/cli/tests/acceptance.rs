//! Acceptance run: one PASS or FAIL line per criterion, nonzero exit if any
//! fails. Each check carries its own oracle.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use pposg_core::belief::{
    mixture_nll_tape, pack_windows, BiMdn, BiMdnSpec, BiMdnTrainer, GaussianMixture, HistoryWindow,
    UkfBelief, UkfParams,
};
use pposg_core::dp::{value_iteration_observed, GameGrid};
use pposg_core::eval::{
    capture_stats, play_pair, two_proportion_ztest, FnSource, PolicySource, SpecSource, TimeoutRule,
};
use pposg_core::marl::{MemorySink, TrainConfig, Trainer};
use pposg_core::policies::{LearnedPolicy, Policy, PolicySpec};
use pposg_core::sim::{
    visibility, wrap_angle, Action, AgentModel, AgentState, Env, EnvConfig, SensorParams,
};
use pposg_nn::layers::collect_grads;
use pposg_nn::{Activation, BiLstm, Checkpoint, Mlp, MlpSpec, Params, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why())
    }
}

// ---- Gradients ------------------------------------------------------------

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

fn random_input(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(&[rows, cols], data).unwrap()
}

/// Max relative error over every parameter coordinate.
fn fd_error<N: Params<f64> + Clone>(
    net: &N,
    h: f64,
    loss: impl Fn(&N, &mut Tape<f64>) -> (Var, Vec<Var>),
) -> f64 {
    let mut tape = Tape::new();
    let (l, vars) = loss(net, &mut tape);
    let mut grads = tape.backward(l);
    let analytic = collect_grads(&mut grads, &vars, &net.params());
    let eval = |n: &N| {
        let mut t = Tape::new();
        let (l, _) = loss(n, &mut t);
        t.value(l).item()
    };
    let mut worst: f64 = 0.0;
    let lens: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    for (pi, &len) in lens.iter().enumerate() {
        for k in 0..len {
            let mut plus = net.clone();
            plus.params_mut()[pi].data_mut()[k] += h;
            let mut minus = net.clone();
            minus.params_mut()[pi].data_mut()[k] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[pi].data()[k], numeric));
        }
    }
    worst
}

fn gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut mlp, mut lstm, mut mdn) = (0.0f64, 0.0f64, 0.0f64);
    let mut count = 0;
    for k in 0..20 {
        let spec = MlpSpec {
            sizes: vec![5, 8, 8, 3],
            hidden: Activation::Relu,
            output: if k % 2 == 0 { Activation::Tanh } else { Activation::Identity },
        };
        let net: Mlp<f64> = Mlp::new(&spec, &mut rng);
        let input = random_input(&mut rng, 3, 5);
        let target = random_input(&mut rng, 3, 3);
        mlp = mlp.max(fd_error(&net, 1e-4, |n, tape| {
            let b = n.bind(tape);
            let x = tape.constant(input.clone());
            let y = b.forward(tape, x).unwrap();
            let t = tape.constant(target.clone());
            let d = tape.sub(y, t);
            let sq = tape.square(d);
            (tape.mean_all(sq), b.vars())
        }));

        let net: BiLstm<f64> = BiLstm::new(3, 3, &mut rng);
        let seq = random_input(&mut rng, 4 * 2, 3);
        let w = random_input(&mut rng, 2, 6);
        let short = rng.gen_range(1..=4);
        lstm = lstm.max(fd_error(&net, 1e-5, |n, tape| {
            let b = n.bind(tape);
            let x = tape.constant(seq.clone());
            let out = b.forward(tape, x, 2, &[4, short]).unwrap();
            let wv = tape.constant(w.clone());
            let p = tape.mul(out.summary, wv);
            (tape.sum_all(p), b.vars())
        }));

        // Trunk plus the weight, mean and spread heads through the mixture NLL.
        let spec = BiMdnSpec {
            input: 3,
            hidden: 3,
            trunk: 4,
            head_hidden: 3,
            components: 1 + k % 3,
        };
        let net: BiMdn<f64> = BiMdn::new(spec, &mut rng);
        let windows: Vec<HistoryWindow> = (0..2)
            .map(|_| {
                let len = rng.gen_range(1..=4);
                HistoryWindow {
                    data: (0..len * 3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    len,
                    width: 3,
                }
            })
            .collect();
        let targets = random_input(&mut rng, 2, 2);
        mdn = mdn.max(fd_error(&net, 1e-5, |n, tape| {
            let refs: Vec<&HistoryWindow> = windows.iter().collect();
            let b = n.bind(tape);
            let (seq, lens) = pack_windows::<f64>(&refs).unwrap();
            let seq = tape.constant(seq);
            let heads = b.forward(tape, seq, refs.len(), &lens).unwrap();
            (mixture_nll_tape(tape, &heads, &targets, n.spec.components), b.vars())
        }));
        count += 1;
    }
    let worst = mlp.max(lstm).max(mdn);
    ensure(worst < 1e-4, || format!("mlp {mlp:.2e} bilstm {lstm:.2e} bimdn {mdn:.2e}"))?;
    Ok(format!(
        "{count} parameterizations each; max rel err mlp {mlp:.1e}, bilstm {lstm:.1e}, bimdn {mdn:.1e}"
    ))
}

// ---- Simulator ------------------------------------------------------------

fn random_action(rng: &mut ChaCha8Rng) -> Action {
    Action::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5))
}

fn sim_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut steps = 0;
    for cfg in [EnvConfig::default(), EnvConfig::car_duel(), EnvConfig::point_mass_duel()] {
        let mut env = Env::new(cfg.clone(), 9).map_err(|e| e.to_string())?;
        for _ in 0..34_000 {
            let r = env
                .step(random_action(&mut rng), random_action(&mut rng))
                .map_err(|e| e.to_string())?;
            ensure(r.rewards[0] + r.rewards[1] == 0.0, || format!("rewards {:?}", r.rewards))?;
            let s = env.state();
            for (agent, ac) in [(&s.pursuer, &cfg.pursuer), (&s.evader, &cfg.evader)] {
                let (x, y) = agent.position();
                ensure(cfg.bounds.contains(x, y), || format!("left the workspace at ({x}, {y})"))?;
                let ok = match (agent, ac.model) {
                    (AgentState::Car(c), AgentModel::Car(p)) => {
                        c.delta.abs() <= p.delta_max
                            && c.v >= p.v_min
                            && c.v <= p.v_max
                            && (-PI..PI).contains(&c.psi)
                    }
                    (AgentState::PointMass(m), AgentModel::PointMass(p)) => {
                        m.vx.abs() <= p.v_max && m.vy.abs() <= p.v_max
                    }
                    _ => false,
                };
                ensure(ok, || format!("state out of limits: {agent:?}"))?;
            }
            if r.terminal.is_some() {
                env.reset();
            }
            steps += 1;
        }
    }

    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for _ in 0..100_000 {
        let sensor = SensorParams {
            fov: rng.gen_range(0.1..2.0 * PI),
            range: rng.gen_range(0.5..8.0),
        };
        let obs: (f64, f64) = (rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
        let heading = rng.gen_range(-PI..PI);
        let tgt: (f64, f64) = (rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
        let (dx, dy) = (tgt.0 - obs.0, tgt.1 - obs.1);
        let bearing_gap = (wrap_angle(dy.atan2(dx) - heading).abs() - sensor.fov / 2.0).abs();
        let range_gap = (dx.hypot(dy) - sensor.range).abs();
        // Within 1e-9 of the wedge boundary either answer is acceptable.
        if bearing_gap < 1e-9 || range_gap < 1e-9 {
            continue;
        }
        let th = rng.gen_range(-PI..PI);
        let (c, s) = (th.cos(), th.sin());
        let shift = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        let tf = |p: (f64, f64)| (c * p.0 - s * p.1 + shift.0, s * p.0 + c * p.1 + shift.1);
        let before = visibility(obs, heading, &sensor, tgt);
        let after = visibility(tf(obs), wrap_angle(heading + th), &sensor, tf(tgt));
        ensure(before == after, || format!("visibility changed under motion {th} {shift:?}"))?;
        let (rx, ry) = (tf(tgt).0 - tf(obs).0, tf(tgt).1 - tf(obs).1);
        worst = worst.max((rx.hypot(ry) - dx.hypot(dy)).abs());
        compared += 1;
    }
    ensure(compared > 99_000, || format!("only {compared} comparable samples"))?;
    ensure(worst < 1e-9, || format!("range drift {worst:e}"))?;
    Ok(format!("{steps} fuzzed steps clean; {compared} rigid motions agree"))
}

// ---- UKF against a Kalman filter --------------------------------------------

type M = Vec<Vec<f64>>;

fn eye(n: usize, s: f64) -> M {
    (0..n).map(|i| (0..n).map(|j| if i == j { s } else { 0.0 }).collect()).collect()
}

fn mat_mul(a: &M, b: &M) -> M {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum()).collect())
        .collect()
}

fn transpose(a: &M) -> M {
    (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

fn add(a: &M, b: &M, s: f64) -> M {
    a.iter().zip(b).map(|(r, q)| r.iter().zip(q).map(|(x, y)| x + s * y).collect()).collect()
}

/// Gauss-Jordan with partial pivoting.
fn inverse(a: &M) -> M {
    let n = a.len();
    let mut aug: M = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| aug[x][c].abs().total_cmp(&aug[y][c].abs())).unwrap();
        aug.swap(c, p);
        let d = aug[c][c];
        aug[c].iter_mut().for_each(|x| *x /= d);
        for r in 0..n {
            if r != c {
                let f = aug[r][c];
                let src = aug[c].clone();
                aug[r].iter_mut().zip(&src).for_each(|(x, y)| *x -= f * y);
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn kf_step(x: &[f64], p: &M, z: Option<&[f64]>, dt: f64, q: f64, r: f64) -> (Vec<f64>, M) {
    let f: M = vec![
        vec![1.0, 0.0, dt, 0.0],
        vec![0.0, 1.0, 0.0, dt],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ];
    let xp: Vec<f64> = f.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect();
    let pp = add(&mat_mul(&mat_mul(&f, p), &transpose(&f)), &eye(4, q), 1.0);
    let Some(z) = z else { return (xp, pp) };
    let s = add(&pp, &eye(4, r), 1.0);
    let k = mat_mul(&pp, &inverse(&s));
    let innov: Vec<f64> = z.iter().zip(&xp).map(|(a, b)| a - b).collect();
    let x: Vec<f64> = (0..4).map(|i| xp[i] + (0..4).map(|j| k[i][j] * innov[j]).sum::<f64>()).collect();
    (x, mat_mul(&add(&eye(4, 1.0), &k, -1.0), &pp))
}

fn ukf_matches_kf() -> Check {
    let params = UkfParams::default();
    ensure((params.alpha, params.beta, params.kappa) == (0.1, 2.0, 1.0), || format!("{params:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let dt = 0.2;
    let mut worst: f64 = 0.0;
    for intermittent in [false, true] {
        let mut truth = [0.5, 1.5, -0.4, 0.8];
        let mut ukf = UkfBelief::new([0.0; 4], &params);
        let mut kx = vec![0.0; 4];
        let mut kp = eye(4, 0.1);
        for step in 0..100 {
            truth = [truth[0] + dt * truth[2], truth[1] + dt * truth[3], truth[2], truth[3]];
            let z: [f64; 4] = std::array::from_fn(|i| truth[i] + rng.gen_range(-0.3..0.3));
            let zo = (!intermittent || step % 4 != 2).then_some(z);
            let s = ukf.step(zo, dt, &params);
            ensure(!s.reinitialized, || format!("reinitialized at step {step}"))?;
            ukf = s.belief;
            (kx, kp) = kf_step(&kx, &kp, zo.as_ref().map(|z| &z[..]), dt, 0.1, 0.1);
            for i in 0..4 {
                worst = worst.max((ukf.mean[i] - kx[i]).abs());
                for j in 0..4 {
                    worst = worst.max((ukf.cov[i][j] - kp[i][j]).abs());
                }
            }
        }
    }
    ensure(worst < 1e-6, || format!("max deviation {worst:e}"))?;
    Ok(format!("100 steps, dense and intermittent; max deviation {worst:.1e}"))
}

// ---- Dynamic programming ----------------------------------------------------

fn dp_oracle() -> Check {
    let (vp, ve, radius, dt, cell) = (2.0, 1.0, 0.5, 0.05, 0.1);
    let want = (4.0 - radius) / (vp - ve);
    let tol = f64::max(cell / (vp - ve), dt);
    let mut lines = Vec::new();
    for (name, grid, at) in [
        ("line", GameGrid::line(6.0, cell, vp, ve, dt, radius), vec![4.0]),
        ("planar", GameGrid::planar(5.0, cell, vp, ve, dt, radius), vec![4.0, 0.0]),
    ] {
        let mut sweeps = 0;
        let mut worst_rise = f64::NEG_INFINITY;
        let v = value_iteration_observed(&grid, &mut |_, rise| {
            sweeps += 1;
            worst_rise = worst_rise.max(rise);
        })
        .map_err(|e| e.to_string())?;
        ensure(worst_rise <= 0.0, || format!("{name}: a sweep raised a node by {worst_rise}"))?;
        let got = v.value_at(&at);
        ensure((got - want).abs() <= tol, || format!("{name}: {got} vs {want} (tol {tol})"))?;
        lines.push(format!("{name} {got:.3}s over {sweeps} monotone sweeps"));
    }
    Ok(format!("{}; want {want}s within {tol}s", lines.join(", ")))
}

// ---- BiMDN learnability -----------------------------------------------------

/// Constant-speed target that turns a quarter circle left or right at random;
/// half of the frames after the first are hidden. The prediction target is the
/// final position, seen or not.
fn tracking_task(rng: &mut ChaCha8Rng, n: usize) -> (Vec<HistoryWindow>, Vec<[f32; 2]>) {
    let mut windows = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let len = rng.gen_range(4..=12);
        let mut p = [rng.gen_range(-1.0f64..1.0), rng.gen_range(-1.0f64..1.0)];
        let mut heading = rng.gen_range(-PI..PI);
        let mut data = Vec::with_capacity(len * 3);
        for t in 0..len {
            if t > 0 {
                if rng.gen_bool(0.25) {
                    heading += if rng.gen_bool(0.5) { PI / 2.0 } else { -PI / 2.0 };
                }
                p[0] += 0.15 * heading.cos();
                p[1] += 0.15 * heading.sin();
            }
            if t == 0 || rng.gen_bool(0.5) {
                data.extend_from_slice(&[p[0] as f32, p[1] as f32, 1.0]);
            } else {
                data.extend_from_slice(&[0.0, 0.0, -1.0]);
            }
        }
        windows.push(HistoryWindow { data, len, width: 3 });
        targets.push([p[0] as f32, p[1] as f32]);
    }
    (windows, targets)
}

fn bimdn_learnability() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (train_w, train_t) = tracking_task(&mut rng, 4096);
    let (test_w, test_t) = tracking_task(&mut rng, 1024);

    let n = train_t.len() as f64;
    let mu: [f64; 2] = std::array::from_fn(|a| train_t.iter().map(|t| t[a] as f64).sum::<f64>() / n);
    let sd: [f64; 2] = std::array::from_fn(|a| {
        (train_t.iter().map(|t| (t[a] as f64 - mu[a]).powi(2)).sum::<f64>() / n).sqrt()
    });
    let constant = GaussianMixture::single(mu, sd);
    let baseline =
        test_t.iter().map(|t| constant.nll([t[0] as f64, t[1] as f64])).sum::<f64>() / test_t.len() as f64;

    let updates = 2000;
    let train = |components: usize| -> Result<f64, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(105);
        let spec = BiMdnSpec {
            input: 3,
            hidden: 16,
            trunk: 32,
            head_hidden: 32,
            components,
        };
        let mut tr = BiMdnTrainer::new(BiMdn::new(spec, &mut rng), 0.002);
        for _ in 0..updates {
            let idx: Vec<usize> = (0..64).map(|_| rng.gen_range(0..train_w.len())).collect();
            let w: Vec<&HistoryWindow> = idx.iter().map(|&i| &train_w[i]).collect();
            let t: Vec<[f32; 2]> = idx.iter().map(|&i| train_t[i]).collect();
            tr.step(&w, &t).map_err(|e| e.to_string())?;
        }
        let refs: Vec<&HistoryWindow> = test_w.iter().collect();
        tr.loss(&refs, &test_t).map_err(|e| e.to_string())
    };
    let mixture = train(3)?;
    let single = train(1)?;
    let detail = format!(
        "held-out NLL {mixture:.3} vs constant {baseline:.3} and single Gaussian {single:.3} after {updates} updates"
    );
    ensure(mixture < baseline && mixture < single, || detail.clone())?;
    Ok(detail)
}

// ---- Desk-scale training trend ----------------------------------------------

fn desk_training_trend() -> Check {
    let env = EnvConfig::desk();
    let cfg = TrainConfig {
        episodes: 500,
        checkpoint_interval: 50,
        ..TrainConfig::default()
    };
    let started = Instant::now();
    let mut trainer = Trainer::new(env.clone(), cfg, 1).map_err(|e| e.to_string())?;
    let mut sink = MemorySink::default();
    trainer.run(&mut sink).map_err(|e| e.to_string())?;

    let rw = SpecSource::new(PolicySpec::RandomWalk, &env).map_err(|e| e.to_string())?;
    let rate = |p: &dyn PolicySource| -> Result<f64, String> {
        let r = play_pair(p, &rw, &env, 1000, 200).map_err(|e| e.to_string())?;
        Ok(capture_stats(&r, TimeoutRule::CountAsOne).rate)
    };
    let learned = |episode: u64| -> Result<f64, String> {
        let (_, ck, _) = sink
            .checkpoints
            .iter()
            .find(|(label, _, _)| *label == episode)
            .ok_or_else(|| format!("no checkpoint at episode {episode}"))?;
        let ck = ck.clone();
        let src = FnSource::new(format!("ep{episode}"), move |role, s| {
            Ok(Box::new(LearnedPolicy::from_checkpoint("learned", &ck, role, s)?) as Box<dyn Policy>)
        });
        rate(&src)
    };
    let early = learned(50)?;
    let last = learned(500)?;
    let pp = rate(&SpecSource::new(PolicySpec::PurePursuit { lookahead: 1.0 }, &env).map_err(|e| e.to_string())?)?;
    let detail = format!(
        "capture rate vs random walk on 200 seeds: episode 50 {early:.3}, episode 500 {last:.3}, pure pursuit {pp:.3} ({:.0}s)",
        started.elapsed().as_secs_f64()
    );
    ensure(last >= early + 0.15 && last > pp, || detail.clone())?;
    Ok(detail)
}

// ---- Statistics -------------------------------------------------------------

/// Standard normal upper tail by adaptive Simpson quadrature of the density.
fn normal_tail(x: f64) -> f64 {
    fn phi(t: f64) -> f64 {
        (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
    }
    fn simpson(a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (phi(a) + 4.0 * phi((a + b) / 2.0) + phi(b))
    }
    fn adapt(a: f64, b: f64, whole: f64, eps: f64, depth: u32) -> f64 {
        let m = (a + b) / 2.0;
        let (l, r) = (simpson(a, m), simpson(m, b));
        if depth == 0 || (l + r - whole).abs() <= 15.0 * eps {
            l + r + (l + r - whole) / 15.0
        } else {
            adapt(a, m, l, eps / 2.0, depth - 1) + adapt(m, b, r, eps / 2.0, depth - 1)
        }
    }
    let b = x + 40.0;
    adapt(x, b, simpson(x, b), 1e-15, 50)
}

/// Pooled statistic over integer counts.
fn reference_z(x1: u64, n1: u64, x2: u64, n2: u64) -> f64 {
    let (x, n) = (x1 + x2, n1 + n2);
    let num = x1 as i128 * n2 as i128 - x2 as i128 * n1 as i128;
    let den = (n1 as u128 * n2 as u128 * x as u128 * (n - x) as u128) as f64 / n as f64;
    if den == 0.0 {
        0.0
    } else {
        num as f64 / den.sqrt()
    }
}

fn statistics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (n1, n2) = (rng.gen_range(10..5000u64), rng.gen_range(10..5000u64));
        let (x1, x2) = (rng.gen_range(0..=n1), rng.gen_range(0..=n2));
        let t = two_proportion_ztest(x1, n1, x2, n2).map_err(|e| e.to_string())?;
        let z = reference_z(x1, n1, x2, n2);
        let p = if z == 0.0 { 1.0 } else { 2.0 * normal_tail(z.abs()) };
        worst = worst.max((t.z - z).abs()).max((t.p - p).abs());
    }
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    let t = two_proportion_ztest(1245, 1500, 705, 1500).map_err(|e| e.to_string())?;
    let z = reference_z(1245, 1500, 705, 1500);
    ensure((t.z - z).abs() < 1e-9 && t.p < 0.05 && t.significant(), || format!("{t:?} vs z {z}"))?;
    Ok(format!("100 inputs within {worst:.1e}; 0.83 vs 0.47 at n=1500 gives z {:.2}, p {:.1e}", t.z, t.p))
}

// ---- Determinism ------------------------------------------------------------

fn pposg(args: &[&str]) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pposg"));
    cmd.args(args).env("RUST_LOG", "warn");
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("PPOSG_")) {
        cmd.env_remove(k);
    }
    let out = cmd.output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut config = serde_json::to_value(pposg_cli::config::Config::default()).unwrap();
    config["env"] = serde_json::to_value(EnvConfig { timeout: 20, ..EnvConfig::desk() }).unwrap();
    let t = &mut config["train"];
    for (k, v) in [
        ("episodes", 8),
        ("envs", 2),
        ("batch_size", 16),
        ("warmup", 32),
        ("replay_capacity", 500),
        ("checkpoint_interval", 4),
        ("metrics_interval", 5),
        ("belief_capacity", 200),
        ("belief_warmup", 40),
        ("bimdn_batch", 8),
        ("bimdn_interval", 5),
    ] {
        t[k] = v.into();
    }
    let path = dir.path().join("config.json");
    std::fs::write(&path, config.to_string()).map_err(|e| e.to_string())?;
    let cfg = path.to_str().unwrap();

    let mut metrics = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        pposg(&["train", "--config", cfg, "--seed", "11", "--out", out.to_str().unwrap()])?;
        metrics.push(read(&out.join("metrics.csv"))?);
    }
    ensure(metrics[0] == metrics[1], || "metrics differ between identical runs".into())?;

    let ckdir = dir.path().join("a/checkpoints");
    let mut files = 0;
    for entry in std::fs::read_dir(&ckdir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let bytes = read(&path)?;
        let ck = Checkpoint::load(&path).map_err(|e| e.to_string())?;
        let copy = dir.path().join("copy.pposg");
        ck.save(&copy).map_err(|e| e.to_string())?;
        ensure(read(&copy)? == bytes, || format!("{} changed on round trip", path.display()))?;
        files += 1;
    }
    ensure(files > 0, || "no checkpoints written".into())?;
    let rows = String::from_utf8_lossy(&metrics[0]).lines().count();
    Ok(format!("two seeded runs wrote identical metrics ({rows} lines); {files} checkpoints round-trip byte-identically"))
}

fn main() -> ExitCode {
    let checks: [(&str, fn() -> Check); 8] = [
        ("gradient_suite", gradients),
        ("sim_invariants", sim_invariants),
        ("ukf_matches_kalman_filter", ukf_matches_kf),
        ("dp_oracle", dp_oracle),
        ("bimdn_learnability", bimdn_learnability),
        ("desk_training_trend", desk_training_trend),
        ("ztest_statistics", statistics),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
