use pposg_nn::{layers::collect_grads, Activation, BiLstm, Mlp, MlpSpec, Params, Tape, Tensor};
use rand::SeedableRng;
use std::time::Instant;

fn main() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let net: Mlp = Mlp::new(&MlpSpec::two_hidden(52, 1, Activation::Identity), &mut rng);
    let x = Tensor::uniform(&[512, 52], 1.0, &mut rng);
    let t0 = Instant::now();
    for _ in 0..50 {
        let mut tape = Tape::new();
        let b = net.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let y = b.forward(&mut tape, xv).unwrap();
        let l = tape.mean_all(y);
        let mut g = tape.backward(l);
        let _ = collect_grads(&mut g, &b.vars(), &net.params());
    }
    println!("mlp fwd+bwd b512: {:?}/iter", t0.elapsed() / 50);
    for h in [32usize, 64, 128] {
        let lstm: BiLstm = BiLstm::new(11, h, &mut rng);
        let seq = Tensor::uniform(&[20 * 256, 11], 1.0, &mut rng);
        let lens = vec![20usize; 256];
        let t0 = Instant::now();
        for _ in 0..3 {
            let mut tape = Tape::new();
            let b = lstm.bind(&mut tape);
            let xv = tape.constant(seq.clone());
            let o = b.forward(&mut tape, xv, 256, &lens).unwrap();
            let l = tape.mean_all(o.summary);
            let mut g = tape.backward(l);
            let _ = collect_grads(&mut g, &b.vars(), &lstm.params());
        }
        println!("bilstm H={h} b256 L20 fwd+bwd: {:?}/iter", t0.elapsed() / 3);
    }
}
