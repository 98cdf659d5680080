//! Fits a two-layer network to XOR with the tape and Adam.

use duetmf::tensor::{AdamState, Params, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> duetmf::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut init = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    };
    let mut params = Params::new();
    params.add("w1", init(&[2, 8])?);
    params.add("b1", Tensor::zeros(&[1, 8]));
    params.add("w2", init(&[8, 1])?);
    params.add("b2", Tensor::zeros(&[1, 1]));

    let x = Tensor::matrix(4, 2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0])?;
    // Rows 1 and 2 should outrank rows 0 and 3.
    let pairs = [(1, 0), (1, 3), (2, 0), (2, 3)];
    let mut adam = AdamState::new(0.05, params.tensors());
    for step in 0..=200 {
        let (loss, grads, scores) = {
            let mut tape = Tape::new();
            let p: Vec<_> = params.tensors().iter().map(|t| tape.param(t)).collect();
            let input = tape.input(x.clone());
            let h = tape.matmul(input, p[0])?;
            let h = tape.add_bias(h, p[1])?;
            let h = tape.tanh(h);
            let s = tape.matmul(h, p[2])?;
            let s = tape.add_bias(s, p[3])?;
            let loss = tape.pairwise_ranknet(s, &pairs)?;
            tape.backward(loss)?;
            let grads: Vec<Vec<f64>> = p.iter().map(|v| tape.grad(*v).unwrap().to_vec()).collect();
            (tape.value(loss).item(), grads, tape.value(s).data().to_vec())
        };
        if step % 50 == 0 {
            println!("step {step:>3}\tloss {loss:.5}\tscores {scores:.3?}");
        }
        adam.step(params.tensors_mut(), &grads)?;
    }
    Ok(())
}
