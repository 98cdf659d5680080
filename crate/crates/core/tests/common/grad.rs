//! Central finite differences against the tape's analytic gradients.

use duetmf::duet::{DuetModel, Mode, StructuredMask};
use duetmf::corpus::Document;
use duetmf::tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;

/// Relative error with a small floor so that gradients that are zero up to
/// rounding do not divide by zero.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Random values bounded away from zero, so no kink sits within a step.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Largest relative error over every input element of the scalar
/// `sum(f(inputs) * R)` for a fixed random `R`.
pub fn max_rel_error<F>(inputs: &[Tensor], f: F) -> f64
where
    F: Fn(&mut Tape<'_>, &[Var]) -> Var,
{
    let probe_shape = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).shape().to_vec()
    };
    let weights = away_from_zero(&mut ChaCha8Rng::seed_from_u64(99), &probe_shape);

    let loss_of = |xs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.input(t.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(a, b)| a * b)
            .sum()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = f(&mut tape, &vars);
    let w = tape.constant(weights.clone());
    let prod = tape.hadamard(out, w).unwrap();
    let loss = tape.sum(prod);
    tape.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (i, v) in vars.iter().enumerate() {
        let zeros = vec![0.0; inputs[i].len()];
        let analytic = tape.grad(*v).unwrap_or(&zeros).to_vec();
        for j in 0..inputs[i].len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= STEP;
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * STEP);
            worst = worst.max(rel_err(analytic[j], numeric));
        }
    }
    worst
}

/// RankNet loss of a train-mode (pos, neg) pair with a fixed dropout stream.
fn duet_loss(model: &DuetModel, q: &[&str], pos: &Document, neg: &Document, mask: &StructuredMask) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let sp = model.forward(&mut tape, &vars, q, pos, mask, Mode::Train, &mut rng).unwrap();
    let sn = model.forward(&mut tape, &vars, q, neg, mask, Mode::Train, &mut rng).unwrap();
    let l = tape.ranknet(sp, sn).unwrap();
    tape.value(l).item()
}

/// Largest relative error over every DuetMF parameter.
pub fn duet_max_rel_error(model: &DuetModel, q: &[&str], pos: &Document, neg: &Document, mask: &StructuredMask) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let sp = model.forward(&mut tape, &vars, q, pos, mask, Mode::Train, &mut rng).unwrap();
    let sn = model.forward(&mut tape, &vars, q, neg, mask, Mode::Train, &mut rng).unwrap();
    let l = tape.ranknet(sp, sn).unwrap();
    tape.backward(l).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(model.params().tensors())
        .map(|(v, t)| tape.grad(*v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();

    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for (slot, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = probe.params().get(slot).data()[j];
            probe.params_mut().get_mut(slot).data_mut()[j] = orig + STEP;
            let up = duet_loss(&probe, q, pos, neg, mask);
            probe.params_mut().get_mut(slot).data_mut()[j] = orig - STEP;
            let down = duet_loss(&probe, q, pos, neg, mask);
            probe.params_mut().get_mut(slot).data_mut()[j] = orig;
            worst = worst.max(rel_err(a, (up - down) / (2.0 * STEP)));
        }
    }
    worst
}
