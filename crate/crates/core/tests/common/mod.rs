//! Finite-difference harnesses shared by the gradient tests and the acceptance run.
#![allow(dead_code, clippy::needless_range_loop)]

use cyclebench::nn::{
    blstm_layer_backward, blstm_layer_forward, grad_check, gru_cell_backward, gru_cell_forward, lstm_cell_backward,
    lstm_cell_forward, relative_error, CellState, GruParams, HSource, LstmParams, ModelKind, ModelParams, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;

pub fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn randomize(tensors: Vec<&mut Tensor>, rng: &mut ChaCha8Rng) {
    for t in tensors {
        for v in t.data_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
}

pub fn lstm_random(w: usize, d: usize, rng: &mut ChaCha8Rng) -> LstmParams {
    let mut p = LstmParams::zeros(w, d);
    randomize(p.named_mut().into_iter().map(|(_, t)| t).collect(), rng);
    p
}

pub fn gru_random(w: usize, d: usize, rng: &mut ChaCha8Rng) -> GruParams {
    let mut p = GruParams::zeros(w, d);
    randomize(p.named_mut().into_iter().map(|(_, t)| t).collect(), rng);
    p
}

/// Max relative error over the full Jacobian of `h` (and `c`) with respect to
/// every LSTM parameter, one output lane at a time.
pub fn lstm_jacobian_error(w: usize, d: usize, src: HSource, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = lstm_random(w, d, &mut rng);
    let x = rand_vec(d, &mut rng);
    let state = CellState {
        h: rand_vec(w, &mut rng),
        c: rand_vec(w, &mut rng),
    };
    let mut worst: f64 = 0.0;
    for lane in 0..2 * w {
        let (dh, dc): (Vec<f64>, Vec<f64>) = (
            (0..w).map(|k| (k == lane) as u8 as f64).collect(),
            (0..w).map(|k| (k + w == lane) as u8 as f64).collect(),
        );
        let probe = |q: &LstmParams| {
            let s = lstm_cell_forward(&x, &state, q, src).unwrap();
            if lane < w {
                s.h[lane]
            } else {
                s.c[lane - w]
            }
        };
        let (g, _, _) = lstm_cell_backward(&x, &state, &p, src, &dh, &dc).unwrap();
        let mut q = p.clone();
        let grads: Vec<Vec<f64>> = g.named().iter().map(|(_, t)| t.data().to_vec()).collect();
        for (ti, ga) in grads.iter().enumerate() {
            for k in 0..ga.len() {
                let orig = q.named_mut()[ti].1.data()[k];
                q.named_mut()[ti].1.data_mut()[k] = orig + STEP;
                let up = probe(&q);
                q.named_mut()[ti].1.data_mut()[k] = orig - STEP;
                let down = probe(&q);
                q.named_mut()[ti].1.data_mut()[k] = orig;
                worst = worst.max(relative_error(ga[k], (up - down) / (2.0 * STEP)));
            }
        }
    }
    worst
}

pub fn gru_jacobian_error(w: usize, d: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = gru_random(w, d, &mut rng);
    let x = rand_vec(d, &mut rng);
    let state = CellState {
        h: rand_vec(w, &mut rng),
        c: vec![],
    };
    let mut worst: f64 = 0.0;
    for lane in 0..w {
        let dh: Vec<f64> = (0..w).map(|k| (k == lane) as u8 as f64).collect();
        let (g, _, _) = gru_cell_backward(&x, &state, &p, &dh).unwrap();
        let grads: Vec<Vec<f64>> = g.named().iter().map(|(_, t)| t.data().to_vec()).collect();
        let mut q = p.clone();
        for (ti, ga) in grads.iter().enumerate() {
            for k in 0..ga.len() {
                let orig = q.named_mut()[ti].1.data()[k];
                q.named_mut()[ti].1.data_mut()[k] = orig + STEP;
                let up = gru_cell_forward(&x, &state, &q).unwrap().h[lane];
                q.named_mut()[ti].1.data_mut()[k] = orig - STEP;
                let down = gru_cell_forward(&x, &state, &q).unwrap().h[lane];
                q.named_mut()[ti].1.data_mut()[k] = orig;
                worst = worst.max(relative_error(ga[k], (up - down) / (2.0 * STEP)));
            }
        }
    }
    worst
}

/// Random projection of the BLSTM output sequence, differentiated w.r.t. both
/// directions' parameters and the inputs.
pub fn blstm_error(w: usize, d: usize, l: usize, src: HSource, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fwd = lstm_random(w, d, &mut rng);
    let bwd = lstm_random(w, d, &mut rng);
    let seq: Vec<Vec<f64>> = (0..l).map(|_| rand_vec(d, &mut rng)).collect();
    let proj: Vec<Vec<f64>> = (0..l).map(|_| rand_vec(2 * w, &mut rng)).collect();
    let objective = |f: &LstmParams, b: &LstmParams, s: &[Vec<f64>]| -> f64 {
        let out = blstm_layer_forward(s, f, b, src).unwrap();
        out.iter()
            .zip(&proj)
            .map(|(o, a)| o.iter().zip(a).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    };
    let (gf, gb, dx) = blstm_layer_backward(&seq, &fwd, &bwd, src, &proj).unwrap();
    let mut worst: f64 = 0.0;
    for dir in 0..2 {
        let g = if dir == 0 { &gf } else { &gb };
        let grads: Vec<Vec<f64>> = g.named().iter().map(|(_, t)| t.data().to_vec()).collect();
        let (mut f, mut b) = (fwd.clone(), bwd.clone());
        for (ti, ga) in grads.iter().enumerate() {
            for k in 0..ga.len() {
                let target = if dir == 0 { &mut f } else { &mut b };
                let orig = target.named_mut()[ti].1.data()[k];
                target.named_mut()[ti].1.data_mut()[k] = orig + STEP;
                let up = objective(&f, &b, &seq);
                let target = if dir == 0 { &mut f } else { &mut b };
                target.named_mut()[ti].1.data_mut()[k] = orig - STEP;
                let down = objective(&f, &b, &seq);
                let target = if dir == 0 { &mut f } else { &mut b };
                target.named_mut()[ti].1.data_mut()[k] = orig;
                worst = worst.max(relative_error(ga[k], (up - down) / (2.0 * STEP)));
            }
        }
    }
    let mut s = seq.clone();
    for t in 0..l {
        for k in 0..d {
            let orig = s[t][k];
            s[t][k] = orig + STEP;
            let up = objective(&fwd, &bwd, &s);
            s[t][k] = orig - STEP;
            let down = objective(&fwd, &bwd, &s);
            s[t][k] = orig;
            worst = worst.max(relative_error(dx[t][k], (up - down) / (2.0 * STEP)));
        }
    }
    worst
}

pub fn model_error(kind: ModelKind, src: HSource, w: usize, l: usize, d: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::init(kind, w, d, src, &mut rng);
    randomize(p.tensors_mut(), &mut rng);
    let window: Vec<Vec<f64>> = (0..l).map(|_| rand_vec(d, &mut rng)).collect();
    let report = grad_check(&p, &window, 0.37, 1e-4);
    report.max_rel_err
}
