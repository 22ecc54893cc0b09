//! ReLU LSTM and GRU cells with hand-written backward passes.
//!
//! LSTM, per lane:
//!
//! ```text
//! f = σ(U_f·x + W_f·h₋ + b_f)
//! i = σ(U_i·x + W_i·h₋ + b_i)
//! o = σ(U_o·x + W_o·h₋ + b_o)
//! c̃ = relu(U_c·x + W_c·h₋ + b_c)
//! c = c̃·i + c₋·f
//! h = relu(c̃)·o        (HSource::Candidate)
//! h = relu(c)·o         (HSource::Cell)
//! ```
//!
//! GRU, per lane:
//!
//! ```text
//! r  = σ(U_r·x + W_r·h₋ + b_r)
//! z  = σ(U_z·x + W_z·h₋ + b_z)
//! h' = relu(U_h·x + W_h·(r·h₋) + b_h)
//! h  = z·h₋ + (1 − z)·h'
//! ```
//!
//! With the candidate source the output never reads `c`, so the forget gate
//! receives no gradient. That is the intended behaviour of that variant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{relu, sigmoid, Tensor};
use crate::error::{Error, Result};

/// Which quantity feeds the LSTM hidden output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HSource {
    /// `h = relu(c̃)·o`.
    #[default]
    Candidate,
    /// `h = relu(c)·o`.
    Cell,
}

impl HSource {
    pub fn as_str(self) -> &'static str {
        match self {
            HSource::Candidate => "candidate",
            HSource::Cell => "cell",
        }
    }
}

impl std::str::FromStr for HSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "candidate" => Ok(HSource::Candidate),
            "cell" => Ok(HSource::Cell),
            other => Err(Error::Config(format!("unknown lstm h source `{other}`"))),
        }
    }
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::from_vec(&[rows, cols], data).expect("shape")
}

/// Weights of a ReLU LSTM cell. `U_*` are `width × input`, `W_*` are
/// `width × width`, biases have length `width`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub u_f: Tensor,
    pub u_i: Tensor,
    pub u_o: Tensor,
    pub u_c: Tensor,
    pub w_f: Tensor,
    pub w_i: Tensor,
    pub w_o: Tensor,
    pub w_c: Tensor,
    pub b_f: Tensor,
    pub b_i: Tensor,
    pub b_o: Tensor,
    pub b_c: Tensor,
}

impl LstmParams {
    pub fn zeros(width: usize, input: usize) -> Self {
        let u = || Tensor::zeros(&[width, input]);
        let w = || Tensor::zeros(&[width, width]);
        let b = || Tensor::zeros(&[width]);
        Self {
            u_f: u(),
            u_i: u(),
            u_o: u(),
            u_c: u(),
            w_f: w(),
            w_i: w(),
            w_o: w(),
            w_c: w(),
            b_f: b(),
            b_i: b(),
            b_o: b(),
            b_c: b(),
        }
    }

    pub fn init<R: Rng + ?Sized>(width: usize, input: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(width, input);
        for u in [&mut p.u_f, &mut p.u_i, &mut p.u_o, &mut p.u_c] {
            *u = glorot(width, input, input, width, rng);
        }
        for w in [&mut p.w_f, &mut p.w_i, &mut p.w_o, &mut p.w_c] {
            *w = glorot(width, width, width, width, rng);
        }
        p
    }

    pub fn width(&self) -> usize {
        self.b_f.len()
    }

    pub fn input(&self) -> usize {
        self.u_f.cols()
    }

    pub fn named(&self) -> [(&'static str, &Tensor); 12] {
        [
            ("U_f", &self.u_f),
            ("U_i", &self.u_i),
            ("U_o", &self.u_o),
            ("U_c", &self.u_c),
            ("W_f", &self.w_f),
            ("W_i", &self.w_i),
            ("W_o", &self.w_o),
            ("W_c", &self.w_c),
            ("b_f", &self.b_f),
            ("b_i", &self.b_i),
            ("b_o", &self.b_o),
            ("b_c", &self.b_c),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut Tensor); 12] {
        [
            ("U_f", &mut self.u_f),
            ("U_i", &mut self.u_i),
            ("U_o", &mut self.u_o),
            ("U_c", &mut self.u_c),
            ("W_f", &mut self.w_f),
            ("W_i", &mut self.w_i),
            ("W_o", &mut self.w_o),
            ("W_c", &mut self.w_c),
            ("b_f", &mut self.b_f),
            ("b_i", &mut self.b_i),
            ("b_o", &mut self.b_o),
            ("b_c", &mut self.b_c),
        ]
    }

    fn check(&self, x: &[f64], state: &CellState) -> Result<()> {
        let w = self.width();
        let shapes_ok = self.named().iter().all(|(n, t)| match n.as_bytes()[0] {
            b'U' => t.shape() == [w, self.input()],
            b'W' => t.shape() == [w, w],
            _ => t.shape() == [w],
        });
        if !shapes_ok || x.len() != self.input() || state.h.len() != w || state.c.len() != w {
            return Err(Error::Shape(format!(
                "lstm cell width {w} input {} got x {} h {} c {}",
                self.input(),
                x.len(),
                state.h.len(),
                state.c.len()
            )));
        }
        Ok(())
    }
}

/// Weights of a ReLU GRU cell, shaped as in [`LstmParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub u_r: Tensor,
    pub u_z: Tensor,
    pub u_h: Tensor,
    pub w_r: Tensor,
    pub w_z: Tensor,
    pub w_h: Tensor,
    pub b_r: Tensor,
    pub b_z: Tensor,
    pub b_h: Tensor,
}

impl GruParams {
    pub fn zeros(width: usize, input: usize) -> Self {
        let u = || Tensor::zeros(&[width, input]);
        let w = || Tensor::zeros(&[width, width]);
        let b = || Tensor::zeros(&[width]);
        Self {
            u_r: u(),
            u_z: u(),
            u_h: u(),
            w_r: w(),
            w_z: w(),
            w_h: w(),
            b_r: b(),
            b_z: b(),
            b_h: b(),
        }
    }

    pub fn init<R: Rng + ?Sized>(width: usize, input: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(width, input);
        for u in [&mut p.u_r, &mut p.u_z, &mut p.u_h] {
            *u = glorot(width, input, input, width, rng);
        }
        for w in [&mut p.w_r, &mut p.w_z, &mut p.w_h] {
            *w = glorot(width, width, width, width, rng);
        }
        p
    }

    pub fn width(&self) -> usize {
        self.b_r.len()
    }

    pub fn input(&self) -> usize {
        self.u_r.cols()
    }

    pub fn named(&self) -> [(&'static str, &Tensor); 9] {
        [
            ("U_r", &self.u_r),
            ("U_z", &self.u_z),
            ("U_h", &self.u_h),
            ("W_r", &self.w_r),
            ("W_z", &self.w_z),
            ("W_h", &self.w_h),
            ("b_r", &self.b_r),
            ("b_z", &self.b_z),
            ("b_h", &self.b_h),
        ]
    }

    pub fn named_mut(&mut self) -> [(&'static str, &mut Tensor); 9] {
        [
            ("U_r", &mut self.u_r),
            ("U_z", &mut self.u_z),
            ("U_h", &mut self.u_h),
            ("W_r", &mut self.w_r),
            ("W_z", &mut self.w_z),
            ("W_h", &mut self.w_h),
            ("b_r", &mut self.b_r),
            ("b_z", &mut self.b_z),
            ("b_h", &mut self.b_h),
        ]
    }

    fn check(&self, x: &[f64], state: &CellState) -> Result<()> {
        let w = self.width();
        let shapes_ok = self.named().iter().all(|(n, t)| match n.as_bytes()[0] {
            b'U' => t.shape() == [w, self.input()],
            b'W' => t.shape() == [w, w],
            _ => t.shape() == [w],
        });
        if !shapes_ok || x.len() != self.input() || state.h.len() != w {
            return Err(Error::Shape(format!(
                "gru cell width {w} input {} got x {} h {}",
                self.input(),
                x.len(),
                state.h.len()
            )));
        }
        Ok(())
    }
}

/// Recurrent state carried between steps. `c` is empty for GRU cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn lstm(width: usize) -> Self {
        Self {
            h: vec![0.0; width],
            c: vec![0.0; width],
        }
    }

    pub fn gru(width: usize) -> Self {
        Self {
            h: vec![0.0; width],
            c: Vec::new(),
        }
    }
}

/// Activations of one LSTM step, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LstmStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub o: Vec<f64>,
    pub cand: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

fn affine(u: &Tensor, w: &Tensor, b: &Tensor, x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut out = b.data().to_vec();
    u.matvec_add(x, &mut out);
    w.matvec_add(h, &mut out);
    out
}

pub(crate) fn lstm_step(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmParams, src: HSource) -> LstmStep {
    let mut f = affine(&p.u_f, &p.w_f, &p.b_f, x, h_prev);
    let mut i = affine(&p.u_i, &p.w_i, &p.b_i, x, h_prev);
    let mut o = affine(&p.u_o, &p.w_o, &p.b_o, x, h_prev);
    let mut cand = affine(&p.u_c, &p.w_c, &p.b_c, x, h_prev);
    f.iter_mut().for_each(|v| *v = sigmoid(*v));
    i.iter_mut().for_each(|v| *v = sigmoid(*v));
    o.iter_mut().for_each(|v| *v = sigmoid(*v));
    cand.iter_mut().for_each(|v| *v = relu(*v));
    let c: Vec<f64> = (0..cand.len()).map(|k| cand[k] * i[k] + c_prev[k] * f[k]).collect();
    let h = match src {
        HSource::Candidate => (0..c.len()).map(|k| relu(cand[k]) * o[k]).collect(),
        HSource::Cell => (0..c.len()).map(|k| relu(c[k]) * o[k]).collect(),
    };
    LstmStep {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        f,
        i,
        o,
        cand,
        c,
        h,
    }
}

/// Backward through one LSTM step. `dh` and `dc` are the loss gradients with
/// respect to this step's outputs; gradients w.r.t. the previous state and
/// the input are written into `dh_prev`, `dc_prev` and `dx` (overwritten).
pub(crate) fn lstm_step_backward(
    s: &LstmStep,
    p: &LstmParams,
    src: HSource,
    dh: &[f64],
    dc: &[f64],
    g: &mut LstmParams,
    dx: &mut [f64],
    dh_prev: &mut [f64],
    dc_prev: &mut [f64],
) {
    let w = s.h.len();
    let mut dz_f = vec![0.0; w];
    let mut dz_i = vec![0.0; w];
    let mut dz_o = vec![0.0; w];
    let mut dz_c = vec![0.0; w];
    for k in 0..w {
        let mut dck = dc[k];
        let mut dcand = 0.0;
        let act = match src {
            HSource::Candidate => {
                dcand += dh[k] * s.o[k];
                s.cand[k]
            }
            HSource::Cell => {
                if s.c[k] > 0.0 {
                    dck += dh[k] * s.o[k];
                }
                relu(s.c[k])
            }
        };
        let do_ = dh[k] * act;
        dcand += dck * s.i[k];
        let di = dck * s.cand[k];
        let df = dck * s.c_prev[k];
        dc_prev[k] = dck * s.f[k];
        dz_f[k] = df * s.f[k] * (1.0 - s.f[k]);
        dz_i[k] = di * s.i[k] * (1.0 - s.i[k]);
        dz_o[k] = do_ * s.o[k] * (1.0 - s.o[k]);
        dz_c[k] = if s.cand[k] > 0.0 { dcand } else { 0.0 };
    }
    dx.iter_mut().for_each(|v| *v = 0.0);
    dh_prev.iter_mut().for_each(|v| *v = 0.0);
    for (dz, u, wm, gu, gw, gb) in [
        (&dz_f, &p.u_f, &p.w_f, &mut g.u_f, &mut g.w_f, &mut g.b_f),
        (&dz_i, &p.u_i, &p.w_i, &mut g.u_i, &mut g.w_i, &mut g.b_i),
        (&dz_o, &p.u_o, &p.w_o, &mut g.u_o, &mut g.w_o, &mut g.b_o),
        (&dz_c, &p.u_c, &p.w_c, &mut g.u_c, &mut g.w_c, &mut g.b_c),
    ] {
        gu.outer_add(dz, &s.x);
        gw.outer_add(dz, &s.h_prev);
        for (b, d) in gb.data_mut().iter_mut().zip(dz.iter()) {
            *b += d;
        }
        u.matvec_t_add(dz, dx);
        wm.matvec_t_add(dz, dh_prev);
    }
}

#[derive(Debug, Clone)]
pub(crate) struct GruStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub rh: Vec<f64>,
    pub cand: Vec<f64>,
    pub h: Vec<f64>,
}

pub(crate) fn gru_step(x: &[f64], h_prev: &[f64], p: &GruParams) -> GruStep {
    let mut r = affine(&p.u_r, &p.w_r, &p.b_r, x, h_prev);
    let mut z = affine(&p.u_z, &p.w_z, &p.b_z, x, h_prev);
    r.iter_mut().for_each(|v| *v = sigmoid(*v));
    z.iter_mut().for_each(|v| *v = sigmoid(*v));
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let mut cand = affine(&p.u_h, &p.w_h, &p.b_h, x, &rh);
    cand.iter_mut().for_each(|v| *v = relu(*v));
    let h = (0..cand.len())
        .map(|k| z[k] * h_prev[k] + (1.0 - z[k]) * cand[k])
        .collect();
    GruStep {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        r,
        z,
        rh,
        cand,
        h,
    }
}

pub(crate) fn gru_step_backward(
    s: &GruStep,
    p: &GruParams,
    dh: &[f64],
    g: &mut GruParams,
    dx: &mut [f64],
    dh_prev: &mut [f64],
) {
    let w = s.h.len();
    let mut dz_z = vec![0.0; w];
    let mut dz_h = vec![0.0; w];
    for k in 0..w {
        let dzk = dh[k] * (s.h_prev[k] - s.cand[k]);
        dz_z[k] = dzk * s.z[k] * (1.0 - s.z[k]);
        let dcand = dh[k] * (1.0 - s.z[k]);
        dz_h[k] = if s.cand[k] > 0.0 { dcand } else { 0.0 };
    }
    dx.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..w {
        dh_prev[k] = dh[k] * s.z[k];
    }

    // Candidate path: h' = relu(U_h·x + W_h·(r·h₋) + b_h).
    g.u_h.outer_add(&dz_h, &s.x);
    g.w_h.outer_add(&dz_h, &s.rh);
    for (b, d) in g.b_h.data_mut().iter_mut().zip(&dz_h) {
        *b += d;
    }
    p.u_h.matvec_t_add(&dz_h, dx);
    let mut drh = vec![0.0; w];
    p.w_h.matvec_t_add(&dz_h, &mut drh);
    let mut dz_r = vec![0.0; w];
    for k in 0..w {
        dh_prev[k] += drh[k] * s.r[k];
        let dr = drh[k] * s.h_prev[k];
        dz_r[k] = dr * s.r[k] * (1.0 - s.r[k]);
    }

    for (dz, u, wm, gu, gw, gb) in [
        (&dz_r, &p.u_r, &p.w_r, &mut g.u_r, &mut g.w_r, &mut g.b_r),
        (&dz_z, &p.u_z, &p.w_z, &mut g.u_z, &mut g.w_z, &mut g.b_z),
    ] {
        gu.outer_add(dz, &s.x);
        gw.outer_add(dz, &s.h_prev);
        for (b, d) in gb.data_mut().iter_mut().zip(dz.iter()) {
            *b += d;
        }
        u.matvec_t_add(dz, dx);
        wm.matvec_t_add(dz, dh_prev);
    }
}

fn finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// One LSTM step on an explicit state.
pub fn lstm_cell_forward(x: &[f64], state: &CellState, p: &LstmParams, src: HSource) -> Result<CellState> {
    p.check(x, state)?;
    let s = lstm_step(x, &state.h, &state.c, p, src);
    if !finite(&s.h) || !finite(&s.c) {
        return Err(Error::NonFinite("lstm cell"));
    }
    Ok(CellState { h: s.h, c: s.c })
}

/// One GRU step on an explicit state.
pub fn gru_cell_forward(x: &[f64], state: &CellState, p: &GruParams) -> Result<CellState> {
    p.check(x, state)?;
    let s = gru_step(x, &state.h, p);
    if !finite(&s.h) {
        return Err(Error::NonFinite("gru cell"));
    }
    Ok(CellState { h: s.h, c: Vec::new() })
}

/// Vector-Jacobian product of one LSTM step: given `∂L/∂h` and `∂L/∂c` at the
/// step output, returns the parameter gradient, `∂L/∂x` and the gradient
/// w.r.t. the incoming state.
pub fn lstm_cell_backward(
    x: &[f64],
    state: &CellState,
    p: &LstmParams,
    src: HSource,
    dh: &[f64],
    dc: &[f64],
) -> Result<(LstmParams, Vec<f64>, CellState)> {
    p.check(x, state)?;
    if dh.len() != p.width() || dc.len() != p.width() {
        return Err(Error::Shape("lstm output gradient width".into()));
    }
    let s = lstm_step(x, &state.h, &state.c, p, src);
    let mut g = LstmParams::zeros(p.width(), p.input());
    let mut dx = vec![0.0; p.input()];
    let mut dh_prev = vec![0.0; p.width()];
    let mut dc_prev = vec![0.0; p.width()];
    lstm_step_backward(&s, p, src, dh, dc, &mut g, &mut dx, &mut dh_prev, &mut dc_prev);
    Ok((g, dx, CellState { h: dh_prev, c: dc_prev }))
}

/// Vector-Jacobian product of one GRU step.
pub fn gru_cell_backward(
    x: &[f64],
    state: &CellState,
    p: &GruParams,
    dh: &[f64],
) -> Result<(GruParams, Vec<f64>, Vec<f64>)> {
    p.check(x, state)?;
    if dh.len() != p.width() {
        return Err(Error::Shape("gru output gradient width".into()));
    }
    let s = gru_step(x, &state.h, p);
    let mut g = GruParams::zeros(p.width(), p.input());
    let mut dx = vec![0.0; p.input()];
    let mut dh_prev = vec![0.0; p.width()];
    gru_step_backward(&s, p, dh, &mut g, &mut dx, &mut dh_prev);
    Ok((g, dx, dh_prev))
}

/// Vector-Jacobian product of a bidirectional layer from zero states.
/// `d_out[t]` is the gradient w.r.t. output step `t` (length `2·width`).
pub fn blstm_layer_backward(
    seq: &[Vec<f64>],
    fwd: &LstmParams,
    bwd: &LstmParams,
    src: HSource,
    d_out: &[Vec<f64>],
) -> Result<(LstmParams, LstmParams, Vec<Vec<f64>>)> {
    blstm_layer_forward(seq, fwd, bwd, src)?;
    if d_out.len() != seq.len() || d_out.iter().any(|d| d.len() != 2 * fwd.width()) {
        return Err(Error::Shape("blstm output gradient shape".into()));
    }
    let (f, b) = blstm_steps(seq, fwd, bwd, src);
    let w = fwd.width();
    let l = seq.len();
    let d_f: Vec<Vec<f64>> = d_out.iter().map(|d| d[..w].to_vec()).collect();
    let d_b: Vec<Vec<f64>> = (0..l).map(|s| d_out[l - 1 - s][w..].to_vec()).collect();
    let mut gf = LstmParams::zeros(w, fwd.input());
    let mut gb = LstmParams::zeros(w, fwd.input());
    let mut dx = lstm_sequence_backward(&f, fwd, src, &d_f, &mut gf);
    let dxb = lstm_sequence_backward(&b, bwd, src, &d_b, &mut gb);
    for (s, v) in dxb.iter().enumerate() {
        for (a, c) in dx[l - 1 - s].iter_mut().zip(v) {
            *a += c;
        }
    }
    Ok((gf, gb, dx))
}

/// Run an LSTM over `seq` from a zero state, returning every step.
pub(crate) fn lstm_sequence(seq: &[Vec<f64>], p: &LstmParams, src: HSource) -> Vec<LstmStep> {
    let w = p.width();
    let mut h = vec![0.0; w];
    let mut c = vec![0.0; w];
    let mut steps = Vec::with_capacity(seq.len());
    for x in seq {
        let s = lstm_step(x, &h, &c, p, src);
        h.clone_from(&s.h);
        c.clone_from(&s.c);
        steps.push(s);
    }
    steps
}

/// BPTT over an LSTM sequence. `d_out[t]` is the gradient w.r.t. `h(t)`;
/// returns the gradient w.r.t. each input.
pub(crate) fn lstm_sequence_backward(
    steps: &[LstmStep],
    p: &LstmParams,
    src: HSource,
    d_out: &[Vec<f64>],
    g: &mut LstmParams,
) -> Vec<Vec<f64>> {
    let w = p.width();
    let d = p.input();
    let mut dh_next = vec![0.0; w];
    let mut dc_next = vec![0.0; w];
    let mut dh_prev = vec![0.0; w];
    let mut dc_prev = vec![0.0; w];
    let mut dxs = vec![vec![0.0; d]; steps.len()];
    for t in (0..steps.len()).rev() {
        let dh: Vec<f64> = d_out[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        lstm_step_backward(
            &steps[t],
            p,
            src,
            &dh,
            &dc_next,
            g,
            &mut dxs[t],
            &mut dh_prev,
            &mut dc_prev,
        );
        std::mem::swap(&mut dh_next, &mut dh_prev);
        std::mem::swap(&mut dc_next, &mut dc_prev);
    }
    dxs
}

pub(crate) fn gru_sequence(seq: &[Vec<f64>], p: &GruParams) -> Vec<GruStep> {
    let mut h = vec![0.0; p.width()];
    let mut steps = Vec::with_capacity(seq.len());
    for x in seq {
        let s = gru_step(x, &h, p);
        h.clone_from(&s.h);
        steps.push(s);
    }
    steps
}

pub(crate) fn gru_sequence_backward(
    steps: &[GruStep],
    p: &GruParams,
    d_out: &[Vec<f64>],
    g: &mut GruParams,
) -> Vec<Vec<f64>> {
    let w = p.width();
    let mut dh_next = vec![0.0; w];
    let mut dh_prev = vec![0.0; w];
    let mut dxs = vec![vec![0.0; p.input()]; steps.len()];
    for t in (0..steps.len()).rev() {
        let dh: Vec<f64> = d_out[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        gru_step_backward(&steps[t], p, &dh, g, &mut dxs[t], &mut dh_prev);
        std::mem::swap(&mut dh_next, &mut dh_prev);
    }
    dxs
}

/// Bidirectional LSTM layer: output at step `t` is `[h_fwd(t); h_bwd(t)]`, the
/// backward direction having read the sequence from the end down to `t`.
pub fn blstm_layer_forward(
    seq: &[Vec<f64>],
    fwd: &LstmParams,
    bwd: &LstmParams,
    src: HSource,
) -> Result<Vec<Vec<f64>>> {
    if fwd.width() != bwd.width() || fwd.input() != bwd.input() {
        return Err(Error::Shape("blstm directions differ in shape".into()));
    }
    if let Some(x) = seq.iter().find(|x| x.len() != fwd.input()) {
        return Err(Error::Shape(format!(
            "blstm input width {} expected {}",
            x.len(),
            fwd.input()
        )));
    }
    let (f, b) = blstm_steps(seq, fwd, bwd, src);
    let out = merge_blstm(&f, &b);
    if out.iter().any(|v| !finite(v)) {
        return Err(Error::NonFinite("blstm layer"));
    }
    Ok(out)
}

pub(crate) fn blstm_steps(
    seq: &[Vec<f64>],
    fwd: &LstmParams,
    bwd: &LstmParams,
    src: HSource,
) -> (Vec<LstmStep>, Vec<LstmStep>) {
    let rev: Vec<Vec<f64>> = seq.iter().rev().cloned().collect();
    (lstm_sequence(seq, fwd, src), lstm_sequence(&rev, bwd, src))
}

pub(crate) fn merge_blstm(f: &[LstmStep], b: &[LstmStep]) -> Vec<Vec<f64>> {
    let l = f.len();
    (0..l)
        .map(|t| {
            let mut v = f[t].h.clone();
            v.extend_from_slice(&b[l - 1 - t].h);
            v
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lstm_zero_params() {
        let p = LstmParams::zeros(3, 2);
        let state = CellState {
            h: vec![0.0; 3],
            c: vec![1.0, -2.0, 4.0],
        };
        let out = lstm_cell_forward(&[0.3, -0.7], &state, &p, HSource::Candidate).unwrap();
        assert_eq!(out.c, vec![0.5, -1.0, 2.0]);
        assert_eq!(out.h, vec![0.0; 3]);
    }

    #[test]
    fn lstm_forget_saturation() {
        let mut p = LstmParams::zeros(2, 1);
        p.b_f.fill(100.0);
        let state = CellState {
            h: vec![0.0; 2],
            c: vec![0.25, -3.0],
        };
        let out = lstm_cell_forward(&[1.0], &state, &p, HSource::Cell).unwrap();
        for (a, b) in out.c.iter().zip(&state.c) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_zero_params() {
        let p = GruParams::zeros(3, 2);
        let state = CellState {
            h: vec![1.0, -2.0, 0.5],
            c: vec![],
        };
        let out = gru_cell_forward(&[0.1, 0.2], &state, &p).unwrap();
        assert_eq!(out.h, vec![0.5, -1.0, 0.25]);
    }

    #[test]
    fn gru_update_gate_shut() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = GruParams::init(3, 2, &mut rng);
        p.b_z.fill(100.0);
        let state = CellState {
            h: vec![0.3, -0.1, 0.9],
            c: vec![],
        };
        let out = gru_cell_forward(&[1.0, -1.0], &state, &p).unwrap();
        for (a, b) in out.h.iter().zip(&state.h) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn shape_mismatch_is_error() {
        let p = LstmParams::zeros(3, 2);
        assert!(lstm_cell_forward(&[1.0], &CellState::lstm(3), &p, HSource::Cell).is_err());
        let g = GruParams::zeros(3, 2);
        assert!(gru_cell_forward(&[1.0, 2.0], &CellState::gru(2), &g).is_err());
    }

    #[test]
    fn blstm_single_step_equal_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = LstmParams::init(3, 2, &mut rng);
        let x = vec![0.4, -1.2];
        let out = blstm_layer_forward(std::slice::from_ref(&x), &p, &p, HSource::Candidate).unwrap();
        let single = lstm_cell_forward(&x, &CellState::lstm(3), &p, HSource::Candidate).unwrap();
        let mut expected = single.h.clone();
        expected.extend(single.h);
        assert_eq!(out, vec![expected]);
    }

    #[test]
    fn blstm_palindrome_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = LstmParams::init(2, 2, &mut rng);
        let seq = vec![
            vec![0.1, 0.5],
            vec![-0.3, 0.2],
            vec![0.7, 0.7],
            vec![-0.3, 0.2],
            vec![0.1, 0.5],
        ];
        let out = blstm_layer_forward(&seq, &p, &p, HSource::Cell).unwrap();
        let l = out.len();
        for t in 0..l {
            let mirror = &out[l - 1 - t];
            assert_eq!(&out[t][..2], &mirror[2..]);
            assert_eq!(&out[t][2..], &mirror[..2]);
        }
    }
}
