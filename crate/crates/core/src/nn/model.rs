//! Two recurrent layers of equal width followed by a one-unit dense head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cell::{
    blstm_steps, gru_sequence, gru_sequence_backward, lstm_sequence, lstm_sequence_backward, merge_blstm, GruParams,
    GruStep, HSource, LstmParams, LstmStep,
};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    Blstm,
    Gru,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Lstm, ModelKind::Blstm, ModelKind::Gru];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Blstm => "blstm",
            ModelKind::Gru => "gru",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(ModelKind::Lstm),
            "blstm" => Ok(ModelKind::Blstm),
            "gru" => Ok(ModelKind::Gru),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Lstm(LstmParams),
    Blstm { fwd: LstmParams, bwd: LstmParams },
    Gru(GruParams),
}

impl LayerParams {
    pub fn init<R: Rng + ?Sized>(kind: ModelKind, width: usize, input: usize, rng: &mut R) -> Self {
        match kind {
            ModelKind::Lstm => LayerParams::Lstm(LstmParams::init(width, input, rng)),
            ModelKind::Blstm => LayerParams::Blstm {
                fwd: LstmParams::init(width, input, rng),
                bwd: LstmParams::init(width, input, rng),
            },
            ModelKind::Gru => LayerParams::Gru(GruParams::init(width, input, rng)),
        }
    }

    pub fn zeros(kind: ModelKind, width: usize, input: usize) -> Self {
        match kind {
            ModelKind::Lstm => LayerParams::Lstm(LstmParams::zeros(width, input)),
            ModelKind::Blstm => LayerParams::Blstm {
                fwd: LstmParams::zeros(width, input),
                bwd: LstmParams::zeros(width, input),
            },
            ModelKind::Gru => LayerParams::Gru(GruParams::zeros(width, input)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            LayerParams::Lstm(_) => ModelKind::Lstm,
            LayerParams::Blstm { .. } => ModelKind::Blstm,
            LayerParams::Gru(_) => ModelKind::Gru,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            LayerParams::Lstm(p) => p.width(),
            LayerParams::Blstm { fwd, .. } => fwd.width(),
            LayerParams::Gru(p) => p.width(),
        }
    }

    pub fn input(&self) -> usize {
        match self {
            LayerParams::Lstm(p) => p.input(),
            LayerParams::Blstm { fwd, .. } => fwd.input(),
            LayerParams::Gru(p) => p.input(),
        }
    }

    pub fn out_width(&self) -> usize {
        match self {
            LayerParams::Blstm { .. } => 2 * self.width(),
            _ => self.width(),
        }
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        match self {
            LayerParams::Lstm(p) => p.named().into_iter().map(|(n, t)| (n.to_string(), t)).collect(),
            LayerParams::Gru(p) => p.named().into_iter().map(|(n, t)| (n.to_string(), t)).collect(),
            LayerParams::Blstm { fwd, bwd } => fwd
                .named()
                .into_iter()
                .map(|(n, t)| (format!("fwd.{n}"), t))
                .chain(bwd.named().into_iter().map(|(n, t)| (format!("bwd.{n}"), t)))
                .collect(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            LayerParams::Lstm(p) => p.named_mut().into_iter().map(|(_, t)| t).collect(),
            LayerParams::Gru(p) => p.named_mut().into_iter().map(|(_, t)| t).collect(),
            LayerParams::Blstm { fwd, bwd } => fwd
                .named_mut()
                .into_iter()
                .chain(bwd.named_mut())
                .map(|(_, t)| t)
                .collect(),
        }
    }
}

pub(crate) enum LayerTrace {
    Lstm(Vec<LstmStep>),
    Blstm(Vec<LstmStep>, Vec<LstmStep>),
    Gru(Vec<GruStep>),
}

fn layer_forward(p: &LayerParams, seq: &[Vec<f64>], src: HSource) -> (Vec<Vec<f64>>, LayerTrace) {
    match p {
        LayerParams::Lstm(lp) => {
            let steps = lstm_sequence(seq, lp, src);
            let out = steps.iter().map(|s| s.h.clone()).collect();
            (out, LayerTrace::Lstm(steps))
        }
        LayerParams::Gru(gp) => {
            let steps = gru_sequence(seq, gp);
            let out = steps.iter().map(|s| s.h.clone()).collect();
            (out, LayerTrace::Gru(steps))
        }
        LayerParams::Blstm { fwd, bwd } => {
            let (f, b) = blstm_steps(seq, fwd, bwd, src);
            (merge_blstm(&f, &b), LayerTrace::Blstm(f, b))
        }
    }
}

fn layer_backward(
    p: &LayerParams,
    trace: &LayerTrace,
    src: HSource,
    d_out: &[Vec<f64>],
    g: &mut LayerParams,
) -> Vec<Vec<f64>> {
    match (p, trace, g) {
        (LayerParams::Lstm(lp), LayerTrace::Lstm(steps), LayerParams::Lstm(lg)) => {
            lstm_sequence_backward(steps, lp, src, d_out, lg)
        }
        (LayerParams::Gru(gp), LayerTrace::Gru(steps), LayerParams::Gru(gg)) => {
            gru_sequence_backward(steps, gp, d_out, gg)
        }
        (LayerParams::Blstm { fwd, bwd }, LayerTrace::Blstm(fs, bs), LayerParams::Blstm { fwd: gf, bwd: gb }) => {
            let w = fwd.width();
            let l = d_out.len();
            let d_f: Vec<Vec<f64>> = d_out.iter().map(|d| d[..w].to_vec()).collect();
            let d_b: Vec<Vec<f64>> = (0..l).map(|s| d_out[l - 1 - s][w..].to_vec()).collect();
            let mut dx = lstm_sequence_backward(fs, fwd, src, &d_f, gf);
            let dxb = lstm_sequence_backward(bs, bwd, src, &d_b, gb);
            for (s, v) in dxb.iter().enumerate() {
                for (a, b) in dx[l - 1 - s].iter_mut().zip(v) {
                    *a += b;
                }
            }
            dx
        }
        _ => unreachable!("gradient structure mirrors params"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Eval,
    /// Inverted dropout on the first layer's outputs at the given rate.
    Train {
        dropout: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub h_source: HSource,
    pub layer1: LayerParams,
    pub layer2: LayerParams,
    pub dense_w: Tensor,
    /// Shape `[1]`.
    pub dense_b: Tensor,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(kind: ModelKind, width: usize, input: usize, h_source: HSource, rng: &mut R) -> Self {
        let layer1 = LayerParams::init(kind, width, input, rng);
        let layer2 = LayerParams::init(kind, width, layer1.out_width(), rng);
        let head_in = layer2.out_width();
        let limit = (6.0 / (head_in + 1) as f64).sqrt();
        let dense_w = Tensor::from_vec(
            &[head_in],
            (0..head_in).map(|_| rng.random_range(-limit..limit)).collect(),
        )
        .expect("shape");
        Self {
            h_source,
            layer1,
            layer2,
            dense_w,
            dense_b: Tensor::zeros(&[1]),
        }
    }

    pub fn zeros(kind: ModelKind, width: usize, input: usize, h_source: HSource) -> Self {
        let layer1 = LayerParams::zeros(kind, width, input);
        let layer2 = LayerParams::zeros(kind, width, layer1.out_width());
        let head_in = layer2.out_width();
        Self {
            h_source,
            layer1,
            layer2,
            dense_w: Tensor::zeros(&[head_in]),
            dense_b: Tensor::zeros(&[1]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.kind(), self.width(), self.input(), self.h_source)
    }

    pub fn kind(&self) -> ModelKind {
        self.layer1.kind()
    }

    pub fn width(&self) -> usize {
        self.layer1.width()
    }

    pub fn input(&self) -> usize {
        self.layer1.input()
    }

    pub fn dense_bias(&self) -> f64 {
        self.dense_b.data()[0]
    }

    /// Every tensor with a dotted path such as `layer1.fwd.U_f` or `dense.W`.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self
            .layer1
            .named()
            .into_iter()
            .map(|(n, t)| (format!("layer1.{n}"), t))
            .collect();
        out.extend(self.layer2.named().into_iter().map(|(n, t)| (format!("layer2.{n}"), t)));
        out.push(("dense.W".into(), &self.dense_w));
        out.push(("dense.b".into(), &self.dense_b));
        out
    }

    /// Same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.layer1.tensors_mut();
        out.extend(self.layer2.tensors_mut());
        out.push(&mut self.dense_w);
        out.push(&mut self.dense_b);
        out
    }

    pub fn n_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn sum_sq(&self) -> f64 {
        self.named_tensors().iter().map(|(_, t)| t.sum_sq()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Layer widths agree and the head matches the second layer's output.
    pub fn validate(&self) -> Result<()> {
        let ok = self.layer1.kind() == self.layer2.kind()
            && self.layer1.width() == self.layer2.width()
            && self.layer2.input() == self.layer1.out_width()
            && self.dense_w.len() == self.layer2.out_width()
            && self.dense_b.len() == 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("inconsistent model layer shapes".into()))
        }
    }

    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for (a, (_, b)) in self.tensors_mut().into_iter().zip(other.named_tensors()) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += scale * y;
            }
        }
    }
}

pub(crate) struct Trace {
    l1: LayerTrace,
    mask: Option<Vec<Vec<f64>>>,
    l2: LayerTrace,
    l2_len: usize,
    last: Vec<f64>,
    pub pred: f64,
}

fn check_window(window: &[Vec<f64>], p: &ModelParams) -> Result<()> {
    if window.is_empty() {
        return Err(Error::Shape("empty window".into()));
    }
    if let Some(row) = window.iter().find(|r| r.len() != p.input()) {
        return Err(Error::Shape(format!(
            "window row has {} features, model expects {}",
            row.len(),
            p.input()
        )));
    }
    Ok(())
}

pub(crate) fn forward_traced<R: Rng + ?Sized>(
    window: &[Vec<f64>],
    p: &ModelParams,
    mode: Mode,
    rng: Option<&mut R>,
) -> Result<Trace> {
    check_window(window, p)?;
    let (mut seq1, l1) = layer_forward(&p.layer1, window, p.h_source);
    let mask = match mode {
        Mode::Eval => None,
        Mode::Train { dropout } => {
            let rng = rng.ok_or_else(|| Error::Config("train mode needs an rng".into()))?;
            if !(0.0..1.0).contains(&dropout) {
                return Err(Error::Config(format!("dropout rate {dropout} outside [0,1)")));
            }
            if dropout > 0.0 {
                let scale = 1.0 / (1.0 - dropout);
                let mask: Vec<Vec<f64>> = seq1
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|_| if rng.random::<f64>() < dropout { 0.0 } else { scale })
                            .collect()
                    })
                    .collect();
                for (row, m) in seq1.iter_mut().zip(&mask) {
                    for (v, k) in row.iter_mut().zip(m) {
                        *v *= k;
                    }
                }
                Some(mask)
            } else {
                None
            }
        }
    };
    let (seq2, l2) = layer_forward(&p.layer2, &seq1, p.h_source);
    let last = seq2.last().expect("non-empty").clone();
    let pred = p.dense_bias() + last.iter().zip(p.dense_w.data()).map(|(a, b)| a * b).sum::<f64>();
    if !pred.is_finite() {
        return Err(Error::NonFinite("model forward"));
    }
    Ok(Trace {
        l1,
        mask,
        l2,
        l2_len: seq2.len(),
        last,
        pred,
    })
}

/// Accumulate `dpred · ∂pred/∂θ` into `g`.
pub(crate) fn backward_into(p: &ModelParams, trace: &Trace, dpred: f64, g: &mut ModelParams) {
    for (gw, x) in g.dense_w.data_mut().iter_mut().zip(&trace.last) {
        *gw += dpred * x;
    }
    g.dense_b.data_mut()[0] += dpred;
    let out2 = p.layer2.out_width();
    let mut d2 = vec![vec![0.0; out2]; trace.l2_len];
    for (d, w) in d2.last_mut().unwrap().iter_mut().zip(p.dense_w.data()) {
        *d = dpred * w;
    }
    let mut d1 = layer_backward(&p.layer2, &trace.l2, p.h_source, &d2, &mut g.layer2);
    if let Some(mask) = &trace.mask {
        for (row, m) in d1.iter_mut().zip(mask) {
            for (v, k) in row.iter_mut().zip(m) {
                *v *= k;
            }
        }
    }
    layer_backward(&p.layer1, &trace.l1, p.h_source, &d1, &mut g.layer1);
}

/// Scalar prediction for one `lag × features` window.
pub fn model_forward<R: Rng + ?Sized>(
    window: &[Vec<f64>],
    p: &ModelParams,
    mode: Mode,
    rng: Option<&mut R>,
) -> Result<f64> {
    Ok(forward_traced(window, p, mode, rng)?.pred)
}

pub fn predict(window: &[Vec<f64>], p: &ModelParams) -> Result<f64> {
    model_forward::<rand_chacha::ChaCha8Rng>(window, p, Mode::Eval, None)
}

/// Loss `(pred − target)² + l2·Σθ²` and its exact gradient for the graph
/// executed, dropout masks included.
pub fn model_backward<R: Rng + ?Sized>(
    window: &[Vec<f64>],
    target: f64,
    p: &ModelParams,
    mode: Mode,
    rng: Option<&mut R>,
    l2: f64,
) -> Result<(f64, ModelParams)> {
    let trace = forward_traced(window, p, mode, rng)?;
    let err = trace.pred - target;
    let loss = err * err + l2 * p.sum_sq();
    if !loss.is_finite() {
        return Err(Error::NonFinite("model loss"));
    }
    let mut g = p.zeros_like();
    backward_into(p, &trace, 2.0 * err, &mut g);
    if l2 != 0.0 {
        g.add_scaled(p, 2.0 * l2);
    }
    Ok((loss, g))
}
