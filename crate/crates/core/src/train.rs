//! Windowing, z-score scaling, the early-stopped training loop and grid search.

use std::io::Write;
use std::ops::Range;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeaturePanel;
use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_params, write_params};
use crate::nn::{
    adam_step, backward_into, forward_traced, predict, AdamConfig, AdamState, HSource, Mode, ModelKind, ModelParams,
};
use crate::split::{SplitSet, TrainSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HyperParams {
    pub width: usize,
    pub lag: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub widths: Vec<usize>,
    pub lags: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            widths: vec![32, 64, 128],
            lags: vec![5, 7, 9],
        }
    }
}

impl Grid {
    /// Grid points in width-major order; the position is the cell index.
    pub fn points(&self) -> Vec<HyperParams> {
        self.widths
            .iter()
            .flat_map(|&width| self.lags.iter().map(move |&lag| HyperParams { width, lag }))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: f64,
    pub sd: f64,
    /// Panel rows the statistics were computed over (first..last+1).
    pub fit_span: Range<usize>,
}

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            mean: 0.0,
            sd: 1.0,
            fit_span: 0..0,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.sd
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.sd + self.mean
    }
}

/// Sample mean and (n−1) standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn fit_normalizer(values: &[f64]) -> Result<Normalizer> {
    fit_normalizer_span(values, 0..values.len())
}

pub fn fit_normalizer_span(values: &[f64], fit_span: Range<usize>) -> Result<Normalizer> {
    if values.len() < 2 {
        return Err(Error::Degenerate(format!(
            "normalizer needs at least 2 values, got {}",
            values.len()
        )));
    }
    let (mean, sd) = mean_sd(values);
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Degenerate("zero variance in normalizer fit".into()));
    }
    Ok(Normalizer { mean, sd, fit_span })
}

/// Per-feature and target normalizers for one panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelScaler {
    pub features: Vec<Normalizer>,
    pub target: Normalizer,
}

impl PanelScaler {
    pub fn identity(n_features: usize) -> Self {
        Self {
            features: vec![Normalizer::identity(); n_features],
            target: Normalizer::identity(),
        }
    }

    /// Fit on the given panel rows. A feature that is constant over those rows
    /// is only centred (sd 1); a constant target is an error.
    pub fn fit(panel: &FeaturePanel, rows: &[usize]) -> Result<Self> {
        let span = match (rows.iter().min(), rows.iter().max()) {
            (Some(&a), Some(&b)) => a..b + 1,
            _ => return Err(Error::Degenerate("no rows to fit scaler on".into())),
        };
        let target: Vec<f64> = rows.iter().map(|&r| panel.target[r]).collect();
        let target = fit_normalizer_span(&target, span.clone())?;
        let features = (0..panel.n_features())
            .map(|k| {
                let col: Vec<f64> = rows.iter().map(|&r| panel.features[r][k]).collect();
                fit_normalizer_span(&col, span.clone()).unwrap_or_else(|_| {
                    warn!(
                        "feature `{}` is constant over the fit rows; centring only",
                        panel.feature_names[k]
                    );
                    Normalizer {
                        mean: mean_sd(&col).0,
                        sd: 1.0,
                        fit_span: span.clone(),
                    }
                })
            })
            .collect();
        Ok(Self { features, target })
    }

    pub fn scale(&self, w: &Window) -> Window {
        Window {
            inputs: w
                .inputs
                .iter()
                .map(|row| row.iter().zip(&self.features).map(|(x, n)| n.apply(*x)).collect())
                .collect(),
            target: self.target.apply(w.target),
            row: w.row,
        }
    }
}

/// One `lag × features` input block and the index level it forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub inputs: Vec<Vec<f64>>,
    pub target: f64,
    /// Panel row of the target.
    pub row: usize,
}

/// Target rows whose `lag` predecessors all sit in the same contiguous run of
/// `rows` (which must be strictly increasing).
pub fn window_targets(rows: &[usize], lag: usize) -> Vec<usize> {
    assert!(lag >= 1, "lag must be positive");
    let mut out = Vec::new();
    let mut run = 0usize;
    for (i, &r) in rows.iter().enumerate() {
        if i > 0 && r == rows[i - 1] + 1 {
            run += 1;
        } else {
            run = 0;
        }
        if run >= lag {
            out.push(r);
        }
    }
    out
}

fn window_at(panel: &FeaturePanel, t: usize, lag: usize) -> Window {
    Window {
        inputs: panel.features[t - lag..t].to_vec(),
        target: panel.target[t],
        row: t,
    }
}

/// Training windows: inputs never leave the contiguous segment of `rows` that
/// holds the target.
pub fn make_windows(panel: &FeaturePanel, rows: &[usize], lag: usize) -> Vec<Window> {
    window_targets(rows, lag)
        .into_iter()
        .map(|t| window_at(panel, t, lag))
        .collect()
}

/// Forecast windows: every target row in `rows` with at least `lag` panel rows
/// before it gets a window over the `lag` panel rows immediately preceding it.
pub fn make_context_windows(panel: &FeaturePanel, rows: &[usize], lag: usize) -> Vec<Window> {
    assert!(lag >= 1, "lag must be positive");
    rows.iter()
        .filter(|&&t| t >= lag && t < panel.len())
        .map(|&t| window_at(panel, t, lag))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub patience: usize,
    pub l2: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub h_source: HSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            patience: 10,
            l2: 0.01,
            dropout: 0.2,
            max_epochs: 200,
            batch: 32,
            seed: 0,
            h_source: HSource::Candidate,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch == 0 || !(0.0..1.0).contains(&self.dropout) || !(self.l2 >= 0.0) {
            return Err(Error::Config(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

/// Epoch 0 is the untrained model. Later epochs report the mean data loss of
/// the epoch's mini-batches (train mode) and the eval-mode validation MSE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub hyper: HyperParams,
    pub params: ModelParams,
    pub scaler: PanelScaler,
    pub trace: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub seed: u64,
}

impl TrainedModel {
    pub fn best_val_mse(&self) -> f64 {
        self.trace[self.best_epoch].val_mse
    }

    /// Index-level forecasts for `rows`, in the panel's units. Rows without
    /// `lag` predecessors are skipped; the returned pairs are `(row, Ŝ)`.
    pub fn forecast(&self, panel: &FeaturePanel, rows: &[usize]) -> Result<Vec<(usize, f64)>> {
        make_context_windows(panel, rows, self.hyper.lag)
            .iter()
            .map(|w| {
                let z = predict(&self.scaler.scale(w).inputs, &self.params)?;
                Ok((w.row, self.scaler.target.invert(z)))
            })
            .collect()
    }
}

/// Eval-mode mean squared error over (already scaled) windows.
pub fn window_mse(p: &ModelParams, windows: &[Window]) -> Result<f64> {
    let mut sum = 0.0;
    for w in windows {
        let e = predict(&w.inputs, p)? - w.target;
        sum += e * e;
    }
    Ok(sum / windows.len() as f64)
}

/// Train on scaled windows. The returned model carries an identity scaler.
pub fn train_model(
    kind: ModelKind,
    hp: HyperParams,
    train: &[Window],
    val: &[Window],
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.check()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Degenerate(format!(
            "need training and validation windows, got {} and {}",
            train.len(),
            val.len()
        )));
    }
    let d = train[0].inputs[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(kind, hp.width, d, cfg.h_source, &mut rng);
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(&params);
    let mode = Mode::Train { dropout: cfg.dropout };

    let diverged = |epoch| Error::Diverged { epoch };
    let val0 = window_mse(&params, val).map_err(|_| diverged(0))?;
    let train0 = window_mse(&params, train).map_err(|_| diverged(0))?;
    let mut trace = vec![EpochRecord {
        epoch: 0,
        train_mse: train0,
        val_mse: val0,
    }];
    let mut best = (0usize, val0, params.clone());
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut grad = params.zeros_like();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut data_loss = 0.0;
        for batch in order.chunks(cfg.batch) {
            grad.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let w = &train[i];
                let tr = forward_traced(&w.inputs, &params, mode, Some(&mut rng)).map_err(|_| diverged(epoch))?;
                let err = tr.pred - w.target;
                data_loss += err * err;
                backward_into(&params, &tr, 2.0 * err * scale, &mut grad);
            }
            if cfg.l2 != 0.0 {
                grad.add_scaled(&params, 2.0 * cfg.l2);
            }
            adam_step(&mut params, &grad, &mut adam, &adam_cfg).map_err(|_| diverged(epoch))?;
        }
        let train_mse = data_loss / train.len() as f64;
        let val_mse = window_mse(&params, val).map_err(|_| diverged(epoch))?;
        if !train_mse.is_finite() || !val_mse.is_finite() {
            return Err(diverged(epoch));
        }
        trace.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
        });
        if val_mse < best.1 {
            best = (epoch, val_mse, params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainedModel {
        kind,
        hyper: hp,
        params: best.2,
        scaler: PanelScaler::identity(d),
        trace,
        best_epoch: best.0,
        seed: cfg.seed,
    })
}

/// Fit scaler and windows from a split, then train. Training rows and the
/// scaler's fit span must lie strictly before the first OOS row.
pub fn train_on_split(
    panel: &FeaturePanel,
    split: &SplitSet,
    set: TrainSet,
    kind: ModelKind,
    hp: HyperParams,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let rows = split.train_rows(set);
    if let Some(&first_oos) = split.oos.iter().min() {
        if rows.iter().any(|&r| r >= first_oos) {
            return Err(Error::Split {
                constraint: "leakage",
                reason: format!("{} rows reach the OOS range starting at {first_oos}", set.as_str()),
            });
        }
    }
    let scaler = PanelScaler::fit(panel, rows)?;
    let train: Vec<Window> = make_windows(panel, rows, hp.lag)
        .iter()
        .map(|w| scaler.scale(w))
        .collect();
    let val: Vec<Window> = make_context_windows(panel, &split.validation, hp.lag)
        .iter()
        .map(|w| scaler.scale(w))
        .collect();
    let mut model = train_model(kind, hp, &train, &val, cfg)?;
    model.scaler = scaler;
    Ok(model)
}

/// Evaluate every grid point (in parallel) and keep the lowest score; ties go
/// to the smaller width, then the smaller lag. Failing cells are skipped with a
/// warning. `eval` receives the point and its cell index.
pub fn select_best<T, F>(grid: &Grid, eval: F) -> Result<(HyperParams, T)>
where
    T: Send,
    F: Fn(HyperParams, usize) -> Result<(f64, T)> + Sync,
{
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::Config("empty hyper-parameter grid".into()));
    }
    let results: Vec<(HyperParams, Result<(f64, T)>)> = points
        .par_iter()
        .enumerate()
        .map(|(i, &hp)| (hp, eval(hp, i)))
        .collect();
    let n = results.len();
    let mut best: Option<(HyperParams, f64, T)> = None;
    let mut last_err = None;
    for (hp, r) in results {
        match r {
            Ok((score, t)) if score.is_finite() => {
                let better = match &best {
                    None => true,
                    Some((bhp, bs, _)) => score < *bs || (score == *bs && (hp.width, hp.lag) < (bhp.width, bhp.lag)),
                };
                if better {
                    best = Some((hp, score, t));
                }
            }
            Ok((score, _)) => warn!("grid cell w={} l={} scored {score}; skipped", hp.width, hp.lag),
            Err(e) => {
                warn!("grid cell w={} l={} failed: {e}; skipped", hp.width, hp.lag);
                last_err = Some(e);
            }
        }
    }
    match (best, last_err) {
        (Some((hp, _, t)), _) => Ok((hp, t)),
        // a one-point grid reports its own error
        (None, Some(e)) if n == 1 => Err(e),
        (None, _) => Err(Error::AllCellsFailed(n)),
    }
}

/// Grid search over a split; cell `i` trains with seed `cfg.seed ^ i`.
pub fn grid_search(
    panel: &FeaturePanel,
    split: &SplitSet,
    set: TrainSet,
    kind: ModelKind,
    grid: &Grid,
    cfg: &TrainConfig,
) -> Result<(HyperParams, TrainedModel)> {
    select_best(grid, |hp, i| {
        let cell_cfg = TrainConfig {
            seed: cfg.seed ^ i as u64,
            ..cfg.clone()
        };
        let m = train_on_split(panel, split, set, kind, hp, &cell_cfg)?;
        Ok((m.best_val_mse(), m))
    })
}

pub fn write_trace_csv<W: Write>(trace: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::InvalidData(format!("trace csv: {e}"));
    w.write_record(["epoch", "train_mse", "val_mse"]).map_err(err)?;
    for r in trace {
        w.write_record([r.epoch.to_string(), r.train_mse.to_string(), r.val_mse.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::InvalidData(format!("trace csv: {e}")))
}

const MODEL_MAGIC: &str = "cyclebench-model 1";

fn write_normalizer<W: Write>(out: &mut W, tag: &str, n: &Normalizer) -> std::io::Result<()> {
    writeln!(
        out,
        "normalizer {tag} {} {} {} {}",
        n.mean, n.sd, n.fit_span.start, n.fit_span.end
    )
}

/// Text checkpoint:
///
/// ```text
/// cyclebench-model 1
/// model kind=<k> width=<w> lag=<l> seed=<s> best_epoch=<e>
/// normalizer target <mean> <sd> <span start> <span end>
/// normalizer feature <mean> <sd> <span start> <span end>   (one per feature)
/// params ...                                               (see nn::checkpoint)
/// end params
/// ```
///
/// The training trace is not part of the checkpoint.
pub fn write_model<W: Write>(m: &TrainedModel, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{MODEL_MAGIC}")?;
    writeln!(
        out,
        "model kind={} width={} lag={} seed={} best_epoch={}",
        m.kind, m.hyper.width, m.hyper.lag, m.seed, m.best_epoch
    )?;
    write_normalizer(&mut out, "target", &m.scaler.target)?;
    for n in &m.scaler.features {
        write_normalizer(&mut out, "feature", n)?;
    }
    write_params(&m.params, &mut out)
}

fn ckpt_err(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn parse_normalizer(line: &str, tag: &str) -> Result<Normalizer> {
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 6 || parts[0] != "normalizer" || parts[1] != tag {
        return Err(ckpt_err(format!("expected `normalizer {tag} ...`, got `{line}`")));
    }
    let f = |s: &str| s.parse::<f64>().map_err(|_| ckpt_err(format!("bad number `{s}`")));
    let u = |s: &str| s.parse::<usize>().map_err(|_| ckpt_err(format!("bad index `{s}`")));
    Ok(Normalizer {
        mean: f(parts[2])?,
        sd: f(parts[3])?,
        fit_span: u(parts[4])?..u(parts[5])?,
    })
}

/// Read a checkpoint written by [`write_model`]. The trace comes back empty
/// except for a placeholder at `best_epoch` so [`TrainedModel::best_val_mse`]
/// stays callable (it reports NaN).
pub fn read_model(text: &str) -> Result<TrainedModel> {
    let mut lines = text.lines();
    if lines.next() != Some(MODEL_MAGIC) {
        return Err(ckpt_err("not a cyclebench model checkpoint"));
    }
    let header = lines.next().ok_or_else(|| ckpt_err("missing model header"))?;
    let get = |key: &str| -> Result<&str> {
        header
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| ckpt_err(format!("missing `{key}`")))
    };
    let num = |key: &str| -> Result<u64> { get(key)?.parse().map_err(|_| ckpt_err(format!("bad `{key}`"))) };
    let kind: ModelKind = get("kind")?.parse()?;
    let hyper = HyperParams {
        width: num("width")? as usize,
        lag: num("lag")? as usize,
    };
    let seed = num("seed")?;
    let best_epoch = num("best_epoch")? as usize;
    let target = parse_normalizer(
        lines.next().ok_or_else(|| ckpt_err("missing target normalizer"))?,
        "target",
    )?;
    let mut features = Vec::new();
    let mut rest = lines.peekable();
    while rest.peek().is_some_and(|l| l.starts_with("normalizer ")) {
        features.push(parse_normalizer(rest.next().unwrap(), "feature")?);
    }
    let params = read_params(&mut rest)?;
    if params.kind() != kind || params.width() != hyper.width || params.input() != features.len() {
        return Err(ckpt_err("model header disagrees with params block"));
    }
    let mut trace = vec![
        EpochRecord {
            epoch: 0,
            train_mse: f64::NAN,
            val_mse: f64::NAN
        };
        best_epoch + 1
    ];
    for (i, r) in trace.iter_mut().enumerate() {
        r.epoch = i;
    }
    Ok(TrainedModel {
        kind,
        hyper,
        params,
        scaler: PanelScaler { features, target },
        trace,
        best_epoch,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn toy_panel(n: usize, f: impl Fn(usize) -> f64) -> FeaturePanel {
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        FeaturePanel {
            dates: (0..n).map(|i| start + chrono::Days::new(i as u64)).collect(),
            feature_names: vec!["close".into()],
            features: (0..n).map(|i| vec![f(i)]).collect(),
            target: (0..n).map(&f).collect(),
            recession: vec![false; n],
            rf: None,
        }
    }

    #[test]
    fn contiguous_windows() {
        let rows: Vec<usize> = (0..10).collect();
        let t = window_targets(&rows, 5);
        assert_eq!(t, vec![5, 6, 7, 8, 9]);
        assert_eq!(window_targets(&rows, 1), (1..10).collect::<Vec<_>>());
    }

    #[test]
    fn windows_do_not_span_gaps() {
        let rows: Vec<usize> = (0..4).chain(10..14).collect();
        assert_eq!(window_targets(&rows, 2), vec![2, 3, 12, 13]);
        assert!(window_targets(&[0, 1, 2], 3).is_empty());
    }

    #[test]
    fn window_contents() {
        let panel = toy_panel(8, |i| i as f64);
        let w = &make_windows(&panel, &[2, 3, 4, 5], 2)[0];
        assert_eq!(w.row, 4);
        assert_eq!(w.inputs, vec![vec![2.0], vec![3.0]]);
        assert_eq!(w.target, 4.0);
        let ctx = make_context_windows(&panel, &[1, 6], 2);
        assert_eq!(ctx.len(), 1);
        assert_eq!(ctx[0].inputs, vec![vec![4.0], vec![5.0]]);
    }

    #[test]
    fn normalizer_hand_values() {
        let n = fit_normalizer(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((n.mean, n.sd), (2.0, 1.0));
        assert_eq!(n.apply(3.0), 1.0);
        assert!(fit_normalizer(&[4.0, 4.0, 4.0]).is_err());
        assert!(fit_normalizer(&[4.0]).is_err());
    }

    #[test]
    fn normalizer_round_trip() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..50).map(|_| rng.random_range(-1e3..1e3)).collect();
        let n = fit_normalizer(&v).unwrap();
        for x in v {
            assert!((n.invert(n.apply(x)) - x).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    fn ar_windows(n: usize, lag: usize) -> Vec<Window> {
        let panel = toy_panel(n, |i| 0.9f64.powi(i as i32 % 40) * if i % 80 < 40 { 1.0 } else { -1.0 });
        let rows: Vec<usize> = (0..n).collect();
        make_windows(&panel, &rows, lag)
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            max_epochs: 15,
            batch: 8,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_improves_and_restores_best() {
        let w = ar_windows(160, 3);
        let (train, val) = w.split_at(120);
        let hp = HyperParams { width: 8, lag: 3 };
        let m = train_model(ModelKind::Gru, hp, train, val, &quick_cfg()).unwrap();
        assert!(m.best_val_mse() < m.trace[0].val_mse);
        let min = m.trace.iter().map(|r| r.val_mse).fold(f64::INFINITY, f64::min);
        assert_eq!(m.best_val_mse(), min);
        assert_eq!(window_mse(&m.params, val).unwrap(), min);
        assert!(m.best_epoch < m.trace.len());
    }

    #[test]
    fn patience_zero_stops_at_first_stall() {
        let w = ar_windows(120, 2);
        let (train, val) = w.split_at(90);
        let cfg = TrainConfig {
            patience: 0,
            lr: 0.5,
            max_epochs: 50,
            ..quick_cfg()
        };
        let m = train_model(ModelKind::Lstm, HyperParams { width: 3, lag: 2 }, train, val, &cfg).unwrap();
        let last = m.trace.len() - 1;
        let best_before = m.trace[..last].iter().map(|r| r.val_mse).fold(f64::INFINITY, f64::min);
        if last < cfg.max_epochs {
            assert!(m.trace[last].val_mse >= best_before);
            for k in 1..last {
                assert!(m.trace[k].val_mse < m.trace[..k].iter().map(|r| r.val_mse).fold(f64::INFINITY, f64::min));
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let w = ar_windows(100, 2);
        let (train, val) = w.split_at(70);
        let hp = HyperParams { width: 4, lag: 2 };
        let a = train_model(ModelKind::Blstm, hp, train, val, &quick_cfg()).unwrap();
        let b = train_model(ModelKind::Blstm, hp, train, val, &quick_cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_rows_after_oos_are_rejected() {
        let panel = toy_panel(60, |i| 10.0 + (i as f64 * 0.3).sin());
        let split = SplitSet {
            iswr: (0..20).collect(),
            iswor: (30..50).collect(),
            validation: (50..55).collect(),
            oos: (40..45).chain(55..60).collect(),
        };
        let cfg = quick_cfg();
        let hp = HyperParams { width: 2, lag: 2 };
        let e = train_on_split(&panel, &split, TrainSet::Iswor, ModelKind::Gru, hp, &cfg).unwrap_err();
        assert!(matches!(
            e,
            Error::Split {
                constraint: "leakage",
                ..
            }
        ));
        // validation after part of OOS is allowed
        assert!(train_on_split(&panel, &split, TrainSet::Iswr, ModelKind::Gru, hp, &cfg).is_ok());
    }

    #[test]
    fn select_best_argmin_and_ties() {
        let grid = Grid::default();
        let stub = |hp: HyperParams, _| -> Result<(f64, ())> {
            let s = match (hp.width, hp.lag) {
                (32, 5) => 0.2,
                (64, 5) => 0.1,
                (128, 9) => 0.1,
                (32, 7) => return Err(Error::Diverged { epoch: 3 }),
                _ => 0.5,
            };
            Ok((s, ()))
        };
        let (hp, _) = select_best(&grid, stub).unwrap();
        assert_eq!(hp, HyperParams { width: 64, lag: 5 });
        let single = Grid {
            widths: vec![16],
            lags: vec![3],
        };
        assert_eq!(
            select_best(&single, |hp, _| Ok((1.0, hp))).unwrap().1,
            HyperParams { width: 16, lag: 3 }
        );
        let all_fail = select_best(&grid, |_, _| -> Result<(f64, ())> { Err(Error::Diverged { epoch: 1 }) });
        assert!(matches!(all_fail, Err(Error::AllCellsFailed(9))));
        assert_eq!(grid.points().len(), 9);
    }

    #[test]
    fn checkpoint_round_trip() {
        let w = ar_windows(60, 2);
        let (train, val) = w.split_at(40);
        let mut m = train_model(
            ModelKind::Gru,
            HyperParams { width: 3, lag: 2 },
            train,
            val,
            &TrainConfig {
                max_epochs: 2,
                ..quick_cfg()
            },
        )
        .unwrap();
        m.scaler.features[0] = Normalizer {
            mean: 0.125,
            sd: 3.5,
            fit_span: 4..40,
        };
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        let back = read_model(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.params, m.params);
        assert_eq!(back.scaler, m.scaler);
        assert_eq!(
            (back.kind, back.hyper, back.seed, back.best_epoch),
            (m.kind, m.hyper, m.seed, m.best_epoch)
        );
    }

    #[test]
    fn trace_csv_header() {
        let mut buf = Vec::new();
        let t = [EpochRecord {
            epoch: 0,
            train_mse: 1.5,
            val_mse: 2.0,
        }];
        write_trace_csv(&t, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,train_mse,val_mse\n0,1.5,2\n");
    }
}
