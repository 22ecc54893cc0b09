//! Config-driven runs over sub-period × model × train set × feature set cells,
//! comparison tables, the GBM baseline and the recession index.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    align_panel, load_factor_csv, load_price_csv, load_recession_calendar, FactorLoadOptions, FeaturePanel,
    RecessionCalendar,
};
use crate::error::{Error, Result};
use crate::gbm::{compose_prices, fit_gbm, simulate_logreturns_with, Drift};
use crate::metrics::{
    evaluate, panel_erp_history, pearson_correlation, write_metric_rows, zscore_mse, ErpOptions, EvalOptions,
    EvaluationSeries, MetricRow, Normalization, Regime, RegimeMetrics, YearStat,
};
use crate::nn::{HSource, ModelKind};
use crate::recession_index::{recession_index, IndexSeries};
use crate::split::{
    build_subperiods_with, split_subperiod, splits_to_json, validate_split_with, LabeledSplit, SplitPolicy, SplitSet,
    SubPeriod, TrainSet,
};
use crate::train::{grid_search, mean_sd, write_model, write_trace_csv, Grid, HyperParams, TrainConfig, TrainedModel};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(t) => vec![t.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub prices: PathBuf,
    pub factors: PathBuf,
    /// `start,end` CSV; the built-in NBER calendar when absent.
    pub recessions: Option<PathBuf>,
    /// Factor and rf columns are in percent.
    #[serde(default = "yes")]
    pub factors_percent: bool,
    /// rf is an annualized yield to divide by 252.
    #[serde(default)]
    pub rf_annualized: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureConfig {
    pub use_rf: OneOrMany<bool>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            use_rf: OneOrMany::One(false),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub variants: Vec<String>,
    pub seed: u64,
    /// Independent training seeds per cell; metrics are per-cell medians.
    pub seeds: usize,
    pub lr: f64,
    pub patience: usize,
    pub l2: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub batch: usize,
    pub h_source: HSource,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            variants: vec!["iswor".into()],
            seed: t.seed,
            seeds: 1,
            lr: t.lr,
            patience: t.patience,
            l2: t.l2,
            dropout: t.dropout,
            max_epochs: t.max_epochs,
            batch: t.batch,
            h_source: t.h_source,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            patience: self.patience,
            l2: self.l2,
            dropout: self.dropout,
            max_epochs: self.max_epochs,
            batch: self.batch,
            seed: self.seed,
            h_source: self.h_source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub width: Vec<usize>,
    pub lag: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = Grid::default();
        Self {
            width: g.widths,
            lag: g.lags,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmConfig {
    pub seeds: usize,
    pub drift: Drift,
}

impl Default for GbmConfig {
    fn default() -> Self {
        Self {
            seeds: 30,
            drift: Drift::Verbatim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub normalization: Normalization,
    pub symmetric_rf: bool,
    pub gamma: f64,
    pub index_window: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            normalization: Normalization::default(),
            symmetric_rf: false,
            gamma: crate::metrics::RISK_AVERSION,
            index_window: crate::recession_index::DEFAULT_WINDOW,
        }
    }
}

impl EvalConfig {
    pub fn options(&self) -> EvalOptions {
        EvalOptions {
            normalization: self.normalization,
            erp: ErpOptions {
                symmetric_rf: self.symmetric_rf,
            },
            gamma: Some(self.gamma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "all_models")]
    pub models: Vec<ModelKind>,
    /// Worker threads; rayon's default when absent.
    pub threads: Option<usize>,
    pub data: DataConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub gbm: GbmConfig,
    pub out: OutConfig,
}

fn all_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

impl ExperimentConfig {
    /// Parse TOML; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.data.prices);
        fix(&mut cfg.data.factors);
        if let Some(r) = cfg.data.recessions.as_mut() {
            fix(r);
        }
        fix(&mut cfg.out.dir);
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn check(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("at least one model kind is required".into()));
        }
        if self.grid.width.is_empty() || self.grid.lag.is_empty() {
            return Err(Error::Config("grid.width and grid.lag must be non-empty".into()));
        }
        if self.grid.width.contains(&0) || self.grid.lag.contains(&0) {
            return Err(Error::Config("grid values must be positive".into()));
        }
        if self.train.seeds == 0 {
            return Err(Error::Config("train.seeds must be at least 1".into()));
        }
        if self.features.use_rf.to_vec().is_empty() {
            return Err(Error::Config("features.use_rf must list at least one value".into()));
        }
        self.train_sets()?;
        self.train.train_config().check()
    }

    pub fn train_sets(&self) -> Result<Vec<TrainSet>> {
        if self.train.variants.is_empty() {
            return Err(Error::Config("train.variants must be non-empty".into()));
        }
        let mut v: Vec<TrainSet> = self.train.variants.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        v.sort();
        v.dedup();
        Ok(v)
    }

    pub fn rf_variants(&self) -> Vec<bool> {
        let mut v = self.features.use_rf.to_vec();
        v.sort();
        v.dedup();
        v
    }

    pub fn grid(&self) -> Grid {
        Grid {
            widths: self.grid.width.clone(),
            lags: self.grid.lag.clone(),
        }
    }
}

pub fn features_label(use_rf: bool) -> &'static str {
    if use_rf {
        "rf"
    } else {
        "norf"
    }
}

/// Loaded panels (one per feature variant) with the shared sub-periods and splits.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub panels: Vec<(bool, FeaturePanel)>,
    pub subperiods: Vec<SubPeriod>,
    pub splits: Vec<SplitSet>,
    pub calendar: RecessionCalendar,
}

impl PreparedData {
    pub fn panel(&self, use_rf: bool) -> &FeaturePanel {
        &self
            .panels
            .iter()
            .find(|(r, _)| *r == use_rf)
            .expect("prepared variant")
            .1
    }
}

pub fn load_calendar(cfg: &DataConfig) -> Result<RecessionCalendar> {
    match &cfg.recessions {
        Some(p) => load_recession_calendar(p),
        None => Ok(RecessionCalendar::nber()),
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let prices = load_price_csv(&cfg.data.prices)?;
    let factors = load_factor_csv(
        &cfg.data.factors,
        FactorLoadOptions {
            percent: cfg.data.factors_percent,
            rf_annualized: cfg.data.rf_annualized,
        },
    )?;
    let calendar = load_calendar(&cfg.data)?;
    if cfg.rf_variants().contains(&true) && !factors.has_rf() {
        return Err(Error::Config(
            "features.use_rf needs an `rf` column in the factor file".into(),
        ));
    }
    let panels = cfg
        .rf_variants()
        .into_iter()
        .map(|use_rf| {
            let mut p = align_panel(&prices, &factors, &calendar, use_rf)?;
            if p.rf.is_none() {
                warn!("factor file has no rf column; ERP metrics use a zero risk-free rate");
                p.rf = Some(vec![0.0; p.len()]);
            }
            Ok((use_rf, p))
        })
        .collect::<Result<Vec<_>>>()?;
    prepare_panels(panels, calendar)
}

/// Sub-periods and validated splits for already aligned panels, which must
/// share their dates.
pub fn prepare_panels(panels: Vec<(bool, FeaturePanel)>, calendar: RecessionCalendar) -> Result<PreparedData> {
    let policy = SplitPolicy::default();
    let base = &panels
        .first()
        .ok_or_else(|| Error::Config("no feature variants".into()))?
        .1;
    if panels.iter().any(|(_, p)| p.dates != base.dates) {
        return Err(Error::InvalidData("feature variants disagree on dates".into()));
    }
    let subperiods = build_subperiods_with(base, &calendar, &policy)?;
    let mut splits = Vec::with_capacity(subperiods.len());
    for sp in &subperiods {
        let s = split_subperiod(sp, &policy)?;
        if let Some(v) = validate_split_with(&s, sp, &policy).first() {
            return Err(Error::Split {
                constraint: v.constraint,
                reason: format!("{}: {}", sp.label, v.message),
            });
        }
        splits.push(s);
    }
    Ok(PreparedData {
        panels,
        subperiods,
        splits,
        calendar,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub subperiod: usize,
    pub kind: ModelKind,
    pub trainset: TrainSet,
    pub use_rf: bool,
}

impl CellKey {
    pub fn stem(&self, data: &PreparedData) -> String {
        format!(
            "{}_{}_{}",
            data.subperiods[self.subperiod].label,
            self.kind,
            self.trainset.as_str()
        )
    }
}

pub fn cells(cfg: &ExperimentConfig, data: &PreparedData) -> Result<Vec<CellKey>> {
    let mut out = Vec::new();
    for subperiod in 0..data.subperiods.len() {
        for &kind in &cfg.models {
            for trainset in cfg.train_sets()? {
                for use_rf in cfg.rf_variants() {
                    out.push(CellKey {
                        subperiod,
                        kind,
                        trainset,
                        use_rf,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Stored result of one cell; also the idempotency marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub subperiod: String,
    pub model: ModelKind,
    pub trainset: TrainSet,
    pub features: String,
    pub hyper: HyperParams,
    pub seeds: Vec<u64>,
    pub regimes: Vec<RegimeMetrics>,
    pub yearly: Vec<YearStat>,
}

impl CellRecord {
    pub fn metric_rows(&self) -> Vec<MetricRow> {
        self.regimes
            .iter()
            .map(|m| MetricRow {
                subperiod: self.subperiod.clone(),
                model: self.model.to_string(),
                trainset: self.trainset.as_str().into(),
                features: self.features.clone(),
                regime: m.regime,
                mse: m.mse,
                r2: m.r2,
                cerg: m.cerg,
            })
            .collect()
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Realized log-returns of the sub-period rows strictly before the first OOS row.
pub fn pre_oos_logreturns(panel: &FeaturePanel, sp: &SubPeriod, split: &SplitSet) -> Vec<f64> {
    let first_oos = split.oos.iter().copied().min().unwrap_or(sp.rows.end);
    (sp.rows.start + 1..first_oos)
        .map(|t| (panel.target[t] / panel.target[t - 1]).ln())
        .collect()
}

/// Score `(row, Ŝ)` forecasts of one sub-period.
pub fn score_forecasts(
    panel: &FeaturePanel,
    sp: &SubPeriod,
    split: &SplitSet,
    forecasts: &[(usize, f64)],
    eval: &EvalConfig,
) -> Result<(Vec<RegimeMetrics>, Vec<YearStat>)> {
    let ev = EvaluationSeries::from_panel(panel, forecasts)?;
    let opts = eval.options();
    let history = panel_erp_history(panel, sp.rows.clone(), opts.erp);
    let report = evaluate(&ev, &history, &pre_oos_logreturns(panel, sp, split), &opts)?;
    Ok((report.regimes, report.yearly))
}

fn median(v: &mut [f64]) -> f64 {
    let finite: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
    if finite.is_empty() {
        return f64::NAN;
    }
    let mut s = finite;
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn median_regimes(runs: &[Vec<RegimeMetrics>]) -> Vec<RegimeMetrics> {
    if runs.len() == 1 {
        return runs[0].clone();
    }
    let pick =
        |i: usize, f: &dyn Fn(&RegimeMetrics) -> f64| median(&mut runs.iter().map(|r| f(&r[i])).collect::<Vec<_>>());
    (0..runs[0].len())
        .map(|i| RegimeMetrics {
            regime: runs[0][i].regime,
            n: runs[0][i].n,
            mse: pick(i, &|m| m.mse),
            r2: pick(i, &|m| m.r2),
            cerg: pick(i, &|m| m.cerg),
            logret_sd: runs[0][i].logret_sd,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Recompute cells whose record already exists.
    pub force: bool,
}

fn cell_path(out: &Path, key: &CellKey, data: &PreparedData) -> PathBuf {
    out.join("cells")
        .join(features_label(key.use_rf))
        .join(format!("{}.toml", key.stem(data)))
}

/// Grid-search, train, forecast OOS and score one cell, writing its
/// checkpoint, trace and record under `out`.
pub fn run_cell(cfg: &ExperimentConfig, data: &PreparedData, key: CellKey, opts: RunOptions) -> Result<CellRecord> {
    let out = &cfg.out.dir;
    let record_path = cell_path(out, &key, data);
    if !opts.force && record_path.exists() {
        let text = fs::read_to_string(&record_path).map_err(|e| Error::io(&record_path, e))?;
        if let Ok(r) = toml::from_str::<CellRecord>(&text) {
            info!("{}: reusing {}", key.stem(data), record_path.display());
            return Ok(r);
        }
        warn!("{}: unreadable record, recomputing", record_path.display());
    }
    let panel = data.panel(key.use_rf);
    let sp = &data.subperiods[key.subperiod];
    let split = &data.splits[key.subperiod];
    let feat = features_label(key.use_rf);
    let base = cfg.train.train_config();
    let mut runs = Vec::new();
    let mut first: Option<(HyperParams, TrainedModel, Vec<YearStat>)> = None;
    let mut seeds = Vec::new();
    for k in 0..cfg.train.seeds as u64 {
        let tc = TrainConfig {
            seed: base.seed.wrapping_add(k),
            ..base.clone()
        };
        let (hp, model) = grid_search(panel, split, key.trainset, key.kind, &cfg.grid(), &tc)?;
        let forecasts = model.forecast(panel, &split.oos)?;
        let (regimes, yearly) = score_forecasts(panel, sp, split, &forecasts, &cfg.eval)?;
        runs.push(regimes);
        seeds.push(tc.seed);
        if first.is_none() {
            first = Some((hp, model, yearly));
        }
    }
    let (hp, model, yearly) = first.expect("at least one seed");
    let name = format!(
        "{}_{}_{}_{}_{}",
        sp.label,
        key.kind,
        hp.width,
        hp.lag,
        key.trainset.as_str()
    );
    write_file(
        &out.join("ckpt").join(feat).join(format!("{name}.ckpt")),
        &to_bytes(|b| write_model(&model, b).map_err(|e| Error::io(out, e)))?,
    )?;
    write_file(
        &out.join("traces").join(feat).join(format!("{name}.csv")),
        &to_bytes(|b| write_trace_csv(&model.trace, b))?,
    )?;
    let record = CellRecord {
        subperiod: sp.label.clone(),
        model: key.kind,
        trainset: key.trainset,
        features: feat.into(),
        hyper: hp,
        seeds,
        regimes: median_regimes(&runs),
        yearly,
    };
    let text = toml::to_string(&record).map_err(|e| Error::Config(format!("record serialization: {e}")))?;
    write_file(&record_path, text.as_bytes())?;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub grain: &'static str,
    pub metric: &'static str,
    pub n: usize,
    pub pearson: f64,
}

/// Pearson correlation of metrics with log-return SD: per (cell, year) for the
/// yearly log-return MSE, and per (cell, regime) for MSE, R² and CERG.
pub fn volatility_correlations(records: &[CellRecord]) -> Vec<CorrelationRow> {
    let mut out = Vec::new();
    let (mut mse, mut sd): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    for r in records {
        for y in &r.yearly {
            if y.mse.is_finite() && y.sd.is_finite() {
                mse.push(y.mse);
                sd.push(y.sd);
            }
        }
    }
    out.push(CorrelationRow {
        grain: "year",
        metric: "logreturn_mse",
        n: mse.len(),
        pearson: pearson_correlation(&mse, &sd).unwrap_or(f64::NAN),
    });
    type Getter = fn(&RegimeMetrics) -> f64;
    let metrics: [(&'static str, Getter); 3] = [("mse", |m| m.mse), ("r2", |m| m.r2), ("cerg", |m| m.cerg)];
    for (name, f) in metrics {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for r in records {
            for m in r.regimes.iter().filter(|m| m.regime != Regime::All) {
                if f(m).is_finite() && m.logret_sd.is_finite() {
                    a.push(f(m));
                    b.push(m.logret_sd);
                }
            }
        }
        out.push(CorrelationRow {
            grain: "regime",
            metric: name,
            n: a.len(),
            pearson: pearson_correlation(&a, &b).unwrap_or(f64::NAN),
        });
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<CellRecord>,
    pub failures: Vec<(String, String)>,
    pub correlations: Vec<CorrelationRow>,
    pub comparisons: Vec<ComparisonReport>,
}

/// Run every configured cell in parallel and write the run-level outputs:
/// `metrics.csv`, `yearly.csv`, `correlations.csv`, `splits.json`, and one
/// `compare_<name>.{csv,txt}` pair per comparison the config supports.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<RunSummary> {
    let data = prepare(cfg)?;
    run_prepared(cfg, &data, opts)
}

pub fn run_prepared(cfg: &ExperimentConfig, data: &PreparedData, opts: RunOptions) -> Result<RunSummary> {
    let keys = cells(cfg, data)?;
    info!("{} cells over {} sub-periods", keys.len(), data.subperiods.len());
    let work = || -> Vec<(CellKey, Result<CellRecord>)> {
        keys.par_iter().map(|&k| (k, run_cell(cfg, data, k, opts))).collect()
    };
    let results = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (k, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                warn!("cell {} failed: {e}", k.stem(data));
                failures.push((format!("{}/{}", features_label(k.use_rf), k.stem(data)), e.to_string()));
            }
        }
    }
    if records.is_empty() {
        return Err(Error::AllCellsFailed(keys.len()));
    }
    let out = &cfg.out.dir;
    let rows: Vec<MetricRow> = records.iter().flat_map(CellRecord::metric_rows).collect();
    write_file(&out.join("metrics.csv"), &to_bytes(|b| write_metric_rows(&rows, b))?)?;
    write_file(&out.join("yearly.csv"), &to_bytes(|b| write_yearly(&records, b))?)?;
    let correlations = volatility_correlations(&records);
    let mut corr = String::from("grain,metric,n,pearson\n");
    for c in &correlations {
        let _ = writeln!(corr, "{},{},{},{}", c.grain, c.metric, c.n, c.pearson);
    }
    write_file(&out.join("correlations.csv"), corr.as_bytes())?;
    let labeled: Vec<LabeledSplit> = data
        .subperiods
        .iter()
        .zip(&data.splits)
        .map(|(sp, s)| LabeledSplit {
            label: sp.label.clone(),
            split: s.clone(),
        })
        .collect();
    write_file(&out.join("splits.json"), splits_to_json(&labeled)?.as_bytes())?;
    if !failures.is_empty() {
        let text: String = failures.iter().map(|(k, e)| format!("{k}: {e}\n")).collect();
        write_file(&out.join("failures.txt"), text.as_bytes())?;
    }
    let mut comparisons = vec![Comparison::RecessionVsExpansion];
    if cfg.train_sets()?.len() == 2 {
        comparisons.push(Comparison::RtVsNrt);
    }
    if cfg.rf_variants().len() == 2 {
        comparisons.push(Comparison::RfVsNorf);
    }
    let comparisons: Vec<ComparisonReport> = comparisons.into_iter().map(|c| compare(&rows, c)).collect();
    for c in &comparisons {
        write_comparison(out, c)?;
    }
    Ok(RunSummary {
        records,
        failures,
        correlations,
        comparisons,
    })
}

fn write_yearly(records: &[CellRecord], out: &mut Vec<u8>) -> Result<()> {
    let mut s = String::from("subperiod,model,trainset,features,year,n,mse,sd\n");
    for r in records {
        for y in &r.yearly {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.subperiod,
                r.model,
                r.trainset.as_str(),
                r.features,
                y.year,
                y.n,
                y.mse,
                y.sd
            );
        }
    }
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Comparison {
    /// A = non-recession-trained (ISWOR), B = recession-trained (ISWR).
    RtVsNrt,
    /// A = without rf, B = with rf.
    RfVsNorf,
    /// A = recession rows, B = expansion rows of the same model.
    RecessionVsExpansion,
}

impl Comparison {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparison::RtVsNrt => "rt_vs_nrt",
            Comparison::RfVsNorf => "rf_vs_norf",
            Comparison::RecessionVsExpansion => "recession_vs_expansion",
        }
    }

    fn labels(self) -> (&'static str, &'static str) {
        match self {
            Comparison::RtVsNrt => ("NRT", "RT"),
            Comparison::RfVsNorf => ("no rf", "rf"),
            Comparison::RecessionVsExpansion => ("recession", "expansion"),
        }
    }
}

impl FromStr for Comparison {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "rt_vs_nrt" => Ok(Comparison::RtVsNrt),
            "rf_vs_norf" => Ok(Comparison::RfVsNorf),
            "recession_vs_expansion" => Ok(Comparison::RecessionVsExpansion),
            other => Err(Error::Config(format!("unknown comparison `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    R2,
    Cerg,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Mse, Metric::R2, Metric::Cerg];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::R2 => "r2",
            Metric::Cerg => "cerg",
        }
    }

    fn of(self, r: &MetricRow) -> f64 {
        match self {
            Metric::Mse => r.mse,
            Metric::R2 => r.r2,
            Metric::Cerg => r.cerg,
        }
    }

    /// Strict improvement of `b` over `a`; NaN on either side is never better.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Metric::Mse => b < a,
            Metric::R2 | Metric::Cerg => b > a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub subperiod: String,
    pub model: String,
    pub trainset: String,
    pub features: String,
    pub regime: String,
    pub metric: Metric,
    pub a: f64,
    pub b: f64,
    pub b_better: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonCount {
    pub regime: String,
    pub metric: Metric,
    pub better: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub comparison: Comparison,
    pub rows: Vec<ComparisonRow>,
    pub counts: Vec<ComparisonCount>,
}

impl ComparisonReport {
    pub fn count(&self, regime: &str, metric: Metric) -> Option<&ComparisonCount> {
        self.counts.iter().find(|c| c.regime == regime && c.metric == metric)
    }
}

/// Pair up rows that differ only in the compared dimension. Rows keep the
/// order in which their A side first appears in `rows`.
pub fn compare(rows: &[MetricRow], cmp: Comparison) -> ComparisonReport {
    type Key = (String, String, String, String, String);
    let mut a_side: Vec<(Key, &MetricRow)> = Vec::new();
    let mut b_side: HashMap<Key, &MetricRow> = HashMap::new();
    for r in rows {
        let regime = r.regime.as_str().to_string();
        let (side_a, key) = match cmp {
            Comparison::RtVsNrt => (
                r.trainset == "iswor",
                (
                    r.subperiod.clone(),
                    r.model.clone(),
                    "iswor/iswr".into(),
                    r.features.clone(),
                    regime,
                ),
            ),
            Comparison::RfVsNorf => (
                r.features == "norf",
                (
                    r.subperiod.clone(),
                    r.model.clone(),
                    r.trainset.clone(),
                    "norf/rf".into(),
                    regime,
                ),
            ),
            Comparison::RecessionVsExpansion => {
                if r.regime == Regime::All {
                    continue;
                }
                (
                    r.regime == Regime::Recession,
                    (
                        r.subperiod.clone(),
                        r.model.clone(),
                        r.trainset.clone(),
                        r.features.clone(),
                        "recession/expansion".into(),
                    ),
                )
            }
        };
        if side_a {
            a_side.push((key, r));
        } else {
            b_side.insert(key, r);
        }
    }
    let mut out = Vec::new();
    for (key, a) in a_side {
        let Some(b) = b_side.get(&key) else {
            warn!("{}: no counterpart for {:?}; row omitted", cmp.as_str(), key);
            continue;
        };
        for metric in Metric::ALL {
            let (va, vb) = (metric.of(a), metric.of(b));
            out.push(ComparisonRow {
                subperiod: key.0.clone(),
                model: key.1.clone(),
                trainset: key.2.clone(),
                features: key.3.clone(),
                regime: key.4.clone(),
                metric,
                a: va,
                b: vb,
                b_better: metric.better(va, vb),
            });
        }
    }
    let mut counts: BTreeMap<(String, Metric), (usize, usize)> = BTreeMap::new();
    for r in &out {
        let e = counts.entry((r.regime.clone(), r.metric)).or_default();
        e.0 += r.b_better as usize;
        e.1 += 1;
    }
    ComparisonReport {
        comparison: cmp,
        rows: out,
        counts: counts
            .into_iter()
            .map(|((regime, metric), (better, total))| ComparisonCount {
                regime,
                metric,
                better,
                total,
            })
            .collect(),
    }
}

pub fn comparison_csv(c: &ComparisonReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidData(format!("comparison csv: {e}"));
    for r in &c.rows {
        w.serialize(r).map_err(err)?;
    }
    if c.rows.is_empty() {
        w.write_record([
            "subperiod",
            "model",
            "trainset",
            "features",
            "regime",
            "metric",
            "a",
            "b",
            "b_better",
        ])
        .map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidData(format!("comparison csv: {e}")))
}

/// Plain-text rendering: an MSE table, then an R² and CERG table, each
/// followed by the count of strictly better B entries.
pub fn render_comparison(c: &ComparisonReport) -> String {
    let (la, lb) = c.comparison.labels();
    let mut s = format!("# {}  (1) = {la}, (2) = {lb}\n", c.comparison.as_str());
    let groups: [&[Metric]; 2] = [&[Metric::Mse], &[Metric::R2, Metric::Cerg]];
    for metrics in groups {
        let _ = write!(
            s,
            "\n{:<8} {:<6} {:<12} {:<8} {:<20}",
            "period", "model", "trainset", "features", "regime"
        );
        for m in metrics {
            let head = |k: &str| format!("{} {k}", m.as_str().to_uppercase());
            let flag = if *m == Metric::Mse { "(1) > (2)" } else { "(2) > (1)" };
            let _ = write!(s, " {:>12} {:>12} {:>9}", head("(1)"), head("(2)"), flag);
        }
        s.push('\n');
        let mut seen = Vec::new();
        for r in c.rows.iter().filter(|r| metrics.contains(&r.metric)) {
            let key = (&r.subperiod, &r.model, &r.trainset, &r.features, &r.regime);
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let _ = write!(
                s,
                "{:<8} {:<6} {:<12} {:<8} {:<20}",
                r.subperiod, r.model, r.trainset, r.features, r.regime
            );
            for m in metrics {
                let row = c
                    .rows
                    .iter()
                    .find(|x| (&x.subperiod, &x.model, &x.trainset, &x.features, &x.regime) == key && x.metric == *m)
                    .expect("all metrics emitted per pair");
                let _ = write!(
                    s,
                    " {:>12.6} {:>12.6} {:>9}",
                    row.a,
                    row.b,
                    if row.b_better { "yes" } else { "no" }
                );
            }
            s.push('\n');
        }
        for cnt in c.counts.iter().filter(|k| metrics.contains(&k.metric)) {
            let _ = writeln!(
                s,
                "{} {}: ({lb}) better in {} of {}",
                cnt.regime,
                cnt.metric.as_str(),
                cnt.better,
                cnt.total
            );
        }
    }
    s
}

pub fn write_comparison(dir: &Path, c: &ComparisonReport) -> Result<()> {
    let name = c.comparison.as_str();
    write_file(&dir.join(format!("compare_{name}.csv")), &comparison_csv(c)?)?;
    write_file(
        &dir.join(format!("compare_{name}.txt")),
        render_comparison(c).as_bytes(),
    )
}

/// Log-returns at rows `t` of `rows` whose predecessor `t − 1` is also in `rows`.
pub fn set_logreturns(panel: &FeaturePanel, rows: &[usize]) -> Vec<f64> {
    rows.windows(2)
        .filter(|w| w[1] == w[0] + 1)
        .map(|w| (panel.target[w[1]] / panel.target[w[0]]).ln())
        .collect()
}

fn mix_seed(base: u64, parts: &[u64]) -> u64 {
    // splitmix64 finalizer over the folded parts
    let mut z = parts.iter().fold(base, |acc, p| {
        acc.rotate_left(17) ^ p.wrapping_mul(0x9E37_79B9_7F4A_7C15)
    });
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GbmScoring {
    /// Ŝ_t = S_{t−1}·exp(sim_t) scored as normalized price MSE.
    Price,
    /// Simulated against realized log-returns, z-scored like prices.
    Logreturn,
}

impl GbmScoring {
    pub fn as_str(self) -> &'static str {
        match self {
            GbmScoring::Price => "price",
            GbmScoring::Logreturn => "logreturn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GbmRow {
    pub seed: u64,
    pub subperiod: String,
    pub trainset: TrainSet,
    pub scoring: GbmScoring,
    pub regime: Regime,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbmFraction {
    pub trainset: TrainSet,
    pub scoring: GbmScoring,
    /// Per seed: share of sub-periods with recession MSE > expansion MSE.
    pub per_seed: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbmSummary {
    pub rows: Vec<GbmRow>,
    pub fractions: Vec<GbmFraction>,
    /// Per-cell medians over seeds (price scoring), tagged `model=gbm`.
    pub metrics: Vec<MetricRow>,
}

/// Fit the GBM on each training set, simulate the OOS rows for `seeds` seeds
/// and score both ways.
pub fn run_gbm(cfg: &ExperimentConfig, data: &PreparedData, seeds: usize) -> Result<GbmSummary> {
    if seeds == 0 {
        return Err(Error::Config("need at least one GBM seed".into()));
    }
    let use_rf = cfg.rf_variants()[0];
    let panel = data.panel(use_rf);
    let sets = cfg.train_sets()?;
    let norm = cfg.eval.normalization;
    let tasks: Vec<(usize, TrainSet, u64)> = (0..data.subperiods.len())
        .flat_map(|i| {
            sets.iter()
                .flat_map(move |&ts| (0..seeds as u64).map(move |k| (i, ts, k)))
        })
        .collect();
    type TaskOut = (Vec<GbmRow>, Vec<RegimeMetrics>);
    let results: Vec<Result<TaskOut>> = tasks
        .par_iter()
        .map(|&(i, ts, k)| -> Result<TaskOut> {
            let sp = &data.subperiods[i];
            let split = &data.splits[i];
            let params = fit_gbm(&set_logreturns(panel, split.train_rows(ts)))?;
            let seed = mix_seed(cfg.train.seed, &[k, i as u64, ts as u64]);
            let oos: Vec<usize> = split.oos.iter().copied().filter(|&t| t >= 1).collect();
            let sims = simulate_logreturns_with(oos.len(), &params, seed, cfg.gbm.drift)?;
            let prev: Vec<f64> = oos.iter().map(|&t| panel.target[t - 1]).collect();
            let forecasts: Vec<(usize, f64)> = oos.iter().copied().zip(compose_prices(&prev, &sims)).collect();
            let (regimes, _) = score_forecasts(panel, sp, split, &forecasts, &cfg.eval)?;
            let mut rows: Vec<GbmRow> = regimes
                .iter()
                .map(|m| GbmRow {
                    seed: k,
                    subperiod: sp.label.clone(),
                    trainset: ts,
                    scoring: GbmScoring::Price,
                    regime: m.regime,
                    mse: m.mse,
                })
                .collect();
            let real: Vec<f64> = oos
                .iter()
                .map(|&t| (panel.target[t] / panel.target[t - 1]).ln())
                .collect();
            for regime in Regime::ALL {
                let idx: Vec<usize> = (0..oos.len())
                    .filter(|&j| regime.admits(panel.recession[oos[j]]))
                    .collect();
                let y: Vec<f64> = idx.iter().map(|&j| real[j]).collect();
                let yhat: Vec<f64> = idx.iter().map(|&j| sims[j]).collect();
                let basis = match norm {
                    Normalization::PerRegime => &y,
                    Normalization::Shared => &real,
                };
                rows.push(GbmRow {
                    seed: k,
                    subperiod: sp.label.clone(),
                    trainset: ts,
                    scoring: GbmScoring::Logreturn,
                    regime,
                    mse: zscore_mse(&y, &yhat, basis).unwrap_or(f64::NAN),
                });
            }
            Ok((rows, regimes))
        })
        .collect();
    let mut rows = Vec::new();
    let mut per_cell: BTreeMap<(usize, TrainSet), Vec<Vec<RegimeMetrics>>> = BTreeMap::new();
    for ((i, ts, _), r) in tasks.iter().zip(results) {
        let (r, regimes) = r?;
        rows.extend(r);
        per_cell.entry((*i, *ts)).or_default().push(regimes);
    }
    let mut fractions = Vec::new();
    for &ts in &sets {
        for scoring in [GbmScoring::Price, GbmScoring::Logreturn] {
            let per_seed: Vec<f64> = (0..seeds as u64)
                .map(|k| {
                    let hits = data
                        .subperiods
                        .iter()
                        .filter(|sp| {
                            let get = |reg: Regime| {
                                rows.iter()
                                    .find(|r| {
                                        r.seed == k
                                            && r.subperiod == sp.label
                                            && r.trainset == ts
                                            && r.scoring == scoring
                                            && r.regime == reg
                                    })
                                    .map_or(f64::NAN, |r| r.mse)
                            };
                            get(Regime::Recession) > get(Regime::Expansion)
                        })
                        .count();
                    hits as f64 / data.subperiods.len() as f64
                })
                .collect();
            let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
            fractions.push(GbmFraction {
                trainset: ts,
                scoring,
                per_seed,
                mean,
            });
        }
    }
    let metrics = per_cell
        .into_iter()
        .flat_map(|((i, ts), runs)| {
            let regimes = median_regimes(&runs);
            regimes
                .into_iter()
                .map(|m| MetricRow {
                    subperiod: data.subperiods[i].label.clone(),
                    model: "gbm".into(),
                    trainset: ts.as_str().into(),
                    features: features_label(use_rf).into(),
                    regime: m.regime,
                    mse: m.mse,
                    r2: m.r2,
                    cerg: m.cerg,
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(GbmSummary {
        rows,
        fractions,
        metrics,
    })
}

/// Write `gbm/seeds.csv`, `gbm/metrics.csv` and `gbm/summary.txt` under `dir`.
pub fn write_gbm(dir: &Path, s: &GbmSummary) -> Result<()> {
    let gdir = dir.join("gbm");
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &s.rows {
        w.serialize(r)
            .map_err(|e| Error::InvalidData(format!("gbm csv: {e}")))?;
    }
    let seeds = w
        .into_inner()
        .map_err(|e| Error::InvalidData(format!("gbm csv: {e}")))?;
    write_file(&gdir.join("seeds.csv"), &seeds)?;
    write_file(
        &gdir.join("metrics.csv"),
        &to_bytes(|b| write_metric_rows(&s.metrics, b))?,
    )?;
    let mut text = String::from("trainset,scoring,seeds,mean_fraction_recession_mse_gt_expansion\n");
    for f in &s.fractions {
        let _ = writeln!(
            text,
            "{},{},{},{}",
            f.trainset.as_str(),
            f.scoring.as_str(),
            f.per_seed.len(),
            f.mean
        );
    }
    write_file(&gdir.join("summary.txt"), text.as_bytes())
}

/// Recession index over every panel row a checkpointed model can forecast.
pub fn model_index(panel: &FeaturePanel, model: &TrainedModel, window: usize) -> Result<IndexSeries> {
    if model.scaler.features.len() != panel.n_features() {
        return Err(Error::Config(format!(
            "model expects {} features, panel has {}",
            model.scaler.features.len(),
            panel.n_features()
        )));
    }
    let rows: Vec<usize> = (model.hyper.lag.max(1)..panel.len()).collect();
    let forecasts = model.forecast(panel, &rows)?;
    recession_index(&EvaluationSeries::from_panel(panel, &forecasts)?, window)
}

/// Row-level volatility summary used by reports: sample SD of realized
/// log-returns on the given rows.
pub fn rows_logret_sd(panel: &FeaturePanel, rows: &[usize]) -> f64 {
    let r: Vec<f64> = rows
        .iter()
        .filter(|&&t| t >= 1)
        .map(|&t| (panel.target[t] / panel.target[t - 1]).ln())
        .collect();
    if r.len() < 2 {
        f64::NAN
    } else {
        mean_sd(&r).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(sp: &str, model: &str, ts: &str, feat: &str, regime: Regime, mse: f64) -> MetricRow {
        MetricRow {
            subperiod: sp.into(),
            model: model.into(),
            trainset: ts.into(),
            features: feat.into(),
            regime,
            mse,
            r2: 0.0,
            cerg: 0.0,
        }
    }

    #[test]
    fn recession_vs_expansion_counts() {
        let rows = vec![
            row("69-76", "gru", "iswor", "norf", Regime::Recession, 0.5),
            row("69-76", "gru", "iswor", "norf", Regime::Expansion, 0.2),
            row("73-80", "gru", "iswor", "norf", Regime::Recession, 0.1),
            row("73-80", "gru", "iswor", "norf", Regime::Expansion, 0.2),
        ];
        let c = compare(&rows, Comparison::RecessionVsExpansion);
        let k = c.count("recession/expansion", Metric::Mse).unwrap();
        assert_eq!((k.better, k.total), (1, 2));
        assert_eq!(
            c.rows.iter().filter(|r| r.b_better && r.metric == Metric::Mse).count(),
            1
        );
    }

    #[test]
    fn identical_variants_never_better() {
        let rows = vec![
            row("69-76", "lstm", "iswor", "norf", Regime::Recession, 0.3),
            row("69-76", "lstm", "iswr", "norf", Regime::Recession, 0.3),
        ];
        let c = compare(&rows, Comparison::RtVsNrt);
        assert_eq!(c.rows.len(), 3);
        assert!(c.rows.iter().all(|r| !r.b_better));
        let missing = compare(&rows[..1], Comparison::RtVsNrt);
        assert!(missing.rows.is_empty());
    }

    #[test]
    fn comparison_names() {
        assert_eq!("rt-vs-nrt".parse::<Comparison>().unwrap(), Comparison::RtVsNrt);
        assert!("x".parse::<Comparison>().is_err());
    }

    #[test]
    fn config_defaults_and_paths() {
        let text = r#"
models = ["gru"]
[data]
prices = "p.csv"
factors = "/abs/f.csv"
[features]
use_rf = [false, true]
[train]
variants = ["nrt", "rt"]
seed = 4
[grid]
width = [32]
lag = [5]
[out]
dir = "out"
"#;
        let cfg = ExperimentConfig::from_toml(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.data.prices, PathBuf::from("/base/p.csv"));
        assert_eq!(cfg.data.factors, PathBuf::from("/abs/f.csv"));
        assert_eq!(cfg.train_sets().unwrap(), vec![TrainSet::Iswr, TrainSet::Iswor]);
        assert_eq!(cfg.rf_variants(), vec![false, true]);
        assert_eq!(cfg.train.train_config().max_epochs, 200);
        assert!(cfg.data.factors_percent);
        let bad = text.replace("[grid]", "[grid]\nwidht = [1]");
        assert!(ExperimentConfig::from_toml(&bad, Path::new("/")).is_err());
    }

    #[test]
    fn seeds_mix() {
        assert_ne!(mix_seed(1, &[0, 1]), mix_seed(1, &[1, 0]));
        assert_eq!(mix_seed(1, &[2, 3]), mix_seed(1, &[2, 3]));
    }

    #[test]
    fn record_round_trips_through_toml_with_nan() {
        let rec = CellRecord {
            subperiod: "80-83".into(),
            model: ModelKind::Gru,
            trainset: TrainSet::Iswor,
            features: "norf".into(),
            hyper: HyperParams { width: 32, lag: 5 },
            seeds: vec![0],
            regimes: vec![RegimeMetrics {
                regime: Regime::Recession,
                n: 10,
                mse: 0.25,
                r2: f64::NAN,
                cerg: -0.001,
                logret_sd: 0.02,
            }],
            yearly: vec![],
        };
        let text = toml::to_string(&rec).unwrap();
        let back: CellRecord = toml::from_str(&text).unwrap();
        assert_eq!(back.regimes[0].mse, 0.25);
        assert!(back.regimes[0].r2.is_nan());
    }
}
