//! Normalized MSE, out-of-sample R² on the equity risk premium, CERG, and the
//! volatility statistics used to correlate them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::FeaturePanel;
use crate::error::{Error, Result};
use crate::train::mean_sd;

pub const RISK_AVERSION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    All,
    Recession,
    Expansion,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::All, Regime::Recession, Regime::Expansion];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::All => "all",
            Regime::Recession => "recession",
            Regime::Expansion => "expansion",
        }
    }

    pub fn admits(self, recession: bool) -> bool {
        match self {
            Regime::All => true,
            Regime::Recession => recession,
            Regime::Expansion => !recession,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Regime::All),
            "recession" => Ok(Regime::Recession),
            "expansion" => Ok(Regime::Expansion),
            _ => Err(Error::Config(format!("unknown regime `{s}`"))),
        }
    }
}

/// Forecasts with the quantities each metric needs at every row. `prev` is
/// S_{t−1} and `rf_prev` is rf_{t−1}, taken from the row before `t` in the
/// underlying data (not from the previous element of this series).
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationSeries {
    pub dates: Vec<NaiveDate>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
    pub prev: Vec<f64>,
    pub rf: Option<Vec<f64>>,
    pub rf_prev: Option<Vec<f64>>,
    pub recession: Vec<bool>,
}

impl EvaluationSeries {
    /// Build from a consecutive series: element 0 only supplies S_{t−1} and
    /// rf_{t−1} for element 1, so the result has one row fewer.
    pub fn consecutive(
        dates: &[NaiveDate],
        actual: &[f64],
        predicted: &[f64],
        rf: Option<&[f64]>,
        recession: &[bool],
    ) -> Result<Self> {
        let n = dates.len();
        if actual.len() != n || predicted.len() != n || recession.len() != n || rf.is_some_and(|r| r.len() != n) {
            return Err(Error::Shape("evaluation inputs differ in length".into()));
        }
        if n < 2 {
            return Err(Error::Degenerate("evaluation needs at least 2 rows".into()));
        }
        let ev = Self {
            dates: dates[1..].to_vec(),
            actual: actual[1..].to_vec(),
            predicted: predicted[1..].to_vec(),
            prev: actual[..n - 1].to_vec(),
            rf: rf.map(|r| r[1..].to_vec()),
            rf_prev: rf.map(|r| r[..n - 1].to_vec()),
            recession: recession[1..].to_vec(),
        };
        ev.check()?;
        Ok(ev)
    }

    /// Build from `(row, Ŝ)` forecasts on panel rows; rows must be ≥ 1.
    pub fn from_panel(panel: &FeaturePanel, forecasts: &[(usize, f64)]) -> Result<Self> {
        if forecasts.iter().any(|&(t, _)| t == 0 || t >= panel.len()) {
            return Err(Error::Shape("forecast row outside 1..panel length".into()));
        }
        let pick = |f: &dyn Fn(usize) -> f64| forecasts.iter().map(|&(t, _)| f(t)).collect::<Vec<_>>();
        let ev = Self {
            dates: forecasts.iter().map(|&(t, _)| panel.dates[t]).collect(),
            actual: pick(&|t| panel.target[t]),
            predicted: forecasts.iter().map(|&(_, p)| p).collect(),
            prev: pick(&|t| panel.target[t - 1]),
            rf: panel.rf.as_ref().map(|_| pick(&|t| panel.rf_at(t))),
            rf_prev: panel.rf.as_ref().map(|_| pick(&|t| panel.rf_at(t - 1))),
            recession: forecasts.iter().map(|&(t, _)| panel.recession[t]).collect(),
        };
        ev.check()?;
        Ok(ev)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        let n = self.len();
        let rf_ok = |r: &Option<Vec<f64>>| r.as_ref().is_none_or(|v| v.len() == n);
        if self.actual.len() != n
            || self.predicted.len() != n
            || self.prev.len() != n
            || self.recession.len() != n
            || !rf_ok(&self.rf)
            || !rf_ok(&self.rf_prev)
            || self.rf.is_some() != self.rf_prev.is_some()
        {
            return Err(Error::Shape("evaluation series fields differ in length".into()));
        }
        if self
            .actual
            .iter()
            .chain(&self.predicted)
            .chain(&self.prev)
            .any(|&p| !(p > 0.0) || !p.is_finite())
        {
            return Err(Error::InvalidData(
                "evaluation prices must be positive and finite".into(),
            ));
        }
        Ok(())
    }

    /// Keep rows whose recession flag the regime admits.
    pub fn filter(&self, regime: Regime) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| regime.admits(self.recession[i])).collect();
        let sel = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            dates: keep.iter().map(|&i| self.dates[i]).collect(),
            actual: sel(&self.actual),
            predicted: sel(&self.predicted),
            prev: sel(&self.prev),
            rf: self.rf.as_deref().map(sel),
            rf_prev: self.rf_prev.as_deref().map(sel),
            recession: keep.iter().map(|&i| self.recession[i]).collect(),
        }
    }

    /// Realized log-returns ln(S_t/S_{t−1}).
    pub fn realized_logreturns(&self) -> Vec<f64> {
        self.actual.iter().zip(&self.prev).map(|(s, p)| (s / p).ln()).collect()
    }

    /// Predicted log-returns ln(Ŝ_t/S_{t−1}).
    pub fn predicted_logreturns(&self) -> Vec<f64> {
        self.predicted
            .iter()
            .zip(&self.prev)
            .map(|(s, p)| (s / p).ln())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// z-score fitted on the filtered rows' true prices.
    PerRegime,
    /// z-score fitted on all rows' true prices of the series, then filtered.
    #[default]
    Shared,
}

/// MSE of `y` against `yhat` after z-scoring both with the mean and sample SD
/// of `basis`.
pub fn zscore_mse(y: &[f64], yhat: &[f64], basis: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::Shape("MSE inputs differ in length".into()));
    }
    if y.is_empty() {
        return Err(Error::Degenerate("MSE of an empty series".into()));
    }
    if basis.len() < 2 {
        return Err(Error::Degenerate("normalized MSE needs at least 2 rows".into()));
    }
    let (mean, sd) = mean_sd(basis);
    if !(sd > 0.0) {
        return Err(Error::Degenerate("zero variance in normalizer basis".into()));
    }
    Ok(y.iter()
        .zip(yhat)
        .map(|(a, b)| ((a - mean) / sd - (b - mean) / sd).powi(2))
        .sum::<f64>()
        / y.len() as f64)
}

pub fn normalized_mse(ev: &EvaluationSeries, regime: Regime) -> Result<f64> {
    normalized_mse_with(ev, regime, Normalization::default())
}

pub fn normalized_mse_with(ev: &EvaluationSeries, regime: Regime, norm: Normalization) -> Result<f64> {
    let f = ev.filter(regime);
    if f.is_empty() {
        return Err(Error::Degenerate(format!("no {regime} rows to score")));
    }
    let basis = match norm {
        Normalization::PerRegime => &f.actual,
        Normalization::Shared => &ev.actual,
    };
    zscore_mse(&f.actual, &f.predicted, basis)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ErpOptions {
    /// Subtract rf_{t−1} from the realized return as well, instead of rf_t.
    pub symmetric_rf: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErpSeries {
    pub erp_true: Vec<f64>,
    pub erp_pred: Vec<f64>,
    /// NaN where no history precedes the row.
    pub hist_avg: Vec<f64>,
}

/// Realized ERP ln(S_t/S_{t−1}) − rf_t (or rf_{t−1} when symmetric), dated.
pub fn realized_erp(ev: &EvaluationSeries, opts: ErpOptions) -> Result<Vec<(NaiveDate, f64)>> {
    let (rf, rf_prev) = match (&ev.rf, &ev.rf_prev) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidData("ERP needs a risk-free rate".into())),
    };
    let r = ev.realized_logreturns();
    Ok((0..ev.len())
        .map(|i| {
            let rf_t = if opts.symmetric_rf { rf_prev[i] } else { rf[i] };
            (ev.dates[i], r[i] - rf_t)
        })
        .collect())
}

/// Realized ERP for panel rows `rows` (each ≥ 1), dated, for use as history.
pub fn panel_erp_history(
    panel: &FeaturePanel,
    rows: std::ops::Range<usize>,
    opts: ErpOptions,
) -> Vec<(NaiveDate, f64)> {
    rows.filter(|&t| t >= 1 && t < panel.len())
        .map(|t| {
            let rf_t = if opts.symmetric_rf {
                panel.rf_at(t - 1)
            } else {
                panel.rf_at(t)
            };
            (panel.dates[t], (panel.target[t] / panel.target[t - 1]).ln() - rf_t)
        })
        .collect()
}

/// ERP truth and forecast per row plus the expanding historical-average
/// benchmark: the mean of all `history` values dated strictly before the row.
/// `history` must be sorted by date.
pub fn erp_series(ev: &EvaluationSeries, history: &[(NaiveDate, f64)], opts: ErpOptions) -> Result<ErpSeries> {
    let truth = realized_erp(ev, opts)?;
    let rf_prev = ev.rf_prev.as_ref().expect("checked by realized_erp");
    let erp_pred: Vec<f64> = ev
        .predicted_logreturns()
        .iter()
        .zip(rf_prev)
        .map(|(r, f)| r - f)
        .collect();
    let mut prefix = Vec::with_capacity(history.len() + 1);
    prefix.push(0.0);
    for (_, v) in history {
        prefix.push(prefix.last().unwrap() + v);
    }
    let hist_avg = ev
        .dates
        .iter()
        .map(|d| {
            let k = history.partition_point(|(hd, _)| hd < d);
            if k == 0 {
                f64::NAN
            } else {
                prefix[k] / k as f64
            }
        })
        .collect();
    Ok(ErpSeries {
        erp_true: truth.into_iter().map(|(_, v)| v).collect(),
        erp_pred,
        hist_avg,
    })
}

/// 1 − Σ(true − pred)² / Σ(true − hist)², over rows with a defined benchmark.
pub fn oos_r_squared(e: &ErpSeries) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..e.erp_true.len() {
        if e.hist_avg[i].is_nan() {
            continue;
        }
        num += (e.erp_true[i] - e.erp_pred[i]).powi(2);
        den += (e.erp_true[i] - e.hist_avg[i]).powi(2);
    }
    if !(den > 0.0) {
        return Err(Error::Degenerate("historical-average benchmark has zero error".into()));
    }
    Ok(1.0 - num / den)
}

fn utility(r: &[f64], gamma: f64) -> f64 {
    let (mean, sd) = mean_sd(r);
    mean - 0.5 * gamma * sd * sd
}

/// Û_p − Û_b with Û = mean − (γ/2)·sample variance (variance 0 for one value).
pub fn cerg(predicted: &[f64], pre_oos: &[f64], gamma: f64) -> Result<f64> {
    if predicted.is_empty() || pre_oos.is_empty() {
        return Err(Error::Degenerate("CERG needs non-empty return series".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("risk aversion must be positive, got {gamma}")));
    }
    Ok(utility(predicted, gamma) - utility(pre_oos, gamma))
}

pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Shape("correlation needs two equal series of length ≥ 2".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if !(saa > 0.0) || !(sbb > 0.0) {
        return Err(Error::Degenerate("correlation of a constant series".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearStat {
    pub year: i32,
    pub n: usize,
    pub mse: f64,
    pub sd: f64,
}

/// Per calendar year: MSE of predicted vs realized log-returns and the sample
/// SD of realized log-returns. Years with fewer than 2 rows are dropped.
pub fn yearly_logreturn_stats(ev: &EvaluationSeries) -> Vec<YearStat> {
    let real = ev.realized_logreturns();
    let pred = ev.predicted_logreturns();
    let mut groups: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, d) in ev.dates.iter().enumerate() {
        groups.entry(d.year()).or_default().push(i);
    }
    groups
        .into_iter()
        .filter_map(|(year, idx)| {
            if idx.len() < 2 {
                warn!("year {year} has {} evaluation row(s); omitted", idx.len());
                return None;
            }
            let r: Vec<f64> = idx.iter().map(|&i| real[i]).collect();
            let mse = idx.iter().map(|&i| (pred[i] - real[i]).powi(2)).sum::<f64>() / idx.len() as f64;
            Some(YearStat {
                year,
                n: idx.len(),
                mse,
                sd: mean_sd(&r).1,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeMetrics {
    pub regime: Regime,
    pub n: usize,
    pub mse: f64,
    pub r2: f64,
    pub cerg: f64,
    /// Sample SD of the realized log-returns on these rows.
    pub logret_sd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub regimes: Vec<RegimeMetrics>,
    pub yearly: Vec<YearStat>,
}

impl MetricReport {
    pub fn get(&self, regime: Regime) -> Option<&RegimeMetrics> {
        self.regimes.iter().find(|r| r.regime == regime)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    pub normalization: Normalization,
    pub erp: ErpOptions,
    pub gamma: Option<f64>,
}

fn or_nan(what: &str, regime: Regime, r: Result<f64>) -> f64 {
    r.unwrap_or_else(|e| {
        warn!("{what} ({regime}) undefined: {e}");
        f64::NAN
    })
}

/// Score `ev` on all rows and per regime. `history` feeds the R² benchmark,
/// `pre_oos` are the realized log-returns CERG compares against. A metric that
/// is undefined for a regime (too few rows, zero variance) is reported as NaN.
pub fn evaluate(
    ev: &EvaluationSeries,
    history: &[(NaiveDate, f64)],
    pre_oos: &[f64],
    opts: &EvalOptions,
) -> Result<MetricReport> {
    ev.check()?;
    let gamma = opts.gamma.unwrap_or(RISK_AVERSION);
    let regimes = Regime::ALL
        .iter()
        .map(|&regime| {
            let f = ev.filter(regime);
            let mse = or_nan("MSE", regime, normalized_mse_with(ev, regime, opts.normalization));
            let r2 = or_nan(
                "R²",
                regime,
                erp_series(&f, history, opts.erp).and_then(|e| oos_r_squared(&e)),
            );
            let c = or_nan("CERG", regime, cerg(&f.predicted_logreturns(), pre_oos, gamma));
            let r = f.realized_logreturns();
            RegimeMetrics {
                regime,
                n: f.len(),
                mse,
                r2,
                cerg: c,
                logret_sd: if r.len() < 2 { f64::NAN } else { mean_sd(&r).1 },
            }
        })
        .collect();
    Ok(MetricReport {
        regimes,
        yearly: yearly_logreturn_stats(ev),
    })
}

/// One CSV row of a metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub subperiod: String,
    pub model: String,
    pub trainset: String,
    pub features: String,
    pub regime: Regime,
    pub mse: f64,
    pub r2: f64,
    pub cerg: f64,
}

impl MetricRow {
    pub fn from_report(
        subperiod: &str,
        model: &str,
        trainset: &str,
        features: &str,
        report: &MetricReport,
    ) -> Vec<Self> {
        report
            .regimes
            .iter()
            .map(|m| MetricRow {
                subperiod: subperiod.into(),
                model: model.into(),
                trainset: trainset.into(),
                features: features.into(),
                regime: m.regime,
                mse: m.mse,
                r2: m.r2,
                cerg: m.cerg,
            })
            .collect()
    }
}

pub fn write_metric_rows<W: std::io::Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::InvalidData(format!("metrics csv: {e}"));
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    if rows.is_empty() {
        w.write_record([
            "subperiod",
            "model",
            "trainset",
            "features",
            "regime",
            "mse",
            "r2",
            "cerg",
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::InvalidData(format!("metrics csv: {e}")))
}

pub fn read_metric_rows<R: std::io::Read>(input: R) -> Result<Vec<MetricRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e: csv::Error| Error::InvalidData(format!("metrics csv: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn ev_from(actual: &[f64], predicted: &[f64], rf: Option<&[f64]>, recession: &[bool]) -> EvaluationSeries {
        let dates: Vec<NaiveDate> = (0..actual.len())
            .map(|i| d(2001, 1, 1) + chrono::Days::new(i as u64))
            .collect();
        EvaluationSeries::consecutive(&dates, actual, predicted, rf, recession).unwrap()
    }

    #[test]
    fn mse_hand_values() {
        let ev = ev_from(&[9.0, 1.0, 2.0, 3.0], &[9.0, 2.0, 2.0, 2.0], None, &[false; 4]);
        assert!((normalized_mse(&ev, Regime::All).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let perfect = ev_from(&[1.0, 2.0, 5.0], &[1.0, 2.0, 5.0], None, &[false; 3]);
        assert_eq!(normalized_mse(&perfect, Regime::All).unwrap(), 0.0);
        assert!(normalized_mse(&perfect, Regime::Recession).is_err());
    }

    #[test]
    fn erp_hand_values() {
        let ev = ev_from(&[100.0, 101.0], &[100.0, 102.0], Some(&[0.0001, 0.0002]), &[false; 2]);
        let e = erp_series(&ev, &[], ErpOptions::default()).unwrap();
        assert!((e.erp_pred[0] - ((1.02f64).ln() - 0.0001)).abs() < 1e-15);
        assert!((e.erp_true[0] - ((1.01f64).ln() - 0.0002)).abs() < 1e-15);
        assert!(e.hist_avg[0].is_nan());
        let sym = erp_series(&ev, &[], ErpOptions { symmetric_rf: true }).unwrap();
        assert!((sym.erp_true[0] - ((1.01f64).ln() - 0.0001)).abs() < 1e-15);
    }

    #[test]
    fn erp_random_walk_forecast_is_zero() {
        let ev = ev_from(
            &[100.0, 103.0, 99.0],
            &[1.0, 100.0, 103.0],
            Some(&[0.0; 3]),
            &[false; 3],
        );
        let e = erp_series(&ev, &[], ErpOptions::default()).unwrap();
        assert!(e.erp_pred.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn r_squared_four_points() {
        // history mean before row k: rows dated before it
        let e = ErpSeries {
            erp_true: vec![0.01, -0.02, 0.03, 0.00],
            erp_pred: vec![0.00, -0.01, 0.01, 0.01],
            hist_avg: vec![0.005, 0.01, -0.005, 0.02],
        };
        let num = 0.01f64.powi(2) + 0.01f64.powi(2) + 0.02f64.powi(2) + 0.01f64.powi(2);
        let den = 0.005f64.powi(2) + 0.03f64.powi(2) + 0.035f64.powi(2) + 0.02f64.powi(2);
        assert!((oos_r_squared(&e).unwrap() - (1.0 - num / den)).abs() < 1e-12);
    }

    #[test]
    fn cerg_hand_value() {
        let c = cerg(&[0.01, -0.01], &[0.0, 0.0], 3.0).unwrap();
        assert!((c + 0.0003).abs() < 1e-15);
        assert_eq!(cerg(&[0.02; 3], &[0.02; 5], 7.0).unwrap(), 0.0);
        assert!(cerg(&[], &[0.1], 3.0).is_err());
    }

    #[test]
    fn pearson_extremes() {
        let a = [1.0, 2.0, 4.0, 7.0];
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x + 1.0).collect();
        let c: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((pearson_correlation(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_correlation(&a, &c).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson_correlation(&a, &[1.0; 4]).is_err());
    }

    #[test]
    fn yearly_groups() {
        let dates = [
            d(2000, 12, 28),
            d(2000, 12, 29),
            d(2001, 1, 2),
            d(2001, 1, 3),
            d(2002, 1, 2),
        ];
        let s = [100.0, 101.0, 100.0, 102.0, 103.0];
        let ev = EvaluationSeries::consecutive(&dates, &s, &s, None, &[false; 5]).unwrap();
        let y = yearly_logreturn_stats(&ev);
        assert_eq!(y.iter().map(|s| s.year).collect::<Vec<_>>(), vec![2001]);
        assert_eq!(y[0].mse, 0.0);
        assert_eq!(y[0].n, 2);
    }

    #[test]
    fn from_panel_uses_preceding_row() {
        let panel = FeaturePanel {
            dates: (1..=5).map(|k| d(2003, 3, k)).collect(),
            feature_names: vec!["close".into()],
            features: (0..5).map(|i| vec![10.0 + i as f64]).collect(),
            target: (0..5).map(|i| 10.0 + i as f64).collect(),
            recession: vec![false, false, true, true, false],
            rf: Some(vec![0.1, 0.2, 0.3, 0.4, 0.5]),
        };
        let ev = EvaluationSeries::from_panel(&panel, &[(2, 12.5), (4, 13.0)]).unwrap();
        assert_eq!(ev.prev, vec![11.0, 13.0]);
        assert_eq!(ev.rf_prev, Some(vec![0.2, 0.4]));
        assert_eq!(ev.recession, vec![true, false]);
        assert!(EvaluationSeries::from_panel(&panel, &[(0, 1.0)]).is_err());
    }

    #[test]
    fn metric_rows_round_trip() {
        let rows = vec![MetricRow {
            subperiod: "69-76".into(),
            model: "gru".into(),
            trainset: "iswor".into(),
            features: "norf".into(),
            regime: Regime::Recession,
            mse: 0.25,
            r2: -0.5,
            cerg: f64::NAN,
        }];
        let mut buf = Vec::new();
        write_metric_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("subperiod,model,trainset,features,regime,mse,r2,cerg\n69-76,gru,iswor,norf,recession,")
        );
        let back = read_metric_rows(text.as_bytes()).unwrap();
        assert_eq!(back[0].subperiod, "69-76");
        assert!(back[0].cerg.is_nan());
    }
}
