//! Synthetic daily market with recession-dependent volatility, for demos and
//! tests that cannot ship vendor data.

use std::io::Write;

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{weekdays, FactorPanel, PriceSeries, RecessionCalendar, FACTOR_COLUMNS, RF_COLUMN};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticMarket {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub initial: f64,
    pub expansion_drift: f64,
    pub expansion_sd: f64,
    pub recession_drift: f64,
    pub recession_sd: f64,
    /// Annualized risk-free level the daily rate mean-reverts to.
    pub rf_annual: f64,
    pub seed: u64,
}

impl Default for SyntheticMarket {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(1969, 12, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2020, 5, 13).unwrap(),
            initial: 92.0,
            expansion_drift: 0.0004,
            expansion_sd: 0.009,
            recession_drift: -0.0008,
            recession_sd: 0.022,
            rf_annual: 0.045,
            seed: 1,
        }
    }
}

impl SyntheticMarket {
    /// Weekday prices plus decimal daily factors (`mkt_rf`, `smb`, `hml`,
    /// `mom`, `rf`) on the same dates.
    pub fn generate(&self, calendar: &RecessionCalendar) -> Result<(PriceSeries, FactorPanel)> {
        let dates = weekdays(self.start, self.end);
        if dates.len() < 2 {
            return Err(Error::Config("synthetic market needs at least two weekdays".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let z = Normal::new(0.0, 1.0).expect("unit normal");
        let mut close = Vec::with_capacity(dates.len());
        let mut cols: Vec<Vec<f64>> = (0..5).map(|_| Vec::with_capacity(dates.len())).collect();
        let mut level = self.initial;
        let mut rf_annual = self.rf_annual;
        for d in &dates {
            let rec = calendar.contains(*d);
            let (mu, sd) = if rec {
                (self.recession_drift, self.recession_sd)
            } else {
                (self.expansion_drift, self.expansion_sd)
            };
            rf_annual = (rf_annual + 0.002 * (self.rf_annual - rf_annual) + 0.0008 * z.sample(&mut rng)).max(0.0);
            let rf = rf_annual / 252.0;
            let r = mu + sd * z.sample(&mut rng);
            level *= r.exp();
            close.push(level);
            cols[0].push(r - rf + 0.002 * z.sample(&mut rng));
            for c in &mut cols[1..4] {
                c.push(0.3 * sd * z.sample(&mut rng));
            }
            cols[4].push(rf);
        }
        let names = FACTOR_COLUMNS.iter().copied().chain([RF_COLUMN]).map(String::from);
        let prices = PriceSeries::new(dates.clone(), close)?;
        Ok((
            prices,
            FactorPanel {
                dates,
                columns: names.zip(cols).collect(),
            },
        ))
    }
}

pub fn write_price_csv<W: Write>(p: &PriceSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::InvalidData(format!("price csv: {e}"));
    w.write_record(["date", "close"]).map_err(err)?;
    for (d, c) in p.dates.iter().zip(&p.close) {
        w.write_record([d.to_string(), c.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::InvalidData(format!("price csv: {e}")))
}

/// Factor values are written as stored (decimal, daily); load them back with
/// `percent = false` and `rf_annualized = false`.
pub fn write_factor_csv<W: Write>(f: &FactorPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::InvalidData(format!("factor csv: {e}"));
    let mut header = vec!["date".to_string()];
    header.extend(f.columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&header).map_err(err)?;
    for (i, d) in f.dates.iter().enumerate() {
        let mut rec = vec![d.to_string()];
        rec.extend(f.columns.iter().map(|(_, v)| v[i].to_string()));
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::InvalidData(format!("factor csv: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recession_days_are_more_volatile() {
        let cal = RecessionCalendar::nber();
        let (p, f) = SyntheticMarket::default().generate(&cal).unwrap();
        assert_eq!(p.len(), f.len());
        let mut rec = Vec::new();
        let mut exp = Vec::new();
        for i in 1..p.len() {
            let r = (p.close[i] / p.close[i - 1]).ln();
            if cal.contains(p.dates[i]) {
                rec.push(r)
            } else {
                exp.push(r)
            }
        }
        let sd = |v: &[f64]| crate::train::mean_sd(v).1;
        assert!(sd(&rec) > 2.0 * sd(&exp));
        assert!(f.has_rf());
    }

    #[test]
    fn deterministic() {
        let cal = RecessionCalendar::nber();
        let m = SyntheticMarket {
            end: NaiveDate::from_ymd_opt(1972, 1, 1).unwrap(),
            ..Default::default()
        };
        assert_eq!(m.generate(&cal).unwrap(), m.generate(&cal).unwrap());
    }
}
