//! Median-filtered squared log-return errors as a recession indicator.

use std::io::Write;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::metrics::EvaluationSeries;

pub const DEFAULT_WINDOW: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexSeries {
    pub dates: Vec<NaiveDate>,
    pub raw: Vec<f64>,
    pub filtered: Vec<f64>,
}

/// e_t = (ln(Ŝ_t/S_{t−1}) − ln(S_t/S_{t−1}))².
pub fn squared_logreturn_errors(ev: &EvaluationSeries) -> Result<Vec<f64>> {
    ev.check()?;
    Ok(ev
        .predicted_logreturns()
        .iter()
        .zip(ev.realized_logreturns())
        .map(|(p, r)| (p - r).powi(2))
        .collect())
}

/// Centered running median; position `i` covers `i − w/2 ..= i + (w − 1 − w/2)`
/// truncated to the series. Odd windows use the usual median (mean of the two
/// middle values on even-length edge slices); even windows use the lower median.
pub fn median_filter(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Degenerate("median filter of an empty series".into()));
    }
    if window == 0 {
        return Err(Error::Config("median window must be positive".into()));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("median filter input"));
    }
    let left = window / 2;
    let right = window - 1 - left;
    let lower_only = window.is_multiple_of(2);
    let mut buf = Vec::with_capacity(window);
    Ok((0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(left);
            let hi = (i + right + 1).min(x.len());
            buf.clear();
            buf.extend_from_slice(&x[lo..hi]);
            let n = buf.len();
            let k = (n - 1) / 2;
            let (_, &mut m, above) = buf.select_nth_unstable_by(k, f64::total_cmp);
            if n % 2 == 1 || lower_only {
                m
            } else {
                let next = above.iter().copied().fold(f64::INFINITY, f64::min);
                0.5 * (m + next)
            }
        })
        .collect())
}

pub fn recession_index(ev: &EvaluationSeries, window: usize) -> Result<IndexSeries> {
    let raw = squared_logreturn_errors(ev)?;
    let filtered = median_filter(&raw, window)?;
    Ok(IndexSeries {
        dates: ev.dates.clone(),
        raw,
        filtered,
    })
}

/// `date,raw_se,filtered_se`.
pub fn write_index_csv<W: Write>(idx: &IndexSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::InvalidData(format!("index csv: {e}"));
    w.write_record(["date", "raw_se", "filtered_se"]).map_err(err)?;
    for i in 0..idx.dates.len() {
        w.write_record([
            idx.dates[i].to_string(),
            idx.raw[i].to_string(),
            idx.filtered[i].to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::InvalidData(format!("index csv: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_window_edges() {
        let out = median_filter(&[1.0, 2.0, 100.0, 3.0, 4.0], 3).unwrap();
        assert_eq!(out, vec![1.5, 2.0, 3.0, 4.0, 3.5]);
    }

    #[test]
    fn even_window_lower_median() {
        // w=4: left 2, right 1
        let out = median_filter(&[4.0, 1.0, 3.0, 2.0], 4).unwrap();
        assert_eq!(out, vec![1.0, 3.0, 2.0, 2.0]);
    }

    #[test]
    fn spike_is_removed() {
        let mut x = vec![0.0; 60];
        x[30] = 9.0;
        assert!(median_filter(&x, 20).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_and_constant() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0];
        assert_eq!(median_filter(&x, 1).unwrap(), x.to_vec());
        assert_eq!(median_filter(&[2.5; 7], 20).unwrap(), vec![2.5; 7]);
        assert!(median_filter(&[], 3).is_err());
    }

    #[test]
    fn squared_errors() {
        let dates: Vec<NaiveDate> = (1..=3).map(|k| NaiveDate::from_ymd_opt(2010, 1, k).unwrap()).collect();
        let s = [100.0, 110.0, 99.0];
        let p: Vec<f64> = s.iter().map(|v| v * 0.01f64.exp()).collect();
        let ev = EvaluationSeries::consecutive(&dates, &s, &p, None, &[false; 3]).unwrap();
        for e in squared_logreturn_errors(&ev).unwrap() {
            assert!((e - 1e-4).abs() < 1e-15);
        }
        // 3-point hand example: S = 100, 110, 99; Ŝ_2 = 105, Ŝ_3 = 100
        let ev = EvaluationSeries::consecutive(&dates, &s, &[1.0, 105.0, 100.0], None, &[false; 3]).unwrap();
        let e = squared_logreturn_errors(&ev).unwrap();
        assert!((e[0] - (105.0f64 / 110.0).ln().powi(2)).abs() < 1e-15);
        assert!((e[1] - (100.0f64 / 99.0).ln().powi(2)).abs() < 1e-15);
    }
}
