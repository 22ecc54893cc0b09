//! Loading and aligning the raw market inputs.
//!
//! Three CSV files feed the pipeline:
//!
//! * `prices.csv` with header `date,close`
//! * `factors.csv` with header `date,mkt_rf,smb,hml,mom[,rf]` plus any extra
//!   columns, which are carried through as additional features
//! * `recessions.csv` with header `start,end`
//!
//! Dates are `YYYY-MM-DD`. Factor files from the usual vendors publish
//! percents; the conversion is an explicit [`FactorLoadOptions`] flag and is
//! never guessed.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};

use crate::error::{Error, Result};

pub const FACTOR_COLUMNS: [&str; 4] = ["mkt_rf", "smb", "hml", "mom"];
pub const RF_COLUMN: &str = "rf";

/// Trading days per year used to turn an annualized yield into a daily rate.
pub const TRADING_DAYS_PER_YEAR: f64 = 252.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub dates: Vec<NaiveDate>,
    pub close: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, close: Vec<f64>) -> Result<Self> {
        if dates.len() != close.len() {
            return Err(Error::Shape(format!("{} dates vs {} closes", dates.len(), close.len())));
        }
        check_increasing(&dates)?;
        if let Some((i, c)) = close.iter().enumerate().find(|(_, c)| !(**c > 0.0) || !c.is_finite()) {
            return Err(Error::InvalidData(format!(
                "close on {} must be positive, got {c}",
                dates[i]
            )));
        }
        Ok(Self { dates, close })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}

/// Named daily factor series. Column names are normalized to lower case with
/// `-` replaced by `_`, so a vendor header `Mkt-RF` becomes `mkt_rf`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPanel {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl FactorPanel {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn has_rf(&self) -> bool {
        self.column(RF_COLUMN).is_some()
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Columns that are neither one of the four factors nor the risk-free rate.
    pub fn extra_columns(&self) -> impl Iterator<Item = &(String, Vec<f64>)> {
        self.columns
            .iter()
            .filter(|(n, _)| n != RF_COLUMN && !FACTOR_COLUMNS.contains(&n.as_str()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FactorLoadOptions {
    /// Factor and risk-free cells are percents (vendor convention) and get divided by 100.
    pub percent: bool,
    /// The risk-free column holds an annualized yield; it is divided by 252 after any
    /// percent conversion.
    pub rf_annualized: bool,
}

/// Closed, non-overlapping recession intervals in chronological order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecessionCalendar {
    intervals: Vec<(NaiveDate, NaiveDate)>,
}

/// NBER business-cycle peaks and troughs from December 1969 through April 2020,
/// each interval running from the first day of the peak month to the last day of
/// the trough month.
pub const NBER_1969_2020: [(&str, &str); 8] = [
    ("1969-12-01", "1970-11-30"),
    ("1973-11-01", "1975-03-31"),
    ("1980-01-01", "1980-07-31"),
    ("1981-07-01", "1982-11-30"),
    ("1990-07-01", "1991-03-31"),
    ("2001-03-01", "2001-11-30"),
    ("2007-12-01", "2009-06-30"),
    ("2020-02-01", "2020-04-30"),
];

impl RecessionCalendar {
    pub fn new(mut intervals: Vec<(NaiveDate, NaiveDate)>) -> Result<Self> {
        for (s, e) in &intervals {
            if e < s {
                return Err(Error::InvalidData(format!(
                    "recession interval ends ({e}) before it starts ({s})"
                )));
            }
        }
        intervals.sort();
        for pair in intervals.windows(2) {
            // Closed intervals: a shared boundary date is an overlap.
            if pair[1].0 <= pair[0].1 {
                return Err(Error::InvalidData(format!(
                    "recession intervals {}..{} and {}..{} overlap",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn nber() -> Self {
        let intervals = NBER_1969_2020
            .iter()
            .map(|(s, e)| (parse_date(s).unwrap(), parse_date(e).unwrap()))
            .collect();
        Self::new(intervals).expect("built-in calendar is valid")
    }

    pub fn intervals(&self) -> &[(NaiveDate, NaiveDate)] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        let idx = self.intervals.partition_point(|(s, _)| *s <= date);
        idx > 0 && date <= self.intervals[idx - 1].1
    }
}

/// Date-aligned model inputs.
///
/// Row `t` of `features` holds the index level and factor values observed on
/// `dates[t]`; a forecast for `target[t]` only ever reads rows before `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePanel {
    pub dates: Vec<NaiveDate>,
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub target: Vec<f64>,
    pub recession: Vec<bool>,
    /// Daily risk-free rate used by the ERP metrics, whether or not it is also a feature.
    pub rf: Option<Vec<f64>>,
}

impl FeaturePanel {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Risk-free rate on row `t`, zero when the panel carries none.
    pub fn rf_at(&self, t: usize) -> f64 {
        self.rf.as_ref().map_or(0.0, |r| r[t])
    }

    /// Serialize as CSV: `date,target,recession,<features...>[,rf_rate]`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string(), "target".into(), "recession".into()];
        header.extend(self.feature_names.iter().map(|n| format!("x_{n}")));
        if self.rf.is_some() {
            header.push("rf_rate".into());
        }
        w.write_record(&header).map_err(csv_write_err)?;
        for t in 0..self.len() {
            let mut rec = vec![
                self.dates[t].to_string(),
                self.target[t].to_string(),
                (self.recession[t] as u8).to_string(),
            ];
            rec.extend(self.features[t].iter().map(f64::to_string));
            if let Some(rf) = &self.rf {
                rec.push(rf[t].to_string());
            }
            w.write_record(&rec).map_err(csv_write_err)?;
        }
        w.flush().map_err(|e| Error::io("<panel>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let label = Path::new("<panel>");
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr.headers().map_err(|e| parse_err(label, 1, e.to_string()))?.clone();
        if header.len() < 3 || &header[0] != "date" || &header[1] != "target" || &header[2] != "recession" {
            return Err(parse_err(label, 1, "expected header date,target,recession,...".into()));
        }
        let has_rf = header.iter().next_back() == Some("rf_rate");
        let feat_end = if has_rf { header.len() - 1 } else { header.len() };
        let feature_names: Vec<String> = header
            .iter()
            .take(feat_end)
            .skip(3)
            .map(|h| h.strip_prefix("x_").unwrap_or(h).to_string())
            .collect();
        let mut panel = FeaturePanel {
            dates: Vec::new(),
            feature_names,
            features: Vec::new(),
            target: Vec::new(),
            recession: Vec::new(),
            rf: has_rf.then(Vec::new),
        };
        for rec in rdr.records() {
            let rec = rec.map_err(|e| parse_err(label, e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            panel
                .dates
                .push(parse_date(&rec[0]).map_err(|m| parse_err(label, line, m))?);
            panel
                .target
                .push(parse_f64(&rec[1]).map_err(|m| parse_err(label, line, m))?);
            panel.recession.push(&rec[2] == "1");
            let row = (3..feat_end)
                .map(|i| parse_f64(&rec[i]))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|m| parse_err(label, line, m))?;
            panel.features.push(row);
            if let Some(rf) = panel.rf.as_mut() {
                rf.push(parse_f64(&rec[feat_end]).map_err(|m| parse_err(label, line, m))?);
            }
        }
        Ok(panel)
    }
}

pub fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| format!("bad date `{s}`: {e}"))
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("bad number `{s}`"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite number `{s}`"))
    }
}

fn parse_err(path: &Path, line: u64, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

fn csv_write_err(e: csv::Error) -> Error {
    Error::InvalidData(format!("csv write failed: {e}"))
}

fn check_increasing(dates: &[NaiveDate]) -> Result<()> {
    for pair in dates.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidData(format!(
                "dates must be strictly increasing: {} follows {}",
                pair[1], pair[0]
            )));
        }
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file)))
}

fn normalize_header(h: &str) -> String {
    h.trim().to_ascii_lowercase().replace('-', "_")
}

fn header_index(path: &Path, header: &[String], column: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: column.to_string(),
        })
}

fn headers(path: &Path, rdr: &mut csv::Reader<BufReader<File>>) -> Result<Vec<String>> {
    Ok(rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(normalize_header)
        .collect())
}

fn records<'a>(
    path: &'a Path,
    rdr: &'a mut csv::Reader<BufReader<File>>,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + 'a {
    rdr.records().map(move |r| {
        let rec = r.map_err(|e| parse_err(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        Ok((rec.position().map_or(0, |p| p.line()), rec))
    })
}

pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PriceSeries> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let header = headers(path, &mut rdr)?;
    let di = header_index(path, &header, "date")?;
    let ci = header_index(path, &header, "close")?;
    let mut dates = Vec::new();
    let mut close = Vec::new();
    for item in records(path, &mut rdr) {
        let (line, rec) = item?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let d = parse_date(field(di)).map_err(|m| parse_err(path, line, m))?;
        let c = parse_f64(field(ci)).map_err(|m| parse_err(path, line, m))?;
        if let Some(prev) = dates.last() {
            if d <= *prev {
                return Err(parse_err(path, line, format!("date {d} does not follow {prev}")));
            }
        }
        if c <= 0.0 {
            return Err(parse_err(path, line, format!("close must be positive, got {c}")));
        }
        dates.push(d);
        close.push(c);
    }
    Ok(PriceSeries { dates, close })
}

pub fn load_factor_csv(path: impl AsRef<Path>, opts: FactorLoadOptions) -> Result<FactorPanel> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let header = headers(path, &mut rdr)?;
    let di = header_index(path, &header, "date")?;
    for col in FACTOR_COLUMNS {
        header_index(path, &header, col)?;
    }
    let value_cols: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != di)
        .map(|(i, h)| (i, h.clone()))
        .collect();
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); value_cols.len()];
    for item in records(path, &mut rdr) {
        let (line, rec) = item?;
        let d = parse_date(rec.get(di).unwrap_or("")).map_err(|m| parse_err(path, line, m))?;
        if let Some(prev) = dates.last() {
            if d <= *prev {
                return Err(parse_err(path, line, format!("date {d} does not follow {prev}")));
            }
        }
        dates.push(d);
        for (slot, (i, name)) in values.iter_mut().zip(&value_cols) {
            let mut v =
                parse_f64(rec.get(*i).unwrap_or("")).map_err(|m| parse_err(path, line, format!("{name}: {m}")))?;
            let is_rate = name == RF_COLUMN || FACTOR_COLUMNS.contains(&name.as_str());
            if opts.percent && is_rate {
                v /= 100.0;
            }
            if opts.rf_annualized && name == RF_COLUMN {
                v /= TRADING_DAYS_PER_YEAR;
            }
            slot.push(v);
        }
    }
    let columns = value_cols.into_iter().map(|(_, n)| n).zip(values).collect();
    Ok(FactorPanel { dates, columns })
}

pub fn load_recession_calendar(path: impl AsRef<Path>) -> Result<RecessionCalendar> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let header = headers(path, &mut rdr)?;
    let si = header_index(path, &header, "start")?;
    let ei = header_index(path, &header, "end")?;
    let mut intervals = Vec::new();
    for item in records(path, &mut rdr) {
        let (line, rec) = item?;
        let s = parse_date(rec.get(si).unwrap_or("")).map_err(|m| parse_err(path, line, m))?;
        let e = parse_date(rec.get(ei).unwrap_or("")).map_err(|m| parse_err(path, line, m))?;
        intervals.push((s, e));
    }
    RecessionCalendar::new(intervals)
}

/// Inner-join prices and factors on date and attach recession flags.
///
/// Feature order is `close, mkt_rf, smb, hml, mom`, then any extra factor-file
/// columns, then `rf` when `use_rf` is set.
pub fn align_panel(
    prices: &PriceSeries,
    factors: &FactorPanel,
    calendar: &RecessionCalendar,
    use_rf: bool,
) -> Result<FeaturePanel> {
    if prices.is_empty() || factors.is_empty() {
        return Err(Error::InvalidData("cannot align empty inputs".into()));
    }
    if use_rf && !factors.has_rf() {
        return Err(Error::InvalidData(
            "risk-free feature requested but the factor file has no `rf` column".into(),
        ));
    }
    let mut cols: Vec<(&str, &[f64])> = FACTOR_COLUMNS
        .iter()
        .map(|c| (*c, factors.column(c).expect("checked at load")))
        .collect();
    cols.extend(factors.extra_columns().map(|(n, v)| (n.as_str(), v.as_slice())));
    if use_rf {
        cols.push((RF_COLUMN, factors.column(RF_COLUMN).unwrap()));
    }
    let rf_src = factors.column(RF_COLUMN);

    let mut feature_names = vec!["close".to_string()];
    feature_names.extend(cols.iter().map(|(n, _)| n.to_string()));

    let mut panel = FeaturePanel {
        dates: Vec::new(),
        feature_names,
        features: Vec::new(),
        target: Vec::new(),
        recession: Vec::new(),
        rf: rf_src.map(|_| Vec::new()),
    };
    let (mut i, mut j) = (0, 0);
    while i < prices.len() && j < factors.len() {
        match prices.dates[i].cmp(&factors.dates[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let d = prices.dates[i];
                let mut row = Vec::with_capacity(cols.len() + 1);
                row.push(prices.close[i]);
                row.extend(cols.iter().map(|(_, v)| v[j]));
                panel.dates.push(d);
                panel.features.push(row);
                panel.target.push(prices.close[i]);
                panel.recession.push(calendar.contains(d));
                if let (Some(dst), Some(src)) = (panel.rf.as_mut(), rf_src) {
                    dst.push(src[j]);
                }
                i += 1;
                j += 1;
            }
        }
    }
    if panel.is_empty() {
        return Err(Error::InvalidData("prices and factors share no dates".into()));
    }
    Ok(panel)
}

/// Monday-to-Friday calendar between two dates, inclusive. Exchange holidays are
/// not removed.
pub fn weekdays(start: NaiveDate, end: NaiveDate) -> Vec<NaiveDate> {
    start
        .iter_days()
        .take_while(|d| *d <= end)
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_price_rows() {
        let f = write_tmp("date,close\n2020-01-02,3257.85\n2020-01-03,3234.85\n2020-01-06,3246.28\n");
        let p = load_price_csv(f.path()).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.dates, vec![d("2020-01-02"), d("2020-01-03"), d("2020-01-06")]);
        assert_eq!(p.close[1], 3234.85);
    }

    #[test]
    fn price_dates_must_increase() {
        let f = write_tmp("date,close\n2020-01-02,1\n2020-01-01,2\n");
        let err = load_price_csv(f.path()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn price_must_be_positive() {
        let f = write_tmp("date,close\n2020-01-02,1\n2020-01-03,-5.0\n");
        let err = load_price_csv(f.path()).unwrap_err();
        assert!(err.to_string().contains("positive"), "{err}");
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = write_tmp("date,close\n2020-01-02,1\n2020-01-03,abc\n");
        match load_price_csv(f.path()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_price_csv("/nonexistent/prices.csv"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn factor_percent_conversion() {
        let f = write_tmp("Date,Mkt-RF,SMB,HML,Mom,RF\n1970-01-02,0.52,0.1,-0.2,0.3,0.02\n");
        let p = load_factor_csv(
            f.path(),
            FactorLoadOptions {
                percent: true,
                rf_annualized: false,
            },
        )
        .unwrap();
        assert!((p.column("mkt_rf").unwrap()[0] - 0.0052).abs() < 1e-15);
        assert!((p.column("rf").unwrap()[0] - 0.0002).abs() < 1e-15);
    }

    #[test]
    fn factor_missing_momentum() {
        let f = write_tmp("date,mkt_rf,smb,hml\n1970-01-02,0.5,0.1,0.2\n");
        match load_factor_csv(f.path(), FactorLoadOptions::default()).unwrap_err() {
            Error::MissingColumn { column, .. } => assert_eq!(column, "mom"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn factor_empty_body() {
        let f = write_tmp("date,mkt_rf,smb,hml,mom\n");
        let p = load_factor_csv(f.path(), FactorLoadOptions::default()).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn annualized_rf() {
        let f = write_tmp("date,mkt_rf,smb,hml,mom,rf\n1970-01-02,0,0,0,0,5.04\n");
        let opts = FactorLoadOptions {
            percent: true,
            rf_annualized: true,
        };
        let p = load_factor_csv(f.path(), opts).unwrap();
        assert!((p.column("rf").unwrap()[0] - 0.0002).abs() < 1e-15);
    }

    #[test]
    fn nber_calendar_has_seven_pairs() {
        let f = write_tmp(
            &std::iter::once("start,end".to_string())
                .chain(NBER_1969_2020.iter().map(|(s, e)| format!("{s},{e}")))
                .collect::<Vec<_>>()
                .join("\n"),
        );
        let cal = load_recession_calendar(f.path()).unwrap();
        assert_eq!(cal.len(), 8);
        assert_eq!(cal, RecessionCalendar::nber());
        assert!(cal.contains(d("2008-10-15")));
        assert!(!cal.contains(d("2010-10-15")));
        assert!(cal.contains(d("1969-12-01")) && cal.contains(d("1970-11-30")));
    }

    #[test]
    fn recession_end_before_start() {
        let f = write_tmp("start,end\n2001-11-30,2001-03-01\n");
        assert!(load_recession_calendar(f.path()).is_err());
    }

    #[test]
    fn touching_intervals_overlap() {
        let err = RecessionCalendar::new(vec![
            (d("2001-01-01"), d("2001-03-01")),
            (d("2001-03-01"), d("2001-06-01")),
        ])
        .unwrap_err();
        assert!(err.to_string().contains("overlap"));
    }

    fn toy_factors(dates: &[&str], rf: bool) -> FactorPanel {
        let n = dates.len();
        let mut columns: Vec<(String, Vec<f64>)> = FACTOR_COLUMNS
            .iter()
            .enumerate()
            .map(|(k, c)| (c.to_string(), (0..n).map(|i| (k * 10 + i) as f64).collect()))
            .collect();
        if rf {
            columns.push(("rf".into(), vec![0.0001; n]));
        }
        FactorPanel {
            dates: dates.iter().map(|s| d(s)).collect(),
            columns,
        }
    }

    #[test]
    fn align_intersects_dates() {
        let prices = PriceSeries::new(
            vec![d("2020-01-01"), d("2020-01-02"), d("2020-01-03")],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        let factors = toy_factors(&["2020-01-02", "2020-01-03", "2020-01-04"], false);
        let cal = RecessionCalendar::new(vec![(d("2020-01-03"), d("2020-02-01"))]).unwrap();
        let panel = align_panel(&prices, &factors, &cal, false).unwrap();
        assert_eq!(panel.dates, vec![d("2020-01-02"), d("2020-01-03")]);
        assert_eq!(panel.recession, vec![false, true]);
        assert_eq!(panel.features[0], vec![2.0, 0.0, 10.0, 20.0, 30.0]);
        assert_eq!(panel.target, vec![2.0, 3.0]);
    }

    #[test]
    fn align_rf_requires_column() {
        let prices = PriceSeries::new(vec![d("2020-01-02")], vec![1.0]).unwrap();
        let factors = toy_factors(&["2020-01-02"], false);
        let cal = RecessionCalendar::new(vec![]).unwrap();
        assert!(align_panel(&prices, &factors, &cal, true).is_err());
        let factors = toy_factors(&["2020-01-02"], true);
        let panel = align_panel(&prices, &factors, &cal, true).unwrap();
        assert_eq!(panel.feature_names.last().unwrap(), "rf");
    }

    #[test]
    fn align_empty_intersection() {
        let prices = PriceSeries::new(vec![d("2020-01-01")], vec![1.0]).unwrap();
        let factors = toy_factors(&["2020-01-02"], false);
        let cal = RecessionCalendar::new(vec![]).unwrap();
        assert!(align_panel(&prices, &factors, &cal, false).is_err());
    }

    #[test]
    fn weekdays_skip_weekends() {
        let days = weekdays(d("2020-01-01"), d("2020-01-07"));
        assert_eq!(days.len(), 5);
    }
}
