//! Recession-aligned sub-periods and their four data parts.
//!
//! A sub-period spans two adjacent recessions. Inside it the rows are carved
//! into, in chronological order:
//!
//! * ISWR: in-sample rows with recession, built around the first recession
//! * ISWOR: in-sample rows without recession, taken from the expansion between
//!   the two recessions after trimming a buffer at both ends
//! * Validation: the first 30% of the second recession
//! * OOS: the last 70% of the second recession plus an equal number of
//!   expansion rows
//!
//! The six numbered constraints checked by [`validate_split`] are:
//!
//! 1. every in-sample row precedes every OOS row
//! 2. `|ISWR| == |ISWOR|`
//! 3. OOS holds as many recession rows as expansion rows (within one)
//! 4. the second recession is divided 70/30 between OOS and Validation
//! 5. ISWOR is expansion-only and keeps a 10% buffer at each end of the
//!    expansion it is drawn from
//! 6. at most half of ISWR is recession

use std::ops::Range;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use crate::data::{FeaturePanel, RecessionCalendar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubPeriod {
    pub label: String,
    /// Every row the split may draw from.
    pub rows: Range<usize>,
    pub first_recession: Range<usize>,
    pub second_recession: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitSet {
    pub iswr: Vec<usize>,
    pub iswor: Vec<usize>,
    pub validation: Vec<usize>,
    pub oos: Vec<usize>,
}

impl SplitSet {
    pub fn train_rows(&self, set: TrainSet) -> &[usize] {
        match set {
            TrainSet::Iswr => &self.iswr,
            TrainSet::Iswor => &self.iswor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainSet {
    /// Recession-trained.
    Iswr,
    /// Non-recession-trained.
    Iswor,
}

impl TrainSet {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainSet::Iswr => "iswr",
            TrainSet::Iswor => "iswor",
        }
    }
}

impl std::str::FromStr for TrainSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iswr" | "rt" => Ok(TrainSet::Iswr),
            "iswor" | "nrt" => Ok(TrainSet::Iswor),
            other => Err(Error::Config(format!("unknown train set `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPolicy {
    pub oos_recession_share: f64,
    pub validation_recession_share: f64,
    pub buffer_fraction: f64,
    pub max_iswr_recession_fraction: f64,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self {
            oos_recession_share: 0.7,
            validation_recession_share: 0.3,
            buffer_fraction: 0.10,
            max_iswr_recession_fraction: 0.5,
        }
    }
}

impl SplitPolicy {
    pub fn check(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        if !in_unit(self.oos_recession_share)
            || !in_unit(self.validation_recession_share)
            || (self.oos_recession_share + self.validation_recession_share - 1.0).abs() > 1e-12
        {
            return Err(Error::Config("recession shares must lie in (0,1) and sum to 1".into()));
        }
        if !(0.0..0.5).contains(&self.buffer_fraction) || !in_unit(self.max_iswr_recession_fraction) {
            return Err(Error::Config("buffer or ISWR fraction out of range".into()));
        }
        Ok(())
    }

    /// Rows of a recession of length `n` assigned to OOS (rounded up).
    pub fn oos_recession_rows(&self, n: usize) -> usize {
        ceil_eps(self.oos_recession_share * n as f64).min(n)
    }

    pub fn buffer_rows(&self, n: usize) -> usize {
        ceil_eps(self.buffer_fraction * n as f64)
    }
}

fn ceil_eps(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Row ranges of calendar intervals that contain at least one panel row.
fn recession_row_ranges(panel: &FeaturePanel, calendar: &RecessionCalendar) -> Vec<Range<usize>> {
    calendar
        .intervals()
        .iter()
        .filter_map(|(s, e)| {
            let lo = panel.dates.partition_point(|d| d < s);
            let hi = panel.dates.partition_point(|d| d <= e);
            (lo < hi).then_some(lo..hi)
        })
        .collect()
}

pub fn build_subperiods(panel: &FeaturePanel, calendar: &RecessionCalendar) -> Result<Vec<SubPeriod>> {
    build_subperiods_with(panel, calendar, &SplitPolicy::default())
}

/// One sub-period per pair of consecutive recessions intersecting the panel.
pub fn build_subperiods_with(
    panel: &FeaturePanel,
    calendar: &RecessionCalendar,
    policy: &SplitPolicy,
) -> Result<Vec<SubPeriod>> {
    let recs = recession_row_ranges(panel, calendar);
    if recs.len() < 2 {
        return Err(Error::Split {
            constraint: "sub-period",
            reason: format!("need at least 2 recessions inside the panel, found {}", recs.len()),
        });
    }
    let mut out = Vec::with_capacity(recs.len() - 1);
    for i in 0..recs.len() - 1 {
        let first = recs[i].clone();
        let second = recs[i + 1].clone();
        let start = if i == 0 { 0 } else { recs[i - 1].end };
        let limit = recs.get(i + 2).map_or(panel.len(), |r| r.start);
        let wanted = policy.oos_recession_rows(second.len());
        let end = (second.end + wanted).min(limit);
        let yy = |row: usize| panel.dates[row].year().rem_euclid(100);
        out.push(SubPeriod {
            label: format!("{:02}-{:02}", yy(first.start), yy(end - 1)),
            rows: start..end,
            first_recession: first,
            second_recession: second,
        });
    }
    Ok(out)
}

/// Carve a sub-period into ISWR, ISWOR, Validation and OOS.
///
/// Validation is the chronologically first share of the second recession and
/// OOS the rest, balanced with expansion rows after the recession (or, when the
/// panel ends first, immediately before Validation). ISWR is the largest block
/// around the first recession with at most half recession rows for which an
/// equally sized ISWOR still fits inside the buffered expansion. It prefers
/// expansion rows before the recession and falls back to rows after it.
pub fn split_subperiod(sp: &SubPeriod, policy: &SplitPolicy) -> Result<SplitSet> {
    policy.check()?;
    let r1 = sp.first_recession.clone();
    let r2 = sp.second_recession.clone();
    if r1.is_empty() || r2.is_empty() || r1.end > r2.start || sp.rows.start > r1.start || r2.end > sp.rows.end {
        return Err(Error::Split {
            constraint: "structure",
            reason: format!("sub-period {} does not contain both recessions", sp.label),
        });
    }

    let n_oos_rec = policy.oos_recession_rows(r2.len());
    let n_val = r2.len() - n_oos_rec;
    if n_val == 0 {
        return Err(Error::Split {
            constraint: "(4)",
            reason: format!(
                "second recession of {} has {} rows, too few for a validation share",
                sp.label,
                r2.len()
            ),
        });
    }
    let validation: Vec<usize> = (r2.start..r2.start + n_val).collect();

    let post = (sp.rows.end - r2.end).min(n_oos_rec);
    let pre_oos = n_oos_rec - post;
    if r2.start < r1.end + pre_oos {
        return Err(Error::Split {
            constraint: "(3)",
            reason: format!("not enough expansion rows to balance the OOS of {}", sp.label),
        });
    }
    let expansion_end = r2.start - pre_oos;
    let mut oos: Vec<usize> = (expansion_end..r2.start).collect();
    oos.extend(r2.start + n_val..r2.end + post);

    let preceding = r1.start - sp.rows.start;
    let max_frac = policy.max_iswr_recession_fraction;
    for rec_rows in (1..=r1.len()).rev() {
        let exp_rows = ceil_eps(rec_rows as f64 * (1.0 - max_frac) / max_frac);
        let iswr = if rec_rows == r1.len() {
            let before = preceding.min(exp_rows);
            (r1.start - before)..(r1.end + exp_rows - before)
        } else if preceding >= exp_rows {
            (r1.start - exp_rows)..(r1.start + rec_rows)
        } else {
            (r1.end - rec_rows)..(r1.end + exp_rows)
        };
        let e_start = iswr.end.max(r1.end);
        if e_start >= expansion_end {
            continue;
        }
        let e_len = expansion_end - e_start;
        let buffer = policy.buffer_rows(e_len);
        if e_len < 2 * buffer {
            continue;
        }
        let usable = (e_start + buffer)..(expansion_end - buffer);
        let size = iswr.len();
        if usable.len() < size {
            continue;
        }
        return Ok(SplitSet {
            iswr: iswr.collect(),
            iswor: (usable.end - size..usable.end).collect(),
            validation,
            oos,
        });
    }
    Err(Error::Split {
        constraint: "(2)",
        reason: format!(
            "expansion between the recessions of {} is too short for an ISWOR matching any admissible ISWR",
            sp.label
        ),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// `"(1)"` through `"(6)"`, or `"structure"` for malformed index sets.
    pub constraint: &'static str,
    pub message: String,
}

pub fn validate_split(s: &SplitSet, sp: &SubPeriod) -> Vec<Violation> {
    validate_split_with(s, sp, &SplitPolicy::default())
}

pub fn validate_split_with(s: &SplitSet, sp: &SubPeriod, policy: &SplitPolicy) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut flag = |constraint: &'static str, message: String| v.push(Violation { constraint, message });
    let r1 = &sp.first_recession;
    let r2 = &sp.second_recession;
    let in_rec = |i: &usize| r1.contains(i) || r2.contains(i);

    for (name, set) in [
        ("iswr", &s.iswr),
        ("iswor", &s.iswor),
        ("validation", &s.validation),
        ("oos", &s.oos),
    ] {
        if set.is_empty() {
            flag("structure", format!("{name} is empty"));
        }
        if set.windows(2).any(|w| w[1] <= w[0]) {
            flag("structure", format!("{name} is not strictly increasing"));
        }
        if set.iter().any(|i| !sp.rows.contains(i)) {
            flag("structure", format!("{name} has rows outside the sub-period"));
        }
    }
    if s.validation.windows(2).any(|w| w[1] != w[0] + 1) {
        flag("structure", "validation is not contiguous".into());
    }
    let eval: std::collections::BTreeSet<usize> = s.validation.iter().chain(&s.oos).copied().collect();
    if eval.len() != s.validation.len() + s.oos.len() {
        flag("structure", "validation and oos overlap".into());
    }
    if s.iswr.iter().chain(&s.iswor).any(|i| eval.contains(i)) {
        flag("structure", "training rows reused for validation or oos".into());
    }
    if s.iswr.iter().any(|i| s.iswor.binary_search(i).is_ok()) {
        flag("structure", "iswr and iswor overlap".into());
    }

    // (1)
    let max_train = s.iswr.iter().chain(&s.iswor).max();
    let min_oos = s.oos.iter().min();
    if let (Some(t), Some(o)) = (max_train, min_oos) {
        if t >= o {
            flag("(1)", format!("training row {t} does not precede first oos row {o}"));
        }
    }

    // (2)
    if s.iswr.len() != s.iswor.len() {
        flag(
            "(2)",
            format!("|iswr| = {} but |iswor| = {}", s.iswr.len(), s.iswor.len()),
        );
    }

    // (3)
    let oos_rec = s.oos.iter().filter(|i| in_rec(i)).count();
    let oos_exp = s.oos.len() - oos_rec;
    if oos_rec.abs_diff(oos_exp) > 1 {
        flag(
            "(3)",
            format!("oos has {oos_rec} recession vs {oos_exp} expansion rows"),
        );
    }

    // (4)
    let oos_r2 = s.oos.iter().filter(|i| r2.contains(i)).count();
    let val_r2 = s.validation.iter().filter(|i| r2.contains(i)).count();
    let want = policy.oos_recession_rows(r2.len());
    if oos_r2 != want || val_r2 != r2.len() - want || oos_r2 != oos_rec {
        flag(
            "(4)",
            format!(
                "second recession of {} rows split {oos_r2}/{val_r2} between oos/validation, expected {want}/{}",
                r2.len(),
                r2.len() - want
            ),
        );
    }

    // (5)
    if s.iswor.iter().any(in_rec) {
        flag("(5)", "iswor contains recession rows".into());
    }
    let e_start = s.iswr.last().map_or(r1.end, |&i| (i + 1).max(r1.end));
    let e_end = s.validation.iter().chain(&s.oos).min().copied().unwrap_or(r2.start);
    if e_end > e_start && !s.iswor.is_empty() {
        let buffer = policy.buffer_rows(e_end - e_start);
        let (lo, hi) = (s.iswor[0], *s.iswor.last().unwrap());
        if lo < e_start + buffer || hi + buffer >= e_end {
            flag(
                "(5)",
                format!("iswor {lo}..={hi} does not keep a {buffer}-row buffer inside expansion {e_start}..{e_end}"),
            );
        }
    } else if !s.iswor.is_empty() {
        flag("(5)", "no expansion rows between iswr and validation".into());
    }

    // (6)
    let iswr_rec = s.iswr.iter().filter(|i| in_rec(i)).count();
    if !s.iswr.is_empty() && iswr_rec as f64 > policy.max_iswr_recession_fraction * s.iswr.len() as f64 {
        flag("(6)", format!("iswr is {iswr_rec}/{} recession rows", s.iswr.len()));
    }
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSplit {
    pub label: String,
    #[serde(flatten)]
    pub split: SplitSet,
}

pub fn splits_to_json(splits: &[LabeledSplit]) -> Result<String> {
    Ok(serde_json::to_string_pretty(splits)?)
}

pub fn splits_from_json(text: &str) -> Result<Vec<LabeledSplit>> {
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_sp() -> SubPeriod {
        SubPeriod {
            label: "t".into(),
            rows: 0..100,
            first_recession: 10..20,
            second_recession: 80..90,
        }
    }

    /// Enumerates every placement of a 3-row validation block and a 7-row
    /// expansion block on the 100-row synthetic calendar and keeps the ones the
    /// constraints admit; used to freeze the expected OOS.
    fn brute_force_oos() -> Vec<usize> {
        let r2: Vec<usize> = (80..90).collect();
        let in_rec = |i: usize| (10..20).contains(&i) || (80..90).contains(&i);
        let mut admissible = Vec::new();
        for v in 0..100 {
            let val: Vec<usize> = (v..v + 3).collect();
            if !val.iter().all(|i| r2.contains(i)) {
                continue;
            }
            let oos_rec: Vec<usize> = r2.iter().copied().filter(|i| !val.contains(i)).collect();
            let contiguous = oos_rec.windows(2).all(|w| w[1] == w[0] + 1);
            // Validation is chronologically first.
            if !contiguous || val.iter().max() > oos_rec.iter().min() {
                continue;
            }
            for x in 20..94 {
                let exp: Vec<usize> = (x..x + 7).collect();
                let adjacent = x == oos_rec[oos_rec.len() - 1] + 1 || x + 7 == val[0];
                if exp.iter().any(|&i| in_rec(i)) || !adjacent {
                    continue;
                }
                let mut oos = oos_rec.clone();
                oos.extend(&exp);
                oos.sort();
                admissible.push((x, oos));
            }
        }
        // Rows after the recession are preferred over rows before validation.
        admissible.into_iter().max_by_key(|(x, _)| *x).unwrap().1
    }

    #[test]
    fn synthetic_calendar_split() {
        let s = split_subperiod(&synthetic_sp(), &SplitPolicy::default()).unwrap();
        let oos_expected = brute_force_oos();
        assert_eq!(oos_expected, (83..97).collect::<Vec<_>>());
        assert_eq!(s.oos, oos_expected);
        assert_eq!(s.validation, vec![80, 81, 82]);
        assert_eq!(s.iswr, (0..20).collect::<Vec<_>>());
        // Expansion 20..80 holds 60 rows; 6-row buffers leave 26..74.
        assert_eq!(s.iswor, (54..74).collect::<Vec<_>>());
        assert!(validate_split(&s, &synthetic_sp()).is_empty());
    }

    #[test]
    fn falls_back_to_rows_after_first_recession() {
        // First recession at the very start of the panel: nothing precedes it.
        let sp = SubPeriod {
            label: "t".into(),
            rows: 0..200,
            first_recession: 0..20,
            second_recession: 150..180,
        };
        let s = split_subperiod(&sp, &SplitPolicy::default()).unwrap();
        assert_eq!(s.iswr, (0..40).collect::<Vec<_>>());
        assert!(validate_split(&s, &sp).is_empty(), "{:?}", validate_split(&s, &sp));
    }

    #[test]
    fn shrinks_iswr_when_expansion_is_short() {
        let sp = SubPeriod {
            label: "t".into(),
            rows: 0..200,
            first_recession: 60..100,
            second_recession: 150..180,
        };
        let s = split_subperiod(&sp, &SplitPolicy::default()).unwrap();
        assert!(s.iswr.len() < 80);
        assert_eq!(s.iswr.len(), s.iswor.len());
        assert!(validate_split(&s, &sp).is_empty(), "{:?}", validate_split(&s, &sp));
    }

    #[test]
    fn oos_fallback_before_validation() {
        let sp = SubPeriod {
            label: "t".into(),
            rows: 0..185,
            first_recession: 10..20,
            second_recession: 150..180,
        };
        let s = split_subperiod(&sp, &SplitPolicy::default()).unwrap();
        // 21 recession rows, 5 rows after the panel's recession end, 16 before validation.
        assert_eq!(s.oos.len(), 42);
        assert_eq!(s.oos[0], 134);
        assert_eq!(*s.oos.last().unwrap(), 184);
        assert!(validate_split(&s, &sp).is_empty(), "{:?}", validate_split(&s, &sp));
    }

    #[test]
    fn too_short_reports_constraint() {
        let sp = SubPeriod {
            label: "t".into(),
            rows: 0..30,
            first_recession: 0..10,
            second_recession: 12..20,
        };
        match split_subperiod(&sp, &SplitPolicy::default()) {
            Err(Error::Split { constraint, .. }) => assert!(constraint.starts_with('(')),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn leakage_violation() {
        let sp = synthetic_sp();
        let mut s = split_subperiod(&sp, &SplitPolicy::default()).unwrap();
        s.iswor.push(95);
        s.oos.retain(|&i| i != 95);
        let v = validate_split(&s, &sp);
        assert!(v.iter().any(|v| v.constraint == "(1)"), "{v:?}");
    }

    #[test]
    fn iswr_recession_share_violation() {
        let sp = synthetic_sp();
        let mut s = split_subperiod(&sp, &SplitPolicy::default()).unwrap();
        // 10 recession rows out of 16.
        s.iswr = (4..20).collect();
        s.iswor = (58..74).collect();
        let v = validate_split(&s, &sp);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].constraint, "(6)");
    }

    #[test]
    fn size_parity_violation() {
        let sp = synthetic_sp();
        let mut s = split_subperiod(&sp, &SplitPolicy::default()).unwrap();
        s.iswor.remove(0);
        assert!(validate_split(&s, &sp).iter().any(|v| v.constraint == "(2)"));
    }

    #[test]
    fn json_keys() {
        let s = split_subperiod(&synthetic_sp(), &SplitPolicy::default()).unwrap();
        let text = splits_to_json(&[LabeledSplit {
            label: "t".into(),
            split: s.clone(),
        }])
        .unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let keys: Vec<&String> = value[0].as_object().unwrap().keys().collect();
        for k in ["label", "iswr", "iswor", "validation", "oos"] {
            assert!(keys.iter().any(|x| *x == k), "{k}");
        }
        assert_eq!(splits_from_json(&text).unwrap()[0].split, s);
    }

    #[test]
    fn policy_rounding() {
        let p = SplitPolicy::default();
        assert_eq!(p.oos_recession_rows(10), 7);
        assert_eq!(p.oos_recession_rows(11), 8);
        assert_eq!(p.oos_recession_rows(1), 1);
        assert_eq!(p.buffer_rows(60), 6);
        assert_eq!(p.buffer_rows(61), 7);
    }
}
