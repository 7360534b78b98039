//! Evaluation metrics: next-activity accuracy, mean absolute error in days,
//! and edit-distance similarity between predicted and actual suffixes, plus
//! per-prefix-length aggregation into a result table.

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// One evaluated prefix. Which components are present depends on the task:
/// next-event evaluation fills `activity` and `seconds` (the time until the
/// next event), suffix evaluation fills `suffix`, remaining-time evaluation
/// fills `seconds` with remaining durations.
#[derive(Clone, Debug)]
pub struct EvalRecord {
    pub prefix_length: usize,
    /// (predicted class, actual class); the end-of-case class participates.
    pub activity: Option<(usize, usize)>,
    /// (predicted seconds, actual seconds).
    pub seconds: Option<(f64, f64)>,
    /// (predicted activity ids, actual activity ids).
    pub suffix: Option<(Vec<usize>, Vec<usize>)>,
}

/// Fraction of records whose predicted activity equals the actual one.
pub fn accuracy(records: &[EvalRecord]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for r in records {
        if let Some((pred, actual)) = r.activity {
            total += 1;
            if pred == actual {
                hits += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("accuracy"));
    }
    Ok(hits as f64 / total as f64)
}

/// Mean absolute error of the duration predictions, in days.
pub fn mae_days(records: &[EvalRecord]) -> Result<f64> {
    let mut sum = 0.0;
    let mut total = 0usize;
    for r in records {
        if let Some((pred, actual)) = r.seconds {
            sum += (pred - actual).abs();
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("mae_days"));
    }
    Ok(sum / total as f64 / SECONDS_PER_DAY)
}

/// Edit distance with insertions, deletions, substitutions, and adjacent
/// transpositions (optimal string alignment: no substring is edited twice).
pub fn dl_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let n = a.len();
    let m = b.len();
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut best = (d[i - 1][j] + 1)
                .min(d[i][j - 1] + 1)
                .min(d[i - 1][j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                best = best.min(d[i - 2][j - 2] + 1);
            }
            d[i][j] = best;
        }
    }
    d[n][m]
}

/// Similarity in [0, 1]: one minus the edit distance normalized by the
/// longer sequence. Two empty sequences are a perfect match.
pub fn dls<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - dl_distance(a, b) as f64 / longest as f64
}

/// Mean suffix similarity over the records that carry suffixes.
pub fn mean_dls(records: &[EvalRecord]) -> Result<f64> {
    let mut sum = 0.0;
    let mut total = 0usize;
    for r in records {
        if let Some((pred, actual)) = &r.suffix {
            sum += dls(pred, actual);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("mean_dls"));
    }
    Ok(sum / total as f64)
}

/// One row of the result table; `prefix` is None for the "All" row.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub prefix: Option<usize>,
    pub count: usize,
    pub accuracy: Option<f64>,
    pub mae_days: Option<f64>,
    pub dls: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

impl MetricTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("prefix,accuracy,mae_days,dls\n");
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            let prefix = row
                .prefix
                .map(|p| p.to_string())
                .unwrap_or_else(|| "All".into());
            out.push_str(&format!(
                "{},{},{},{}\n",
                prefix,
                cell(row.accuracy),
                cell(row.mae_days),
                cell(row.dls)
            ));
        }
        out
    }

    pub fn all_row(&self) -> &MetricRow {
        self.rows.last().expect("tables always carry an All row")
    }
}

fn row_over<'a>(prefix: Option<usize>, records: impl Iterator<Item = &'a EvalRecord>) -> MetricRow {
    let subset: Vec<&EvalRecord> = records.collect();
    let cloned: Vec<EvalRecord> = subset.iter().map(|r| (*r).clone()).collect();
    MetricRow {
        prefix,
        count: subset.len(),
        accuracy: accuracy(&cloned).ok(),
        mae_days: mae_days(&cloned).ok(),
        dls: mean_dls(&cloned).ok(),
    }
}

/// Per-prefix rows for the requested sizes plus an "All" row over every
/// record (not only the displayed sizes).
pub fn aggregate(records: &[EvalRecord], displayed_prefixes: &[usize]) -> Result<MetricTable> {
    if records.is_empty() {
        return Err(Error::EmptyInput("aggregate"));
    }
    let mut rows = Vec::with_capacity(displayed_prefixes.len() + 1);
    let mut shown: Vec<usize> = displayed_prefixes.to_vec();
    shown.dedup();
    for &prefix in &shown {
        rows.push(row_over(
            Some(prefix),
            records.iter().filter(|r| r.prefix_length == prefix),
        ));
    }
    rows.push(row_over(None, records.iter()));
    Ok(MetricTable { rows })
}

/// All distinct prefix lengths present, ascending. Handy for tables that
/// report one row per observed size.
pub fn observed_prefixes(records: &[EvalRecord]) -> Vec<usize> {
    let mut seen: Vec<usize> = records.iter().map(|r| r.prefix_length).collect();
    seen.sort_unstable();
    seen.dedup();
    seen
}
