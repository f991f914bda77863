use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source column names for the fields the pipeline reads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMap {
    pub timestamp: String,
    pub fwd_iat_mean: String,
    pub fwd_pkt_len_mean: String,
    pub label: String,
    /// chrono format for the timestamp column; purely numeric values are read as epoch seconds.
    pub timestamp_format: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "Timestamp".into(),
            fwd_iat_mean: "Fwd IAT Mean".into(),
            fwd_pkt_len_mean: "Fwd Pkt Len Mean".into(),
            label: "Label".into(),
            timestamp_format: "%d/%m/%Y %H:%M:%S".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowRecord {
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    /// Microseconds.
    pub fwd_iat_mean: f64,
    /// Bytes.
    pub fwd_pkt_len_mean: f64,
    pub label: String,
}

impl FlowRecord {
    pub fn is_attack(&self) -> bool {
        !self.label.trim().eq_ignore_ascii_case("benign")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
}

fn parse_timestamp(raw: &str, format: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<f64>() {
        return secs.is_finite().then_some(secs.floor() as i64);
    }
    NaiveDateTime::parse_from_str(raw, format)
        .ok()
        .map(|dt| dt.and_utc().timestamp())
}

fn parse_value(raw: &str) -> Option<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite() && *v >= 0.0)
}

/// Reads flow records; rows with unparseable, infinite or negative values are dropped.
pub fn ingest_csv(path: &Path, columns: &ColumnMap) -> Result<(Vec<FlowRecord>, IngestReport)> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };
    let ts = find(&columns.timestamp)?;
    let iat = find(&columns.fwd_iat_mean)?;
    let len = find(&columns.fwd_pkt_len_mean)?;
    let label = find(&columns.label)?;

    let mut records = Vec::new();
    let mut report = IngestReport::default();
    for row in reader.records() {
        report.rows_read += 1;
        let parsed = row.ok().and_then(|r| {
            Some(FlowRecord {
                timestamp: parse_timestamp(r.get(ts)?, &columns.timestamp_format)?,
                fwd_iat_mean: parse_value(r.get(iat)?)?,
                fwd_pkt_len_mean: parse_value(r.get(len)?)?,
                label: r.get(label)?.to_owned(),
            })
        });
        match parsed {
            Some(rec) => records.push(rec),
            None => report.rows_dropped += 1,
        }
    }
    if records.is_empty() {
        return Err(Error::NoValidRows);
    }
    Ok((records, report))
}

/// One-second bucket of traffic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalAggregate {
    /// Bucket index, seconds from the first bucket.
    pub t: u64,
    /// Mean forward inter-arrival time.
    pub a: f64,
    /// Mean forward packet length.
    pub b: f64,
    pub attack_count: u64,
}

impl IntervalAggregate {
    pub fn label(&self) -> bool {
        self.attack_count > 0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AggregateReport {
    pub buckets: usize,
    pub filled: usize,
    pub attack_records: u64,
}

/// Per-second means of both features. Seconds with no records repeat the
/// previous bucket's values with an attack count of zero.
pub fn aggregate_1s(records: &[FlowRecord]) -> Result<(Vec<IntervalAggregate>, AggregateReport)> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    // (sum a, sum b, count, attacks)
    let mut buckets: BTreeMap<i64, (f64, f64, u64, u64)> = BTreeMap::new();
    for r in records {
        let e = buckets.entry(r.timestamp).or_default();
        e.0 += r.fwd_iat_mean;
        e.1 += r.fwd_pkt_len_mean;
        e.2 += 1;
        e.3 += u64::from(r.is_attack());
    }
    let first = *buckets.keys().next().unwrap();
    let last = *buckets.keys().next_back().unwrap();
    let mut out = Vec::with_capacity((last - first + 1) as usize);
    let mut report = AggregateReport::default();
    let (mut prev_a, mut prev_b) = (0.0, 0.0);
    for sec in first..=last {
        let t = (sec - first) as u64;
        match buckets.get(&sec) {
            Some(&(sa, sb, n, attacks)) => {
                prev_a = sa / n as f64;
                prev_b = sb / n as f64;
                report.attack_records += attacks;
                out.push(IntervalAggregate {
                    t,
                    a: prev_a,
                    b: prev_b,
                    attack_count: attacks,
                });
            }
            None => {
                report.filled += 1;
                out.push(IntervalAggregate {
                    t,
                    a: prev_a,
                    b: prev_b,
                    attack_count: 0,
                });
            }
        }
    }
    report.buckets = out.len();
    Ok((out, report))
}

/// Per-second series of every numeric column, for feature screening.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSeries {
    /// `(column name, per-second mean)`, in file order.
    pub columns: Vec<(String, Vec<f64>)>,
    /// 1 for seconds containing any attack record, else 0.
    pub labels: Vec<f64>,
    /// Columns with no finite non-negative value at all.
    pub skipped: Vec<String>,
}

/// Aggregates every column other than the timestamp and label to one-second
/// means. Unparseable cells are ignored; empty seconds carry the previous value.
pub fn candidate_series(path: &Path, columns: &ColumnMap) -> Result<CandidateSeries> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };
    let ts = find(&columns.timestamp)?;
    let label = find(&columns.label)?;
    let features: Vec<usize> = (0..headers.len()).filter(|&i| i != ts && i != label).collect();

    // per second: (sums, counts, attack)
    let mut buckets: BTreeMap<i64, (Vec<f64>, Vec<u64>, bool)> = BTreeMap::new();
    for row in reader.records() {
        let Ok(row) = row else { continue };
        let Some(sec) = row.get(ts).and_then(|r| parse_timestamp(r, &columns.timestamp_format)) else {
            continue;
        };
        let attack = row
            .get(label)
            .is_some_and(|l| !l.trim().eq_ignore_ascii_case("benign"));
        let e = buckets
            .entry(sec)
            .or_insert_with(|| (vec![0.0; features.len()], vec![0; features.len()], false));
        e.2 |= attack;
        for (k, &c) in features.iter().enumerate() {
            if let Some(v) = row.get(c).and_then(parse_value) {
                e.0[k] += v;
                e.1[k] += 1;
            }
        }
    }
    let (Some(&first), Some(&last)) = (buckets.keys().next(), buckets.keys().next_back()) else {
        return Err(Error::NoValidRows);
    };
    let span = (last - first + 1) as usize;
    let mut series = vec![Vec::with_capacity(span); features.len()];
    let mut labels = Vec::with_capacity(span);
    let mut prev = vec![None; features.len()];
    for sec in first..=last {
        let bucket = buckets.get(&sec);
        labels.push(if bucket.is_some_and(|b| b.2) { 1.0 } else { 0.0 });
        for k in 0..features.len() {
            if let Some((sums, counts, _)) = bucket {
                if counts[k] > 0 {
                    prev[k] = Some(sums[k] / counts[k] as f64);
                }
            }
            series[k].push(prev[k].unwrap_or(f64::NAN));
        }
    }
    let mut out = CandidateSeries {
        columns: Vec::new(),
        labels,
        skipped: Vec::new(),
    };
    for (k, s) in series.into_iter().enumerate() {
        let name = headers[features[k]].trim().to_owned();
        match s.iter().position(|v| !v.is_nan()) {
            None => out.skipped.push(name),
            Some(first_valid) => {
                // back-fill the leading gap with the first observed value
                let fill = s[first_valid];
                out.columns.push((name, s.into_iter().map(|v| if v.is_nan() { fill } else { v }).collect()));
            }
        }
    }
    Ok(out)
}

/// Writes `t,a,b,attack_count`.
pub fn write_intervals<W: Write>(out: W, intervals: &[IntervalAggregate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "a", "b", "attack_count"])?;
    for i in intervals {
        w.write_record([
            i.t.to_string(),
            i.a.to_string(),
            i.b.to_string(),
            i.attack_count.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_intervals(path: &Path) -> Result<Vec<IntervalAggregate>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };
    let idx = [find("t")?, find("a")?, find("b")?, find("attack_count")?];
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let field = |k: usize| row.get(idx[k]).unwrap_or("").trim().to_owned();
        let bad = |k: usize| Error::ModelFormat(format!("bad interval field `{}`", field(k)));
        let a: f64 = field(1).parse().map_err(|_| bad(1))?;
        let b: f64 = field(2).parse().map_err(|_| bad(2))?;
        if !a.is_finite() || !b.is_finite() {
            return Err(bad(1));
        }
        out.push(IntervalAggregate {
            t: field(0).parse().map_err(|_| bad(0))?,
            a,
            b,
            attack_count: field(3).parse().map_err(|_| bad(3))?,
        });
    }
    if out.is_empty() {
        return Err(Error::NoValidRows);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ts: i64, a: f64, label: &str) -> FlowRecord {
        FlowRecord {
            timestamp: ts,
            fwd_iat_mean: a,
            fwd_pkt_len_mean: 2.0 * a,
            label: label.into(),
        }
    }

    const RAW: &str = "Timestamp,Fwd IAT Mean,Fwd Pkt Len Mean,Flow Byts/s,Label\n\
        20/02/2018 08:34:24,10,100,x,Benign\n\
        20/02/2018 08:34:24,20,300,5,Benign\n\
        20/02/2018 08:34:26,-1,50,7,Benign\n\
        20/02/2018 08:34:27,inf,50,9,DDoS\n\
        20/02/2018 08:34:27,40,60,9,DDoS\n";

    fn raw_file() -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(RAW.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_drops_invalid_rows() {
        let f = raw_file();
        let (recs, rep) = ingest_csv(f.path(), &ColumnMap::default()).unwrap();
        assert_eq!((rep.rows_read, rep.rows_dropped), (5, 2));
        assert_eq!(recs.len(), 3);
        assert!(recs[2].is_attack());
        let mut cols = ColumnMap::default();
        cols.label = "Class".into();
        assert!(matches!(ingest_csv(f.path(), &cols), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn candidates_cover_every_numeric_column() {
        let f = raw_file();
        let c = candidate_series(f.path(), &ColumnMap::default()).unwrap();
        let names: Vec<&str> = c.columns.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["Fwd IAT Mean", "Fwd Pkt Len Mean", "Flow Byts/s"]);
        assert_eq!(c.labels, [0.0, 0.0, 0.0, 1.0]);
        // second 25 is empty and carries 24's mean; -1 and inf are ignored
        assert_eq!(c.columns[0].1, [15.0, 15.0, 15.0, 40.0]);
        assert_eq!(c.columns[1].1, [200.0, 200.0, 50.0, 55.0]);
        assert_eq!(c.columns[2].1, [5.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn timestamps() {
        let fmt = &ColumnMap::default().timestamp_format;
        assert_eq!(parse_timestamp("20/02/2018 08:34:24", fmt), Some(1519115664));
        assert_eq!(parse_timestamp("1519115664", fmt), Some(1519115664));
        assert_eq!(parse_timestamp("Timestamp", fmt), None);
    }

    #[test]
    fn same_second_mean() {
        let (agg, _) = aggregate_1s(&[rec(100, 10.0, "Benign"), rec(100, 20.0, "Benign")]).unwrap();
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].a, 15.0);
        assert_eq!(agg[0].b, 30.0);
    }

    #[test]
    fn gap_is_carried_forward() {
        let (agg, rep) = aggregate_1s(&[rec(5, 1.0, "Benign"), rec(7, 3.0, "DDoS")]).unwrap();
        assert_eq!(agg.len(), 3);
        assert_eq!(rep.filled, 1);
        assert_eq!((agg[1].a, agg[1].attack_count), (1.0, 0));
        assert_eq!(agg[2].attack_count, 1);
    }

    #[test]
    fn label_series_from_attack_record() {
        let recs: Vec<_> = (0..5)
            .map(|s| rec(s, 1.0, if s == 2 { "DDoS-LOIC-HTTP" } else { "Benign" }))
            .collect();
        let (agg, rep) = aggregate_1s(&recs).unwrap();
        let labels: Vec<bool> = agg.iter().map(|a| a.label()).collect();
        assert_eq!(labels, [false, false, true, false, false]);
        assert_eq!(rep.attack_records, 1);
    }

    #[test]
    fn empty_aggregate() {
        assert!(matches!(aggregate_1s(&[]), Err(Error::EmptyDataset)));
    }
}
