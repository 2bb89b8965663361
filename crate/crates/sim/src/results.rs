//! Results files, empirical CDFs and sweep aggregates.

use std::io::{Read, Write};

use crate::config::{Model, Scheme};
use crate::runner::{Status, TrialRecord};

pub const COLUMNS: [&str; 10] = [
    "trial",
    "model",
    "scheme",
    "status",
    "objective_w",
    "rho",
    "max_rank",
    "worst_margin",
    "outage_emp",
    "solve_ms",
];

/// Columns whose values depend on wall-clock time.
pub const TIMING_COLUMNS: [&str; 1] = ["solve_ms"];

#[derive(Debug, thiserror::Error)]
pub enum ResultsError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("unknown column `{0}`")]
    Column(String),
    #[error("no rows to plot")]
    Empty,
}

/// 12 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.11e}")
}

fn record_fields(r: &TrialRecord) -> [String; 10] {
    [
        r.trial.to_string(),
        r.model.name().to_string(),
        r.scheme.name().to_string(),
        r.status.name().to_string(),
        fmt_f64(r.objective_w),
        fmt_f64(r.rho),
        r.max_rank.to_string(),
        fmt_f64(r.worst_margin),
        fmt_f64(r.outage_emp),
        fmt_f64(r.solve_ms),
    ]
}

pub fn write_records<W: Write>(out: W, records: &[TrialRecord]) -> Result<(), ResultsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record(record_fields(r))?;
    }
    w.flush()?;
    Ok(())
}

fn parse_model(s: &str) -> Option<Model> {
    [Model::Perfect, Model::Bounded, Model::Gaussian]
        .into_iter()
        .find(|m| m.name() == s)
}

fn parse_scheme(s: &str) -> Option<Scheme> {
    [Scheme::Noma, Scheme::Oma].into_iter().find(|m| m.name() == s)
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<TrialRecord>, ResultsError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != COLUMNS {
        return Err(ResultsError::Row {
            row: 1,
            message: format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |what: &str| ResultsError::Row {
            row: line,
            message: format!("bad {what}"),
        };
        let f = |j: usize| row[j].parse::<f64>().map_err(|_| bad(COLUMNS[j]));
        out.push(TrialRecord {
            trial: row[0].parse().map_err(|_| bad("trial"))?,
            model: parse_model(&row[1]).ok_or_else(|| bad("model"))?,
            scheme: parse_scheme(&row[2]).ok_or_else(|| bad("scheme"))?,
            status: Status::parse(&row[3]).ok_or_else(|| bad("status"))?,
            objective_w: f(4)?,
            rho: f(5)?,
            max_rank: row[6].parse().map_err(|_| bad("max_rank"))?,
            worst_margin: f(7)?,
            outage_emp: f(8)?,
            solve_ms: f(9)?,
        });
    }
    Ok(out)
}

/// Numeric value of `column` for one record.
pub fn column_value(r: &TrialRecord, column: &str) -> Result<f64, ResultsError> {
    Ok(match column {
        "objective_w" => r.objective_w,
        "rho" => r.rho,
        "max_rank" => r.max_rank as f64,
        "worst_margin" => r.worst_margin,
        "outage_emp" => r.outage_emp,
        "solve_ms" => r.solve_ms,
        other => return Err(ResultsError::Column(other.to_string())),
    })
}

/// Step CDF over feasible values.
#[derive(Debug, Clone, PartialEq)]
pub struct Cdf {
    /// Distinct values ascending, with the fraction of feasible values `<=` each.
    pub points: Vec<(f64, f64)>,
    pub feasible: usize,
    pub infeasible: usize,
}

/// `None` entries are infeasible rows and are only counted.
pub fn empirical_cdf(values: &[Option<f64>]) -> Cdf {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n as f64;
        match points.last_mut() {
            Some(last) if last.0 == x => last.1 = frac,
            _ => points.push((x, frac)),
        }
    }
    Cdf {
        points,
        feasible: n,
        infeasible: values.len() - n,
    }
}

/// Records grouped by (model, scheme) in first-seen order.
pub fn series(records: &[TrialRecord]) -> Vec<((Model, Scheme), Vec<&TrialRecord>)> {
    let mut out: Vec<((Model, Scheme), Vec<&TrialRecord>)> = Vec::new();
    for r in records {
        let key = (r.model, r.scheme);
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => out.push((key, vec![r])),
        }
    }
    out
}

pub fn cdf_by_series(records: &[TrialRecord], column: &str) -> Result<Vec<((Model, Scheme), Cdf)>, ResultsError> {
    series(records)
        .into_iter()
        .map(|(key, rows)| {
            let vals = rows
                .iter()
                .map(|r| Ok(r.feasible().then_some(column_value(r, column)?)))
                .collect::<Result<Vec<_>, ResultsError>>()?;
            Ok((key, empirical_cdf(&vals)))
        })
        .collect()
}

/// Long-format CDF table, preceded by a `#` line with infeasible counts.
pub fn write_cdf<W: Write>(mut out: W, cdfs: &[((Model, Scheme), Cdf)]) -> Result<(), ResultsError> {
    let total: usize = cdfs.iter().map(|c| c.1.infeasible).sum();
    let per: Vec<String> = cdfs
        .iter()
        .map(|((m, s), c)| format!("{}/{}={}", m.name(), s.name(), c.infeasible))
        .collect();
    writeln!(out, "# infeasible_rows={total} ({})", per.join(", "))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "scheme", "value", "fraction"])?;
    for ((m, s), c) in cdfs {
        for &(x, p) in &c.points {
            w.write_record([m.name(), s.name(), &fmt_f64(x), &fmt_f64(p)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Mean, sample standard deviation and feasibility rate of one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub value: f64,
    pub model: Model,
    pub scheme: Scheme,
    pub trials: usize,
    pub feasible: usize,
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn feasibility_rate(&self) -> f64 {
        self.feasible as f64 / self.trials as f64
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Aggregate the objective of each (model, scheme) series at one sweep value.
pub fn aggregate(value: f64, records: &[TrialRecord]) -> Vec<Aggregate> {
    series(records)
        .into_iter()
        .map(|((model, scheme), rows)| {
            let vals: Vec<f64> = rows.iter().filter(|r| r.feasible()).map(|r| r.objective_w).collect();
            let (mean, std) = mean_std(&vals);
            Aggregate {
                value,
                model,
                scheme,
                trials: rows.len(),
                feasible: vals.len(),
                mean,
                std,
            }
        })
        .collect()
}

pub fn write_aggregates<W: Write>(out: W, parameter: &str, rows: &[Aggregate]) -> Result<(), ResultsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["parameter", "value", "model", "scheme", "trials", "feasible", "feasibility_rate", "mean", "std"])?;
    for a in rows {
        w.write_record([
            parameter,
            &fmt_f64(a.value),
            a.model.name(),
            a.scheme.name(),
            &a.trials.to_string(),
            &a.feasible.to_string(),
            &fmt_f64(a.feasibility_rate()),
            &fmt_f64(a.mean),
            &fmt_f64(a.std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-trial sweep rows: the sweep value followed by the record columns.
pub fn write_sweep_trials<W: Write>(out: W, rows: &[(f64, TrialRecord)]) -> Result<(), ResultsError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["value"];
    header.extend(COLUMNS);
    w.write_record(&header)?;
    for (v, r) in rows {
        let mut fields = vec![fmt_f64(*v)];
        fields.extend(record_fields(r));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// Drop timing columns from a CSV document for byte comparisons.
pub fn strip_timing(csv_text: &str) -> Result<String, ResultsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_reader(csv_text.as_bytes());
    let mut rows = rdr.records();
    let header = match rows.next() {
        Some(h) => h?,
        None => return Ok(String::new()),
    };
    let keep: Vec<usize> = (0..header.len())
        .filter(|&i| !TIMING_COLUMNS.contains(&&header[i]))
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(keep.iter().map(|&i| &header[i]))?;
    for row in rows {
        let row = row?;
        w.write_record(keep.iter().map(|&i| &row[i]))?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(trial: usize, status: Status, obj: f64) -> TrialRecord {
        TrialRecord {
            trial,
            model: Model::Bounded,
            scheme: Scheme::Noma,
            status,
            objective_w: obj,
            rho: 0.5,
            max_rank: 1,
            worst_margin: 1e-3,
            outage_emp: 0.0,
            solve_ms: 12.5,
        }
    }

    #[test]
    fn single_row_jumps_to_one() {
        let c = empirical_cdf(&[Some(0.3)]);
        assert_eq!(c.points, vec![(0.3, 1.0)]);
    }

    #[test]
    fn equal_values_make_one_step() {
        let c = empirical_cdf(&[Some(0.2), Some(0.2)]);
        assert_eq!(c.points, vec![(0.2, 1.0)]);
    }

    #[test]
    fn infeasible_rows_only_counted() {
        let c = empirical_cdf(&[Some(1.0), None, Some(2.0), None]);
        assert_eq!(c.points, vec![(1.0, 0.5), (2.0, 1.0)]);
        assert_eq!((c.feasible, c.infeasible), (2, 2));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![rec(0, Status::Optimal, 0.123456789012345), rec(1, Status::Infeasible, f64::NAN)];
        let mut buf = Vec::new();
        write_records(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("trial,model,scheme,status,objective_w,rho,max_rank,worst_margin,outage_emp,solve_ms\n"));
        assert!(text.contains("1.23456789012e-1"));
        let back = read_records(buf.as_slice()).unwrap();
        assert_eq!(back[0].objective_w, 0.123456789012);
        assert!(back[1].objective_w.is_nan());
        assert_eq!(back[1].status, Status::Infeasible);
    }

    #[test]
    fn bad_row_is_located() {
        let text = format!("{}\n0,bounded,noma,optimal,1,0.5,1,0,0,1\n0,bounded,nomx,optimal,1,0.5,1,0,0,1\n", COLUMNS.join(","));
        match read_records(text.as_bytes()) {
            Err(ResultsError::Row { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn strip_timing_drops_solve_ms() {
        let rows = vec![rec(0, Status::Optimal, 1.0)];
        let mut a = Vec::new();
        write_records(&mut a, &rows).unwrap();
        let mut slow = rows.clone();
        slow[0].solve_ms = 99.0;
        let mut b = Vec::new();
        write_records(&mut b, &slow).unwrap();
        assert_ne!(a, b);
        let sa = strip_timing(std::str::from_utf8(&a).unwrap()).unwrap();
        assert_eq!(sa, strip_timing(std::str::from_utf8(&b).unwrap()).unwrap());
        assert!(!sa.contains("solve_ms"));
    }

    #[test]
    fn aggregate_skips_infeasible() {
        let rows = vec![rec(0, Status::Optimal, 1.0), rec(1, Status::Optimal, 3.0), rec(2, Status::Infeasible, f64::NAN)];
        let a = &aggregate(2.0, &rows)[0];
        assert_eq!((a.trials, a.feasible), (3, 2));
        assert_eq!(a.mean, 2.0);
        assert!((a.std - 2f64.sqrt()).abs() < 1e-15);
        assert!((a.feasibility_rate() - 2.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn cdf_is_monotone_and_ends_at_one(xs in proptest::collection::vec(proptest::option::of(-5.0f64..5.0), 1..60)) {
            let c = empirical_cdf(&xs);
            for w in c.points.windows(2) {
                prop_assert!(w[0].0 < w[1].0 && w[0].1 < w[1].1);
            }
            if c.feasible > 0 {
                prop_assert_eq!(c.points.last().unwrap().1, 1.0);
            }
            prop_assert_eq!(c.feasible + c.infeasible, xs.len());
        }
    }
}
