//! Simulation records and CSV output.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observer::EnergySample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventFlags {
    pub sample: bool,
    pub hold: bool,
}

impl EventFlags {
    pub fn label(&self) -> &'static str {
        match (self.sample, self.hold) {
            (false, false) => "",
            (true, false) => "sample",
            (false, true) => "hold",
            (true, true) => "sample+hold",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "" => Self::default(),
            "sample" => Self {
                sample: true,
                hold: false,
            },
            "hold" => Self {
                sample: false,
                hold: true,
            },
            "sample+hold" => Self {
                sample: true,
                hold: true,
            },
            other => return Err(Error::Io(format!("unknown event label {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub w: f64,
    /// Held input `u(t)`.
    pub u: f64,
    pub d: Vec<f64>,
    pub xi: f64,
    pub event: EventFlags,
    /// `x(t - r)`; not written to CSV.
    pub x_delayed: Vec<f64>,
    /// `u(t - r - tau)`; not written to CSV.
    pub u_observer: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldRecord {
    pub index: usize,
    pub t: f64,
    pub input: f64,
    pub estimate: Option<Vec<f64>>,
    pub prediction: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub t: f64,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationLog {
    pub n: usize,
    pub rows: Vec<LogRow>,
    pub holds: Vec<HoldRecord>,
    pub samples: Vec<SampleRecord>,
    /// `sup b` over the generated schedule.
    pub b_sup: f64,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

impl SimulationLog {
    pub fn header(n: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((1..=n).map(|i| format!("x{i}")));
        h.extend((1..=n).map(|i| format!("z{i}")));
        h.push("w".into());
        h.push("u".into());
        h.extend((1..=n).map(|i| format!("d{i}")));
        h.push("xi".into());
        h.push("event".into());
        h
    }

    pub fn last(&self) -> Option<&LogRow> {
        self.rows.last()
    }

    /// Row whose time is closest to `t`.
    pub fn row_at(&self, t: f64) -> Option<&LogRow> {
        let i = self.rows.partition_point(|r| r.t < t);
        let cand = [i.checked_sub(1), Some(i)];
        cand.iter()
            .flatten()
            .filter_map(|&j| self.rows.get(j))
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }

    pub fn rows_between(&self, a: f64, b: f64) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(move |r| r.t >= a && r.t <= b)
    }

    /// `sup (|x| + |z| + |w| + |u|)` over rows with `t` in `[a, b]`.
    pub fn sup_combined(&self, a: f64, b: f64) -> f64 {
        self.rows_between(a, b)
            .map(|r| norm(&r.x) + norm(&r.z) + r.w.abs() + r.u.abs())
            .fold(0.0, f64::max)
    }

    /// Named column accessor used by plotting and tests.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = |prefix: &str| -> Option<usize> {
            name.strip_prefix(prefix)
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|i| *i >= 1 && *i <= self.n)
                .map(|i| i - 1)
        };
        let pick: Box<dyn Fn(&LogRow) -> f64> = match name {
            "t" => Box::new(|r| r.t),
            "w" => Box::new(|r| r.w),
            "u" => Box::new(|r| r.u),
            "xi" => Box::new(|r| r.xi),
            _ => {
                if let Some(i) = idx("x") {
                    Box::new(move |r| r.x[i])
                } else if let Some(i) = idx("z") {
                    Box::new(move |r| r.z[i])
                } else if let Some(i) = idx("d") {
                    Box::new(move |r| r.d[i])
                } else {
                    return Err(Error::InvalidParameter(format!("unknown column {name:?}")));
                }
            }
        };
        Ok(self.rows.iter().map(pick).collect())
    }

    /// Trace for the observer energy check.
    pub fn energy_samples(&self) -> Vec<EnergySample> {
        self.rows
            .iter()
            .map(|r| EnergySample {
                t: r.t,
                z: r.z.clone(),
                w: r.w,
                x_delayed: norm(&r.x_delayed),
                xi: r.xi.abs(),
                u_delayed: r.u_observer.abs(),
            })
            .collect()
    }

    /// Writes `t,x1..xn,z1..zn,w,u,d1..dn,xi,event` with round-trip float text.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(self.n))?;
        let mut rec: Vec<String> = Vec::with_capacity(3 * self.n + 5);
        for r in &self.rows {
            rec.clear();
            rec.push(r.t.to_string());
            rec.extend(r.x.iter().map(f64::to_string));
            rec.extend(r.z.iter().map(f64::to_string));
            rec.push(r.w.to_string());
            rec.push(r.u.to_string());
            rec.extend(r.d.iter().map(f64::to_string));
            rec.push(r.xi.to_string());
            rec.push(r.event.label().to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses CSV written by [`write_csv`](Self::write_csv). Columns not in
    /// the file (delayed reads, hold and sample records) come back empty.
    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let headers = rd.headers()?.clone();
        if headers.len() < 5 || (headers.len() - 5) % 3 != 0 {
            return Err(Error::Io(format!(
                "unexpected column count {}",
                headers.len()
            )));
        }
        let n = (headers.len() - 5) / 3;
        if headers
            .iter()
            .ne(Self::header(n).iter().map(String::as_str))
        {
            return Err(Error::Io("header does not match the log schema".into()));
        }
        let mut log = SimulationLog {
            n,
            ..Default::default()
        };
        for rec in rd.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Io(format!("column {i}: {e}")))
            };
            let vec = |from: usize| -> Result<Vec<f64>> { (from..from + n).map(num).collect() };
            log.rows.push(LogRow {
                t: num(0)?,
                x: vec(1)?,
                z: vec(1 + n)?,
                w: num(1 + 2 * n)?,
                u: num(2 + 2 * n)?,
                d: vec(3 + 2 * n)?,
                xi: num(3 + 3 * n)?,
                event: EventFlags::parse(&rec[4 + 3 * n])?,
                x_delayed: Vec::new(),
                u_observer: 0.0,
            });
        }
        Ok(log)
    }
}

pub fn emit_csv(log: &SimulationLog, path: &Path) -> Result<()> {
    if log.rows.is_empty() {
        return Err(Error::InvalidParameter("cannot write an empty log".into()));
    }
    log.write_csv(std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64) -> LogRow {
        LogRow {
            t,
            x: vec![0.1 + t, 1.0 / 3.0],
            z: vec![-2.5e-17, 7.0],
            w: std::f64::consts::PI,
            u: -2.0,
            d: vec![0.0, 1e300],
            xi: -0.0,
            event: EventFlags {
                sample: true,
                hold: t > 0.0,
            },
            x_delayed: vec![0.0, 0.0],
            u_observer: 0.0,
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let log = SimulationLog {
            n: 2,
            rows: vec![row(0.0), row(0.1), row(0.30000000000000004)],
            ..Default::default()
        };
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "t,x1,x2,z1,z2,w,u,d1,d2,xi,event"
        );
        assert_eq!(text.lines().count(), 4);
        let back = SimulationLog::read_csv(buf.as_slice()).unwrap();
        for (a, b) in log.rows.iter().zip(&back.rows) {
            assert_eq!(a.t.to_bits(), b.t.to_bits());
            assert!(a
                .x
                .iter()
                .zip(&b.x)
                .all(|(p, q)| p.to_bits() == q.to_bits()));
            assert!(a
                .z
                .iter()
                .zip(&b.z)
                .all(|(p, q)| p.to_bits() == q.to_bits()));
            assert_eq!(a.w.to_bits(), b.w.to_bits());
            assert_eq!(a.xi.to_bits(), b.xi.to_bits());
            assert_eq!(a.event, b.event);
        }
    }

    #[test]
    fn single_row_gives_two_lines() {
        let log = SimulationLog {
            n: 2,
            rows: vec![row(0.0)],
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.csv");
        emit_csv(&log, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
        assert!(emit_csv(&SimulationLog::default(), &path).is_err());
    }

    #[test]
    fn column_access() {
        let log = SimulationLog {
            n: 2,
            rows: vec![row(0.0), row(1.0)],
            ..Default::default()
        };
        assert_eq!(log.column("x1").unwrap(), vec![0.1, 1.1]);
        assert_eq!(log.column("u").unwrap(), vec![-2.0, -2.0]);
        assert!(log.column("x3").is_err());
        assert_eq!(log.row_at(0.7).unwrap().t, 1.0);
    }
}
