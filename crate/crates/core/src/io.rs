//! File formats: tick files, configuration, replication tables, summaries
//! and histograms.
//!
//! Floats are written in shortest round-trip form, so re-parsing is exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, ExperimentResult, ReplicationRecord};
use crate::hbt::ObservationSeries;
use crate::stats::HistogramBin;

/// Trading session used to map raw timestamps onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub open: f64,
    pub close: f64,
}

impl Session {
    pub fn normalize(&self, t: f64) -> f64 {
        (t - self.open) / (self.close - self.open)
    }
}

/// Read a tick file: header row with a `time` column and a `price` (or
/// `observed`) column. Times must start at 0 (after normalization) and be
/// strictly increasing; errors name the 1-based data row.
pub fn read_tick_file<R: Read>(reader: R, session: Option<Session>) -> Result<ObservationSeries> {
    if let Some(s) = session {
        if !(s.close > s.open) {
            return Err(Error::InvalidParameter(format!(
                "session close {} must be after open {}",
                s.close, s.open
            )));
        }
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |names: &[&str]| headers.iter().position(|h| names.contains(&h.trim()));
    let time_col = column(&["time"]).ok_or_else(|| Error::TickFile {
        row: 0,
        reason: "header has no `time` column".into(),
    })?;
    let price_col = column(&["price", "observed"]).ok_or_else(|| Error::TickFile {
        row: 0,
        reason: "header has no `price` or `observed` column".into(),
    })?;
    let latent_col = column(&["latent"]);

    let mut series = ObservationSeries::default();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::TickFile {
            row,
            reason: e.to_string(),
        })?;
        let field = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| Error::TickFile {
                row,
                reason: format!("{name} `{raw}` is not a number"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::TickFile {
                    row,
                    reason: format!("{name} is not finite"),
                })
            }
        };
        let mut time = field(time_col, "time")?;
        if let Some(s) = session {
            time = s.normalize(time);
        }
        let price = field(price_col, "price")?;
        let latent = match latent_col {
            Some(c) => field(c, "latent")?,
            None => price,
        };
        match series.times.last() {
            None if time != 0.0 => {
                return Err(Error::TickFile {
                    row,
                    reason: format!("first time must be 0, got {time}"),
                })
            }
            Some(&prev) if !(time > prev) => {
                return Err(Error::TickFile {
                    row,
                    reason: format!("time {time} does not increase (previous {prev})"),
                })
            }
            _ => {}
        }
        series.times.push(time);
        series.observed.push(price);
        series.latent.push(latent);
    }
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(series)
}

pub fn load_tick_file(path: &Path, session: Option<Session>) -> Result<ObservationSeries> {
    read_tick_file(BufReader::new(File::open(path)?), session)
}

pub fn read_json<T: DeserializeOwned, R: Read>(reader: R) -> Result<T> {
    Ok(serde_json::from_reader(reader)?)
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut writer: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value)?;
    writer.write_all(b"\n")?;
    Ok(())
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    read_json(BufReader::new(File::open(path)?))
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_json(value, &mut w)?;
    w.flush()?;
    Ok(())
}

/// `rep,truth,hy,bchy,ab_hat,av_hat,statistic`
pub fn write_replications<W: Write>(records: &[ReplicationRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    if records.is_empty() {
        w.write_record(["rep", "truth", "hy", "bchy", "ab_hat", "av_hat", "statistic"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_replications<R: Read>(reader: R) -> Result<Vec<ReplicationRecord>> {
    read_rows(reader)
}

/// `bin_left,bin_right,count`
pub fn write_histogram<W: Write>(bins: &[HistogramBin], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for b in bins {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_histogram<R: Read>(reader: R) -> Result<Vec<HistogramBin>> {
    read_rows(reader)
}

fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(reader: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(reader)
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::TickFile {
                row: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// File names written by [`write_experiment`].
pub const REPLICATIONS_FILE: &str = "replications.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";

/// Write the replication table, summary JSON and histogram into `dir`.
pub fn write_experiment(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(REPLICATIONS_FILE))?);
    write_replications(&result.records, &mut w)?;
    w.flush()?;
    #[derive(Serialize)]
    struct SummaryFile<'a> {
        config: &'a ExperimentConfig,
        dt: f64,
        #[serde(flatten)]
        summary: &'a crate::harness::Summary,
        monitor: &'a crate::harness::BlockMonitor,
        failures: &'a [crate::harness::ReplicationFailure],
    }
    save_json(
        &SummaryFile {
            config: &result.config,
            dt: result.dt,
            summary: &result.summary,
            monitor: &result.monitor,
            failures: &result.failures,
        },
        &dir.join(SUMMARY_FILE),
    )?;
    let mut w = BufWriter::new(File::create(dir.join(HISTOGRAM_FILE))?);
    write_histogram(&result.histogram, &mut w)?;
    w.flush()?;
    Ok(())
}
