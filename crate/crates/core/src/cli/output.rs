//! Artifact writers: CSV tables behind a JSON comment line, JSON reports, manifests.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::maps::MapSpec;

/// Floats with 17 significant digits, enough to round-trip every `f64`.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV file whose first line is `# {"map": .., "seed": ..}`.
pub struct CsvSink {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvSink {
    pub fn create(path: &Path, map: &MapSpec, seed: u64, columns: &[&str]) -> Result<Self> {
        let mut file = BufWriter::new(File::create(path)?);
        let header = json!({ "map": map, "seed": seed });
        writeln!(file, "# {header}")?;
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
        writer.write_record(columns)?;
        Ok(CsvSink {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let mut file = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(path.to_path_buf())
}

/// Samples read back from a `(sample_id, n, normalized_sum)` file.
#[derive(Clone, Debug)]
pub struct SampleTable {
    pub header: Value,
    /// Values grouped by `n`, in increasing `n`, each ordered by sample id.
    pub columns: BTreeMap<u64, Vec<f64>>,
}

pub fn read_samples(path: &Path) -> Result<SampleTable> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let header: Value = match first.strip_prefix("# ") {
        Some(h) => serde_json::from_str(h.trim_end())?,
        None => return Err(Error::Config(format!("{} has no JSON header line", path.display()))),
    };
    let mut csv = csv::Reader::from_reader(reader);
    let names = csv.headers()?.clone();
    if names.iter().collect::<Vec<_>>() != ["sample_id", "n", "normalized_sum"] {
        return Err(Error::Config(format!("{}: unexpected columns {names:?}", path.display())));
    }
    let mut rows: BTreeMap<u64, Vec<(u64, f64)>> = BTreeMap::new();
    for rec in csv.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let parse_err = |what: &str| Error::Config(format!("{}: bad {what} in {rec:?}", path.display()));
        let id: u64 = field(0).parse().map_err(|_| parse_err("sample_id"))?;
        let n: u64 = field(1).parse().map_err(|_| parse_err("n"))?;
        let value: f64 = field(2).parse().map_err(|_| parse_err("normalized_sum"))?;
        rows.entry(n).or_default().push((id, value));
    }
    let columns = rows
        .into_iter()
        .map(|(n, mut v)| {
            v.sort_by_key(|p| p.0);
            (n, v.into_iter().map(|p| p.1).collect())
        })
        .collect();
    Ok(SampleTable { header, columns })
}

/// `<subcommand>.manifest.json`: everything needed to replay a run.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub subcommand: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
    pub config: &'a C,
    pub artifacts: Vec<String>,
    /// `None` when no acceptance check was requested.
    pub check_passed: Option<bool>,
}

impl<C: Serialize> Manifest<'_, C> {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        write_json(&dir.join(format!("{}.manifest.json", self.subcommand)), self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let map = MapSpec::lsv(0.75).unwrap();
        let mut sink = CsvSink::create(&path, &map, 5, &["sample_id", "n", "normalized_sum"]).unwrap();
        let values = [0.1, -2.5e-300, 1.0 / 3.0];
        for (id, v) in values.iter().enumerate() {
            for n in [10u64, 100] {
                sink.row([id.to_string(), n.to_string(), real(v * n as f64)]).unwrap();
            }
        }
        sink.finish().unwrap();
        let table = read_samples(&path).unwrap();
        assert_eq!(table.header["seed"], 5);
        assert_eq!(table.columns.keys().copied().collect::<Vec<_>>(), vec![10, 100]);
        for (i, v) in values.iter().enumerate() {
            assert_eq!(table.columns[&100][i], v * 100.0);
        }
    }

    #[test]
    fn reals_carry_seventeen_digits() {
        assert_eq!(real(0.1), "1.0000000000000001e-1");
        assert_eq!(real(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
