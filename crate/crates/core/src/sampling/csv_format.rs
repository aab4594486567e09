//! Sample CSV files: one file per vehicle, one sample per row, columns
//! `w_t{k}_d{dim}` for `k = 0..N−1`, `dim = 1..n` in time-major order.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::DisturbanceSampleSet;
use crate::error::{Error, Result};

pub fn csv_header(horizon: usize, state_dim: usize) -> Vec<String> {
    (0..horizon)
        .flat_map(|k| (1..=state_dim).map(move |d| format!("w_t{k}_d{d}")))
        .collect()
}

/// Parses a sample CSV from a reader. The header must match
/// [`csv_header`] exactly.
pub fn ingest_csv<R: Read>(
    reader: R,
    vehicle: usize,
    horizon: usize,
    state_dim: usize,
    provenance: &str,
) -> Result<DisturbanceSampleSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let expected = csv_header(horizon, state_dim);
    let header = rdr.headers().map_err(|e| Error::Parse(format!("{provenance}: {e}")))?;
    if header.len() != expected.len() {
        return Err(Error::dim(format!(
            "{provenance}: {} columns, expected N·n = {}",
            header.len(),
            expected.len()
        )));
    }
    if let Some((got, want)) = header.iter().zip(&expected).find(|(g, w)| g != w) {
        return Err(Error::Parse(format!("{provenance}: column `{got}` where `{want}` expected")));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => Error::dim(format!("{provenance}: {e}")),
            _ => Error::Parse(format!("{provenance}: {e}")),
        })?;
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Parse(format!("{provenance}: row {}: `{field}` is not a number", line + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("{provenance}: row {}: non-finite value", line + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    let data = DMatrix::from_column_slice(expected.len(), rows, &values);
    DisturbanceSampleSet::new(vehicle, horizon, state_dim, data, provenance)
}

pub fn read_samples(
    path: &Path,
    vehicle: usize,
    horizon: usize,
    state_dim: usize,
) -> Result<DisturbanceSampleSet> {
    let file = std::fs::File::open(path)?;
    ingest_csv(file, vehicle, horizon, state_dim, &path.display().to_string())
}

pub fn write_samples<W: Write>(samples: &DisturbanceSampleSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(csv_header(samples.horizon(), samples.state_dim())).map_err(io)?;
    for col in samples.data().column_iter() {
        // `{}` prints the shortest string that round-trips exactly
        w.write_record(col.iter().map(|v| format!("{v}"))).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{synth_disturbances, GeneratorKind, GeneratorSpec};

    #[test]
    fn header_order_is_time_major() {
        assert_eq!(csv_header(2, 2), ["w_t0_d1", "w_t0_d2", "w_t1_d1", "w_t1_d2"]);
    }

    #[test]
    fn round_trip_is_exact() {
        let spec = GeneratorSpec::new(GeneratorKind::Skewed { shape: 1.5 }, vec![1e-3, 2e-5], None).unwrap();
        let set = synth_disturbances(&spec, 2, 3, 7, 9).unwrap();
        let mut buf = Vec::new();
        write_samples(&set, &mut buf).unwrap();
        let back = ingest_csv(buf.as_slice(), 2, 3, 2, "mem").unwrap();
        assert_eq!(back.data(), set.data());
    }

    #[test]
    fn malformed_inputs() {
        let short = "w_t0_d1,w_t0_d2\n1,2\n";
        assert!(matches!(ingest_csv(short.as_bytes(), 0, 1, 2, "m"), Err(Error::Dimension(_))));

        let wrong_cols = "w_t0_d1\n1\n2\n";
        assert!(matches!(ingest_csv(wrong_cols.as_bytes(), 0, 1, 2, "m"), Err(Error::Dimension(_))));

        let bad_name = "w_t0_d1,w_t0_d3\n1,2\n3,4\n";
        assert!(matches!(ingest_csv(bad_name.as_bytes(), 0, 1, 2, "m"), Err(Error::Parse(_))));

        let bad_num = "w_t0_d1,w_t0_d2\n1,x\n3,4\n";
        assert!(matches!(ingest_csv(bad_num.as_bytes(), 0, 1, 2, "m"), Err(Error::Parse(_))));

        let ragged = "w_t0_d1,w_t0_d2\n1,2\n3\n";
        assert!(matches!(ingest_csv(ragged.as_bytes(), 0, 1, 2, "m"), Err(Error::Dimension(_))));

        let constant = "w_t0_d1,w_t0_d2\n1,2\n1,2\n1,2\n";
        assert!(matches!(ingest_csv(constant.as_bytes(), 0, 1, 2, "m"), Err(Error::DegenerateSample(_))));

        let ok = "w_t0_d1,w_t0_d2\n1,2\n1,2.5\n";
        assert_eq!(ingest_csv(ok.as_bytes(), 0, 1, 2, "m").unwrap().sample_count(), 2);
    }
}
