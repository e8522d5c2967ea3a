//! Result rows and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Column order of the results file.
pub const CSV_HEADER: &str =
    "method,seed,n,util,obj_init,obj_final,gap_pct,oracle_calls,elim_rounds,wall_ms,feasible,timeout";

/// One (instance, method) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub method: String,
    pub seed: u64,
    pub n: usize,
    pub util: f64,
    pub obj_init: f64,
    pub obj_final: f64,
    /// Empty when no positive reference objective exists for the instance.
    pub gap_pct: Option<f64>,
    pub oracle_calls: u64,
    pub elim_rounds: usize,
    pub wall_ms: f64,
    pub feasible: bool,
    pub timeout: bool,
}

/// `(baseline - reference) / reference * 100`.
pub fn relative_gap(baseline: f64, reference: f64) -> Result<f64> {
    if !(reference > 0.0) {
        return Err(invalid(format!("gap reference must be positive, got {reference}")));
    }
    Ok((baseline - reference) / reference * 100.0)
}

pub fn write_records<W: Write>(out: W, records: &[ExperimentRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(invalid(format!("unexpected CSV header `{}`", header.join(","))));
    }
    r.deserialize().map(|row| Ok(row?)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_examples() {
        assert_eq!(relative_gap(110.0, 100.0).unwrap(), 10.0);
        assert_eq!(relative_gap(100.0, 100.0).unwrap(), 0.0);
        assert_eq!(relative_gap(97.0, 100.0).unwrap(), -3.0);
        assert!(relative_gap(1.0, 0.0).is_err());
        assert!(relative_gap(1.0, -2.0).is_err());
    }

    #[test]
    fn empty_file_still_has_header() {
        let mut buf = Vec::new();
        write_records(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), CSV_HEADER);
    }
}
