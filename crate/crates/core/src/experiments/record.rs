use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::OutputFormat;
use crate::error::{Error, Result};
use crate::service::ServiceModel;
use crate::simulator::{CompletionEstimate, Method, Policy, SystemSpec};

/// One evaluated `(policy, estimator)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub scenario_id: String,
    pub n: u64,
    pub j: u64,
    pub l: f64,
    pub k: u64,
    pub r: f64,
    pub b: u64,
    pub g: u64,
    pub model_type: String,
    pub model_params: String,
    pub estimator: Method,
    pub mean: f64,
    pub std_err: f64,
    pub samples: u64,
    /// Only set for Monte Carlo rows.
    pub seed: Option<u64>,
}

pub const CSV_HEADER: [&str; 15] = [
    "scenario_id",
    "n",
    "j",
    "l",
    "k",
    "r",
    "b",
    "g",
    "model_type",
    "model_params",
    "estimator",
    "mean",
    "std_err",
    "samples",
    "seed",
];

impl SweepRecord {
    pub fn new(
        scenario_id: &str,
        spec: &SystemSpec,
        policy: &Policy,
        model: &ServiceModel,
        estimate: &CompletionEstimate,
        seed: u64,
    ) -> Self {
        let mc = estimate.method == Method::MonteCarlo;
        Self {
            scenario_id: scenario_id.to_string(),
            n: spec.n,
            j: spec.j,
            l: spec.l(),
            k: policy.k,
            r: policy.r(),
            b: policy.b,
            g: policy.g,
            model_type: model.type_name().to_string(),
            model_params: model.params_string(),
            estimator: estimate.method,
            mean: estimate.mean,
            std_err: estimate.std_err,
            samples: estimate.samples,
            seed: mc.then_some(seed),
        }
    }
}

pub fn to_csv(records: &[SweepRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Csv(e.into_error().into()))
}

pub fn from_csv(bytes: &[u8]) -> Result<Vec<SweepRecord>> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Config {
            path: "header".into(),
            reason: format!(
                "unexpected CSV header {:?}",
                header.iter().collect::<Vec<_>>()
            ),
        });
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn to_json(records: &[SweepRecord]) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(records)?;
    out.push(b'\n');
    Ok(out)
}

pub fn render(records: &[SweepRecord], format: OutputFormat) -> Result<Vec<u8>> {
    match format {
        OutputFormat::Csv => to_csv(records),
        OutputFormat::Json => to_json(records),
    }
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid("out", format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let mut file = fs::File::create(&tmp).map_err(io)?;
    file.write_all(bytes).map_err(io)?;
    file.sync_all().map_err(io)?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io(e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<SweepRecord> {
        let spec = SystemSpec::new(10, 112).unwrap();
        let model = ServiceModel::bimodal(1.0, 2.5, 0.1).unwrap();
        let p = Policy::new(&spec, 7, 4).unwrap();
        let mc = CompletionEstimate {
            mean: 1.0 / 3.0,
            std_err: 1e-17,
            samples: 10,
            method: Method::MonteCarlo,
        };
        let ex = CompletionEstimate::deterministic(std::f64::consts::PI, Method::Exact);
        vec![
            SweepRecord::new("a,\"quoted\"", &spec, &p, &model, &mc, 42),
            SweepRecord::new("b", &spec, &p, &model, &ex, 42),
        ]
    }

    #[test]
    fn csv_layout() {
        let bytes = to_csv(&sample()).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        let first = lines.next().unwrap();
        assert!(
            first.starts_with("\"a,\"\"quoted\"\"\",10,112,11.2,7,0.7,4,4,bimodal,"),
            "{first}"
        );
        assert!(
            first.ends_with(",monte_carlo,0.3333333333333333,1e-17,10,42"),
            "{first}"
        );
        assert!(lines
            .next()
            .unwrap()
            .ends_with(",exact,3.141592653589793,0.0,0,"));
    }

    #[test]
    fn empty_csv_still_has_header() {
        let bytes = to_csv(&[]).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap().trim_end(),
            CSV_HEADER.join(",")
        );
        assert!(from_csv(&to_csv(&[]).unwrap()).unwrap().is_empty());
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
