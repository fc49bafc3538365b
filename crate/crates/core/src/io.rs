//! File formats shared by the library and the command line.
//!
//! A record file is CSV with the header `cycle,signature_index`, one row per
//! cycle. The index packs bin 1 into the least significant bit. The number
//! of bins is not in the CSV; simulated runs write it, together with the
//! configuration, source, seed and afterpulse probability, to a JSON sidecar
//! next to the CSV (`records.csv` pairs with `records.json`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::detector::{DetectorConfig, Signature};
use crate::error::{Error, Result};
use crate::simulator::{CycleRecord, SourceSpec};
use crate::states::PhotonNumberDistribution;

pub const RECORD_HEADER: &str = "cycle,signature_index";

/// Metadata written beside a simulated record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordSidecar {
    pub config: DetectorConfig,
    pub source: SourceSpec,
    pub seed: u64,
    pub p_a: f64,
    pub cycles: u64,
}

impl RecordSidecar {
    pub fn bins(&self) -> usize {
        self.config.bins()
    }
}

/// Sidecar path for a record file: same stem, `.json` extension.
pub fn sidecar_path(records: &Path) -> PathBuf {
    records.with_extension("json")
}

pub fn records_to_csv(records: &[CycleRecord]) -> String {
    let mut out = String::with_capacity(16 * (records.len() + 1));
    out.push_str(RECORD_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{},{}", r.cycle, r.signature.index());
    }
    out
}

/// Parses record CSV. Blank lines are skipped; anything else that is not a
/// `u64,u64` row is a parse error naming the line.
pub fn records_from_csv(text: &str, bins: usize) -> Result<Vec<CycleRecord>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == RECORD_HEADER => {}
        Some((i, header)) => {
            return Err(Error::Parse(format!(
                "line {}: expected header `{RECORD_HEADER}`, found `{}`",
                i + 1,
                header.trim()
            )))
        }
        None => return Err(Error::Parse("record file is empty".into())),
    }
    lines
        .map(|(i, line)| {
            let bad =
                |what: &str| Error::Parse(format!("line {}: {what}: `{}`", i + 1, line.trim()));
            let mut fields = line.split(',').map(str::trim);
            let (Some(cycle), Some(index), None) = (fields.next(), fields.next(), fields.next())
            else {
                return Err(bad("expected two fields"));
            };
            let cycle = cycle.parse::<u64>().map_err(|_| bad("bad cycle"))?;
            let index = index
                .parse::<u64>()
                .map_err(|_| bad("bad signature index"))?;
            let signature = Signature::from_index(index, bins)
                .map_err(|_| bad(&format!("index does not fit in {bins} bins")))?;
            Ok(CycleRecord { cycle, signature })
        })
        .collect()
}

pub fn write_records(path: &Path, records: &[CycleRecord]) -> Result<()> {
    fs::write(path, records_to_csv(records))?;
    Ok(())
}

pub fn read_records(path: &Path, bins: usize) -> Result<Vec<CycleRecord>> {
    records_from_csv(&fs::read_to_string(path)?, bins)
}

/// Reads the sidecar for `records` if one exists.
pub fn read_sidecar(records: &Path) -> Result<Option<RecordSidecar>> {
    let path = sidecar_path(records);
    if !path.exists() {
        return Ok(None);
    }
    read_json(&path).map(Some)
}

/// Reads JSON, reporting line and column on failure.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Parse(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_config(path: &Path) -> Result<DetectorConfig> {
    read_json(path)
}

pub fn read_state(path: &Path) -> Result<PhotonNumberDistribution> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn writes_header_and_rows() {
        let records = vec![
            CycleRecord {
                cycle: 0,
                signature: Signature::from_index(5, 9).unwrap(),
            },
            CycleRecord {
                cycle: 1,
                signature: Signature::from_index(0, 9).unwrap(),
            },
        ];
        assert_eq!(
            records_to_csv(&records),
            "cycle,signature_index\n0,5\n1,0\n"
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert!(records_from_csv("", 9).is_err());
        assert!(records_from_csv("a,b\n", 9).is_err());
        let err = records_from_csv("cycle,signature_index\n0,5\n1,x\n", 9).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(records_from_csv("cycle,signature_index\n0,512\n", 9).is_err());
        assert!(records_from_csv("cycle,signature_index\n0,1,2\n", 9).is_err());
        assert!(records_from_csv("cycle,signature_index\n", 9)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn sidecar_sits_next_to_records() {
        assert_eq!(
            sidecar_path(Path::new("out/records.csv")),
            Path::new("out/records.json")
        );
    }

    #[test]
    fn config_diagnostics_name_the_line() {
        let dir = std::env::temp_dir().join(format!("loopsig-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.json");
        fs::write(
            &path,
            "{\n  \"N\": 2,\n  \"p_c\": [0.5, 0.5],\n  \"p_loss\": oops\n}",
        )
        .unwrap();
        let err = read_config(&path).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("line 4"), "{err}");
        fs::remove_dir_all(&dir).unwrap();
    }

    proptest! {
        #[test]
        fn csv_round_trips(bins in 1usize..16, raw in prop::collection::vec((any::<u64>(), any::<u64>()), 0..50)) {
            let records: Vec<CycleRecord> = raw
                .iter()
                .map(|(c, i)| CycleRecord {
                    cycle: *c,
                    signature: Signature::from_index(i & ((1 << bins) - 1), bins).unwrap(),
                })
                .collect();
            let text = records_to_csv(&records);
            let parsed = records_from_csv(&text, bins).unwrap();
            prop_assert_eq!(&parsed, &records);
            prop_assert_eq!(records_to_csv(&parsed), text);
        }
    }
}
