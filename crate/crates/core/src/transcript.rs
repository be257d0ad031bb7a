//! Transcript files: one JSON header line followed by one JSON row per round,
//! gzip-compressed for long runs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::agents::Policy;
use crate::error::{Error, Result};
use crate::protocol::{RecordSink, RoundRecord};

/// Runs longer than this many rounds are written gzip-compressed.
pub const GZIP_THRESHOLD: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentModel {
    Rationalizable,
    NoRegret,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub model: AgentModel,
    pub algorithm: String,
    pub action_counts: Vec<usize>,
    /// Seed of every agent's learners.
    pub agent_seed: u64,
    pub principal_seed: u64,
    /// Horizon the agents were told (sets the MWU step size).
    pub horizon: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policies: Option<Vec<Policy>>,
    #[serde(default)]
    pub replication: u64,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    header: TranscriptHeader,
}

/// Conventional file name for a run of `rounds` rounds.
pub fn transcript_path(dir: &Path, stem: &str, rounds: u64) -> PathBuf {
    if rounds > GZIP_THRESHOLD {
        dir.join(format!("{stem}.ndjson.gz"))
    } else {
        dir.join(format!("{stem}.ndjson"))
    }
}

/// Streams rows to disk as they are produced.
pub struct TranscriptWriter {
    out: Box<dyn Write + Send>,
    path: PathBuf,
}

impl TranscriptWriter {
    /// Compresses when `path` ends in `.gz`.
    pub fn create(path: &Path, header: &TranscriptHeader) -> Result<Self> {
        let file = BufWriter::new(File::create(path)?);
        let mut out: Box<dyn Write + Send> = if path.extension().is_some_and(|e| e == "gz") {
            Box::new(GzEncoder::new(file, Compression::fast()))
        } else {
            Box::new(file)
        };
        serde_json::to_writer(
            &mut out,
            &HeaderLine {
                header: header.clone(),
            },
        )?;
        out.write_all(b"\n")?;
        Ok(TranscriptWriter {
            out,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

impl RecordSink for TranscriptWriter {
    fn push(&mut self, record: &RoundRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }
}

impl Drop for TranscriptWriter {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

/// A transcript read back into memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    pub header: TranscriptHeader,
    pub records: Vec<RoundRecord>,
}

impl Transcript {
    /// Reads plain or gzip-compressed transcripts (detected by magic bytes).
    pub fn read(path: &Path) -> Result<Self> {
        let mut file = File::open(path)?;
        let mut magic = [0u8; 2];
        let n = file.read(&mut magic)?;
        let file = File::open(path)?;
        let reader: Box<dyn BufRead> = if n == 2 && magic == [0x1f, 0x8b] {
            Box::new(BufReader::new(GzDecoder::new(file)))
        } else {
            Box::new(BufReader::new(file))
        };
        Self::parse(reader)
    }

    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::shape("transcript is empty: missing header line"))??;
        let header: HeaderLine = serde_json::from_str(&first)
            .map_err(|e| Error::shape(format!("line 1: bad transcript header: {e}")))?;
        let mut records = Vec::new();
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: RoundRecord = serde_json::from_str(&line)
                .map_err(|e| Error::shape(format!("line {}: corrupt row: {e}", k + 2)))?;
            records.push(record);
        }
        Ok(Transcript {
            header: header.header,
            records,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{AgentRound, Signal, Stage};

    fn header() -> TranscriptHeader {
        TranscriptHeader {
            model: AgentModel::NoRegret,
            algorithm: "learn-noregret".into(),
            action_counts: vec![2],
            agent_seed: 1,
            principal_seed: 2,
            horizon: 3,
            policies: None,
            replication: 0,
        }
    }

    fn record(t: u64) -> RoundRecord {
        RoundRecord {
            t,
            stage: Stage::Learning,
            phase: Some(0),
            agents: vec![AgentRound {
                signal: Signal::Bottom,
                action: 1,
                payments: vec![0.1, 1.0 / 3.0],
                utility: 0.7,
            }],
            principal_utility: 0.0,
            total_payment: 1.0 / 3.0,
        }
    }

    #[test]
    fn plain_and_gzip_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        for rounds in [10, GZIP_THRESHOLD + 1] {
            let path = transcript_path(dir.path(), &format!("run-{rounds}"), rounds);
            let mut w = TranscriptWriter::create(&path, &header()).unwrap();
            for t in 0..3 {
                w.push(&record(t)).unwrap();
            }
            w.finish().unwrap();
            let back = Transcript::read(&path).unwrap();
            assert_eq!(back.header, header());
            assert_eq!(back.records, (0..3).map(record).collect::<Vec<_>>());
        }
    }

    #[test]
    fn corrupt_row_names_its_line() {
        let text = format!(
            "{}\n{}\nnot json\n",
            serde_json::to_string(&HeaderLine { header: header() }).unwrap(),
            serde_json::to_string(&record(0)).unwrap()
        );
        let err = Transcript::parse(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(Transcript::parse("".as_bytes()).is_err());
    }
}
