//! Append-only journal of completed paragraphs.
//!
//! The first line is a header carrying a digest of the input dataset and of
//! every setting that affects the output. Each further line is one finished
//! paragraph. A torn final line (from a kill mid-write) is discarded on load.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ParagraphUnit, PipelineError};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    qax_checkpoint: u32,
    digest: String,
}

/// Units already recorded, keyed by `(article, paragraph)`.
pub(crate) type Completed = BTreeMap<(usize, usize), ParagraphUnit>;

pub(crate) struct Journal {
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
}

/// Opens or creates the journal at `path` and returns it together with the
/// units already recorded.
pub(crate) fn open(path: &Path, digest: &str) -> Result<(Journal, Completed), PipelineError> {
    let io = |e: std::io::Error| PipelineError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut file = OpenOptions::new()
        .read(true)
        .write(true)
        .create(true)
        .truncate(false)
        .open(path)
        .map_err(io)?;
    let mut raw = Vec::new();
    file.read_to_end(&mut raw).map_err(io)?;

    let mut done = BTreeMap::new();
    if raw.is_empty() {
        let header = Header {
            qax_checkpoint: FORMAT_VERSION,
            digest: digest.to_string(),
        };
        let mut line = serde_json::to_vec(&header).expect("header serializes");
        line.push(b'\n');
        file.write_all(&line).map_err(io)?;
        file.sync_data().map_err(io)?;
    } else {
        // drop anything after the last newline: it was never fully written
        let complete = raw.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if complete < raw.len() {
            file.set_len(complete as u64).map_err(io)?;
        }
        let mut lines = raw[..complete]
            .split(|&b| b == b'\n')
            .filter(|l| !l.is_empty());
        let header: Header = lines
            .next()
            .and_then(|l| serde_json::from_slice(l).ok())
            .ok_or_else(|| PipelineError::CorruptCheckpoint(path.to_path_buf()))?;
        if header.qax_checkpoint != FORMAT_VERSION || header.digest != digest {
            return Err(PipelineError::ChecksumMismatch {
                path: path.to_path_buf(),
                expected: digest.to_string(),
                found: header.digest,
            });
        }
        for line in lines {
            let unit: ParagraphUnit = serde_json::from_slice(line)
                .map_err(|_| PipelineError::CorruptCheckpoint(path.to_path_buf()))?;
            done.insert((unit.article, unit.paragraph), unit);
        }
    }
    file.seek(SeekFrom::End(0)).map_err(io)?;
    Ok((
        Journal {
            path: path.to_path_buf(),
            writer: Mutex::new(BufWriter::new(file)),
        },
        done,
    ))
}

impl Journal {
    /// Appends one unit as a single line and flushes it to disk.
    pub(crate) fn record(&self, unit: &ParagraphUnit) -> Result<(), PipelineError> {
        let mut line = serde_json::to_vec(unit).expect("unit serializes");
        line.push(b'\n');
        let mut w = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        w.write_all(&line)
            .and_then(|()| w.flush())
            .and_then(|()| w.get_ref().sync_data())
            .map_err(|e| PipelineError::Io {
                path: self.path.clone(),
                source: e,
            })
    }
}
