//! Append-only annotation log in manifest record format.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use voclab_core::manifest::{annotation_line, parse_annotation_line};
use voclab_core::Annotation;

use crate::ServiceError;

#[derive(Debug)]
pub struct AnnotationLog {
    path: PathBuf,
    file: File,
}

impl AnnotationLog {
    /// Opens (creating if needed) the log and returns every complete record.
    /// A final line without a newline that fails to parse is the remains of
    /// an interrupted, never-acknowledged write and is cut off.
    pub fn open(path: impl AsRef<Path>) -> Result<(Self, Vec<Annotation>), ServiceError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(|e| ServiceError::Store(format!("{}: {e}", path.display())))?;
        let mut records = Vec::new();
        let mut good_len = 0u64;
        {
            let mut reader = BufReader::new(&mut file);
            let mut line = String::new();
            let mut line_no = 0;
            loop {
                line.clear();
                let n = reader.read_line(&mut line).map_err(|e| ServiceError::Store(e.to_string()))?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                let complete = line.ends_with('\n');
                let text = line.trim();
                if text.is_empty() {
                    good_len += n as u64;
                    continue;
                }
                match (parse_annotation_line(text), complete) {
                    (Ok(a), true) => {
                        records.push(a);
                        good_len += n as u64;
                    }
                    (_, false) => break,
                    (Err(e), true) => {
                        return Err(ServiceError::Store(format!("{} line {line_no}: {e}", path.display())));
                    }
                }
            }
        }
        if file.metadata().map_err(|e| ServiceError::Store(e.to_string()))?.len() != good_len {
            file.set_len(good_len).map_err(|e| ServiceError::Store(e.to_string()))?;
        }
        file.seek(SeekFrom::End(0)).map_err(|e| ServiceError::Store(e.to_string()))?;
        Ok((Self { path, file }, records))
    }

    /// Appends one record and syncs it to disk.
    pub fn append(&mut self, a: &Annotation) -> std::io::Result<()> {
        let mut line = annotation_line(a);
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Reads a log without modifying it.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<Annotation>, ServiceError> {
    let file = File::open(path.as_ref()).map_err(|e| ServiceError::Store(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ServiceError::Store(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_annotation_line(&line).map_err(|e| ServiceError::Store(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
