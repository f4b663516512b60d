//! File helpers: gzip-aware readers, JSON-lines and pretty JSON writers.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::Context;
use flate2::read::MultiGzDecoder;
use inferbias::{load_embeddings, EmbeddingSet};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::exit::EmptyInput;

/// Opens a text file, transparently decompressing gzip content.
pub fn open_text(path: &Path) -> anyhow::Result<Box<dyn BufRead>> {
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let file = File::open(path)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

pub fn read_embeddings(path: &Path, dimension: Option<usize>) -> anyhow::Result<EmbeddingSet> {
    load_embeddings(open_text(path)?, dimension).with_context(|| format!("loading embeddings {}", path.display()))
}

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Calls `f` on every non-blank line with its 1-based line number.
pub fn for_each_line(path: &Path, mut f: impl FnMut(usize, String) -> anyhow::Result<()>) -> anyhow::Result<usize> {
    let mut seen = 0;
    for (i, line) in open_text(path)?.lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        seen += 1;
        f(i + 1, line)?;
    }
    Ok(seen)
}

pub fn parse_line<T: DeserializeOwned>(path: &Path, line_no: usize, line: &str) -> anyhow::Result<T> {
    serde_json::from_str(line).with_context(|| format!("{}:{line_no}: invalid record", path.display()))
}

/// Reads a whole JSON-lines file, failing on empty input.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let mut out = Vec::new();
    for_each_line(path, |n, line| {
        out.push(parse_line(path, n, &line)?);
        Ok(())
    })?;
    if out.is_empty() {
        return Err(EmptyInput(path.display().to_string()).into());
    }
    Ok(out)
}

/// One word per line, or comma-separated on a single line.
pub fn read_word_file(path: &Path) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .flat_map(|l| l.split(','))
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect())
}
