//! Two-record FASTA alignments.
//!
//! Output: exactly two records `>left` and `>right`, uppercase ACGT, one
//! unwrapped line per sequence. Input: any two-record FASTA; wrapped lines
//! and lowercase letters are accepted.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::model::sequence::{Sequence, SequenceError};

#[derive(Debug, Error)]
pub enum FastaError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("expected 2 records, found {0}")]
    RecordCount(usize),
    #[error("sequence data before the first `>` header")]
    DataBeforeHeader,
    #[error("record {name:?}: {source}")]
    BadSequence {
        name: String,
        source: SequenceError,
    },
}

/// Writes an aligned pair as `>left` / `>right`.
pub fn write_pair(out: &mut dyn Write, left: &Sequence, right: &Sequence) -> Result<(), FastaError> {
    writeln!(out, ">left")?;
    writeln!(out, "{left}")?;
    writeln!(out, ">right")?;
    writeln!(out, "{right}")?;
    Ok(())
}

/// Reads a two-record alignment. Record names are free-form; the first
/// record is taken as the left sequence.
pub fn read_pair(input: &mut dyn BufRead) -> Result<(Sequence, Sequence), FastaError> {
    let mut records: Vec<(String, String)> = Vec::new();
    for line in input.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('>') {
            records.push((name.trim().to_string(), String::new()));
        } else {
            match records.last_mut() {
                Some((_, seq)) => seq.push_str(trimmed),
                None => return Err(FastaError::DataBeforeHeader),
            }
        }
    }
    if records.len() != 2 {
        return Err(FastaError::RecordCount(records.len()));
    }
    let mut parsed = records.into_iter().map(|(name, text)| {
        text.parse::<Sequence>()
            .map_err(|source| FastaError::BadSequence { name, source })
    });
    let left = parsed.next().unwrap()?;
    let right = parsed.next().unwrap()?;
    Ok((left, right))
}
