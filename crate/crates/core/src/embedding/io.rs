//! Text format: an optional "N d" header line, then one
//! "word v1 ... vd" line per word. Numbers are written in shortest
//! round-trip decimal form.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use super::EmbeddingMatrix;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct ReadOptions {
    /// Stop after this many distinct words.
    pub max_words: Option<usize>,
}

pub fn read_embedding<R: BufRead>(reader: R) -> Result<EmbeddingMatrix> {
    read_embedding_with(reader, &ReadOptions::default()).map(|(e, _)| e)
}

/// Reads an embedding and also returns the number of skipped duplicate words.
pub fn read_embedding_with<R: BufRead>(
    reader: R,
    opts: &ReadOptions,
) -> Result<(EmbeddingMatrix, usize)> {
    let mut words: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut data: Vec<f64> = Vec::new();
    let mut dim: Option<usize> = None;
    let mut header_dim: Option<usize> = None;
    let mut duplicates = 0;
    let mut first = true;

    for (i, line) in reader.split(b'\n').enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = std::str::from_utf8(&line).map_err(|_| Error::Ingest { line: line_no })?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else {
            continue;
        };
        let values: Vec<&str> = parts.collect();

        if std::mem::take(&mut first) && values.len() == 1 {
            if let (Ok(_), Ok(d)) = (word.parse::<usize>(), values[0].parse::<usize>()) {
                header_dim = Some(d);
                continue;
            }
        }
        if opts.max_words.is_some_and(|m| words.len() >= m) {
            break;
        }

        let d = *dim.get_or_insert(values.len());
        if values.len() != d || d == 0 {
            return Err(Error::Format {
                line: line_no,
                msg: format!("expected {d} components, found {}", values.len()),
            });
        }
        if let Some(hd) = header_dim {
            if hd != d {
                return Err(Error::Format {
                    line: line_no,
                    msg: format!("header declares dimension {hd}, vector has {d}"),
                });
            }
        }
        if !seen.insert(word.to_owned()) {
            duplicates += 1;
            continue;
        }
        for v in values {
            let x: f64 = v.parse().map_err(|_| Error::Format {
                line: line_no,
                msg: format!("non-numeric component {v:?}"),
            })?;
            if !x.is_finite() {
                return Err(Error::Format {
                    line: line_no,
                    msg: format!("non-finite component {v:?}"),
                });
            }
            data.push(x);
        }
        words.push(word.to_owned());
    }
    if duplicates > 0 {
        log::warn!("skipped {duplicates} duplicate words");
    }
    let dim = dim.or(header_dim).unwrap_or(1).max(1);
    let (vocab, _) = Vocabulary::from_words(words);
    let n = vocab.len();
    let emb = EmbeddingMatrix::from_parts_unchecked(vocab, DMatrix::from_vec(dim, n, data));
    Ok((emb, duplicates))
}

pub fn write_embedding<W: Write>(emb: &EmbeddingMatrix, mut sink: W) -> Result<()> {
    writeln!(sink, "{} {}", emb.len(), emb.dim())?;
    for (i, word) in emb.vocab().words().iter().enumerate() {
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::Encoding(format!("word {word:?} is empty or contains whitespace")));
        }
        sink.write_all(word.as_bytes())?;
        for v in emb.vector(i) {
            write!(sink, " {v}")?;
        }
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}
