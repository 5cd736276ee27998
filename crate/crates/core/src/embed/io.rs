use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::util;

use super::{sample_uniform, EmbeddingMatrix, Provenance, Strategy};

/// An in-memory table of word vectors, as read from a text embedding file.
#[derive(Debug, Clone, Default)]
pub struct WordVectors {
    dim: usize,
    words: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl WordVectors {
    pub fn new(dim: usize) -> Self {
        WordVectors {
            dim,
            ..Default::default()
        }
    }

    /// Adds a vector. Later duplicates of a word are ignored.
    pub fn insert(&mut self, word: &str, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension(format!(
                "vector for {word:?} has {} entries, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if self.index.contains_key(word) {
            return Ok(());
        }
        self.index.insert(word.to_string(), self.words.len());
        self.words.push(word.to_string());
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index
            .get(word)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// The whole table as a raw matrix, rows in file order.
    pub fn to_matrix(&self) -> Result<EmbeddingMatrix> {
        if self.is_empty() {
            return Err(Error::Dimension("embedding table is empty".into()));
        }
        Ok(EmbeddingMatrix::from_parts(
            self.words.clone(),
            self.dim,
            self.data.clone(),
            vec![Provenance::Pretrained; self.len()],
            Strategy::Raw,
        ))
    }
}

/// Streams a text embedding file, handing each `(word, vector)` to `keep`.
/// `dim` is the expected vector size; a header line, if present, must agree.
fn scan(path: &Path, dim: usize, mut keep: impl FnMut(&str, Vec<f64>)) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        let tokens: Vec<&str> = line.split(' ').filter(|t| !t.is_empty()).collect();
        if tokens.is_empty() {
            continue;
        }
        if lineno == 1 && tokens.len() == 2 {
            if let (Ok(_), Ok(header_dim)) = (tokens[0].parse::<u64>(), tokens[1].parse::<usize>()) {
                if header_dim != dim {
                    return Err(Error::Dimension(format!(
                        "{}: header declares dimension {header_dim}, expected {dim}",
                        path.display()
                    )));
                }
                continue;
            }
        }
        if tokens.len() != dim + 1 {
            return Err(parse_err(
                lineno,
                format!("expected {} tokens, found {}", dim + 1, tokens.len()),
            ));
        }
        let mut vector = Vec::with_capacity(dim);
        for t in &tokens[1..] {
            match t.parse::<f64>() {
                Ok(x) if x.is_finite() => vector.push(x),
                _ => return Err(parse_err(lineno, format!("invalid number {t:?}"))),
            }
        }
        keep(tokens[0], vector);
    }
    Ok(())
}

/// Vector size of a text embedding file, from its header line if it has one,
/// otherwise from the first vector.
pub fn text_embedding_dim(path: &Path) -> Result<usize> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let tokens: Vec<&str> = line.split(' ').filter(|t| !t.trim().is_empty()).collect();
        if tokens.is_empty() {
            continue;
        }
        if i == 0 && tokens.len() == 2 {
            if let (Ok(_), Ok(dim)) = (tokens[0].parse::<u64>(), tokens[1].trim().parse::<usize>()) {
                return Ok(dim);
            }
        }
        if tokens.len() < 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: "a vector line needs a word and at least one number".into(),
            });
        }
        return Ok(tokens.len() - 1);
    }
    Err(Error::Dimension(format!("{}: no vectors", path.display())))
}

/// Reads every vector in a text embedding file.
pub fn read_text_embeddings(path: &Path, dim: usize) -> Result<WordVectors> {
    let mut table = WordVectors::new(dim);
    scan(path, dim, |w, v| {
        let _ = table.insert(w, &v);
    })?;
    Ok(table)
}

/// Builds the initial embedding for `vocab` from a text embedding file.
///
/// Words present in the file are copied verbatim; the rest are drawn from
/// `U(−√3, √3)` in vocabulary order using `seed`. Returns the matrix and the
/// fraction of rows that came from the file.
pub fn load_pretrained<S: AsRef<str>>(
    path: &Path,
    vocab: &[S],
    dim: usize,
    seed: u64,
) -> Result<(EmbeddingMatrix, f64)> {
    check_vocab(vocab, dim)?;
    let wanted: HashMap<&str, ()> = vocab.iter().map(|w| (w.as_ref(), ())).collect();
    let mut table = WordVectors::new(dim);
    scan(path, dim, |w, v| {
        if wanted.contains_key(w) {
            let _ = table.insert(w, &v);
        }
    })?;
    load_pretrained_from_table(&table, vocab, seed)
}

/// Same as [`load_pretrained`] with an already loaded table.
pub fn load_pretrained_from_table<S: AsRef<str>>(
    table: &WordVectors,
    vocab: &[S],
    seed: u64,
) -> Result<(EmbeddingMatrix, f64)> {
    let dim = table.dim();
    check_vocab(vocab, dim)?;
    let mut rng = util::rng(seed);
    let mut data = Vec::with_capacity(vocab.len() * dim);
    let mut provenance = Vec::with_capacity(vocab.len());
    for w in vocab {
        match table.get(w.as_ref()) {
            Some(v) => {
                data.extend_from_slice(v);
                provenance.push(Provenance::Pretrained);
            }
            None => {
                data.extend(sample_uniform(&mut rng, dim));
                provenance.push(Provenance::RandomFilled);
            }
        }
    }
    let words = vocab.iter().map(|w| w.as_ref().to_string()).collect();
    let m = EmbeddingMatrix::from_parts(words, dim, data, provenance, Strategy::Raw);
    let coverage = m.coverage();
    Ok((m, coverage))
}

fn check_vocab<S>(vocab: &[S], dim: usize) -> Result<()> {
    if vocab.is_empty() {
        return Err(Error::Vocabulary("cannot build an embedding for an empty vocabulary".into()));
    }
    if dim == 0 {
        return Err(Error::Dimension("embedding dimension must be positive".into()));
    }
    Ok(())
}
