use std::collections::HashMap;
use std::io::{self, BufRead, Read, Write};

use thiserror::Error;

use crate::lexicon::ConceptId;

const BINARY_MAGIC: &[u8; 5] = b"KFEM1";

#[derive(Debug, Error)]
pub enum ModelFormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("bad magic bytes")]
    Magic,
    #[error("{0}")]
    Shape(String),
}

/// Per-concept input vectors from training.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    dimension: usize,
    seed: u64,
    vocab: Vec<ConceptId>,
    index: HashMap<ConceptId, usize>,
    vectors: Vec<f32>,
}

impl EmbeddingModel {
    pub fn from_flat(dimension: usize, seed: u64, vocab: Vec<ConceptId>, vectors: Vec<f32>) -> Result<Self, ModelFormatError> {
        if dimension == 0 || vectors.len() != vocab.len() * dimension {
            return Err(ModelFormatError::Shape(format!(
                "{} values for {} concepts of dimension {dimension}",
                vectors.len(),
                vocab.len()
            )));
        }
        let index: HashMap<ConceptId, usize> = vocab.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
        if index.len() != vocab.len() {
            return Err(ModelFormatError::Shape("duplicate concept in vocabulary".into()));
        }
        Ok(EmbeddingModel {
            dimension,
            seed,
            vocab,
            index,
            vectors,
        })
    }

    pub fn from_rows(dimension: usize, seed: u64, rows: Vec<(ConceptId, Vec<f32>)>) -> Result<Self, ModelFormatError> {
        let mut vocab = Vec::with_capacity(rows.len());
        let mut flat = Vec::with_capacity(rows.len() * dimension);
        for (id, v) in rows {
            if v.len() != dimension {
                return Err(ModelFormatError::Shape(format!("{id}: {} values, expected {dimension}", v.len())));
            }
            vocab.push(id);
            flat.extend(v);
        }
        EmbeddingModel::from_flat(dimension, seed, vocab, flat)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[ConceptId] {
        &self.vocab
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.index.contains_key(id)
    }

    pub fn vector(&self, id: &ConceptId) -> Option<&[f32]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ConceptId, &[f32])> {
        self.vocab.iter().enumerate().map(|(i, c)| (c, self.row(i)))
    }

    /// Multiplies every vector by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        let mut out = self.clone();
        out.vectors.iter_mut().for_each(|x| *x *= factor);
        out
    }

    /// Text form: header `n d seed`, then `id v1 .. vd` per concept with
    /// nine significant digits, which round-trips `f32` exactly.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{} {} {}", self.len(), self.dimension, self.seed)?;
        for (id, v) in self.iter() {
            out.write_all(id.as_str().as_bytes())?;
            for x in v {
                write!(out, " {x:.8e}")?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<Self, ModelFormatError> {
        let mut lines = reader.lines();
        let parse_err = |line: usize, message: String| ModelFormatError::Parse { line, message };
        let header = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [n, d, seed] = fields[..] else {
            return Err(parse_err(1, "header must be `n d seed`".into()));
        };
        let n: usize = n.parse().map_err(|e| parse_err(1, format!("{e}")))?;
        let d: usize = d.parse().map_err(|e| parse_err(1, format!("{e}")))?;
        let seed: u64 = seed.parse().map_err(|e| parse_err(1, format!("{e}")))?;
        let mut rows = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let id = ConceptId(parts.next().unwrap_or_default().to_string());
            let v: Vec<f32> = parts
                .map(|s| s.parse::<f32>())
                .collect::<Result<_, _>>()
                .map_err(|e| parse_err(i + 2, e.to_string()))?;
            rows.push((id, v));
        }
        if rows.len() != n {
            return Err(ModelFormatError::Shape(format!("header says {n} rows, found {}", rows.len())));
        }
        EmbeddingModel::from_rows(d, seed, rows)
    }

    /// Binary form: `KFEM1`, u64 n, u32 d, u64 seed, then per concept a u32
    /// id length, the id bytes and `d` f32 values; little-endian throughout.
    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        out.write_all(&(self.dimension as u32).to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for (id, v) in self.iter() {
            out.write_all(&(id.as_str().len() as u32).to_le_bytes())?;
            out.write_all(id.as_str().as_bytes())?;
            for x in v {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> Result<Self, ModelFormatError> {
        let mut magic = [0u8; 5];
        input.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(ModelFormatError::Magic);
        }
        let mut b8 = [0u8; 8];
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        input.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4) as usize;
        input.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let mut rows = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            input.read_exact(&mut b4)?;
            let mut id = vec![0u8; u32::from_le_bytes(b4) as usize];
            input.read_exact(&mut id)?;
            let id = String::from_utf8(id).map_err(|e| ModelFormatError::Shape(e.to_string()))?;
            let mut v = Vec::with_capacity(d);
            for _ in 0..d {
                input.read_exact(&mut b4)?;
                v.push(f32::from_le_bytes(b4));
            }
            rows.push((ConceptId(id), v));
        }
        EmbeddingModel::from_rows(d, seed, rows)
    }
}
