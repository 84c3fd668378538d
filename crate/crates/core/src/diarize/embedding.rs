use std::path::Path;

use crate::error::{Error, Result};

/// Row-per-segment embedding matrix, stored as text: a header line `n D`
/// followed by `n` rows of `D` numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl EmbeddingMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Dimension(format!("row {i} has {} values, expected {dim}", rows[i].len())));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Format("embedding matrix has non-finite values".into()));
        }
        Ok(Self { dim, rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<Vec<f64>> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Format("embedding file is empty".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|v| v.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse { line: 1, message: "header must be `n D`".into() })?;
        let [n, d] = dims[..] else {
            return Err(Error::Parse { line: 1, message: "header must be `n D`".into() });
        };
        let mut rows = Vec::with_capacity(n);
        for (i, line) in lines {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse { line: i + 1, message: "invalid number".into() })?;
            if row.len() != d {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {d} values, got {}", row.len()),
                });
            }
            rows.push(row);
        }
        if rows.len() != n {
            return Err(Error::Format(format!("header announces {n} rows, found {}", rows.len())));
        }
        let mut m = Self::new(rows)?;
        m.dim = d;
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.rows.len(), self.dim);
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
