//! Per-snapshot embedding containers and their text format.
//!
//! Matrix text format: header `n d`, then `n` lines of `d` reals with 17
//! significant digits. A step is written as a `.src` and a `.tgt` file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::numerics::format::fmt_real;
use crate::Mat;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("embedding step for t={t} has inconsistent shapes")]
    Shape { t: usize },
    #[error("embedding step for t={t} contains non-finite values")]
    NonFinite { t: usize },
    #[error("steps must have strictly increasing t")]
    Order,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Source and target embeddings of every node at snapshot `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStep {
    pub t: usize,
    pub src: Mat,
    pub tgt: Mat,
}

impl EmbeddingStep {
    /// `src · tgtᵀ`, the reconstructed adjacency.
    pub fn scores(&self) -> Mat {
        &self.src * self.tgt.transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSeries {
    pub method: String,
    pub config: serde_json::Value,
    steps: Vec<EmbeddingStep>,
}

impl EmbeddingSeries {
    pub fn new(
        method: impl Into<String>,
        config: serde_json::Value,
        steps: Vec<EmbeddingStep>,
    ) -> Result<Self, SeriesError> {
        let shape = steps.first().map(|s| s.src.shape());
        for (i, s) in steps.iter().enumerate() {
            if Some(s.src.shape()) != shape || s.tgt.shape() != s.src.shape() {
                return Err(SeriesError::Shape { t: s.t });
            }
            if s.src.iter().chain(s.tgt.iter()).any(|x| !x.is_finite()) {
                return Err(SeriesError::NonFinite { t: s.t });
            }
            if i > 0 && steps[i - 1].t >= s.t {
                return Err(SeriesError::Order);
            }
        }
        Ok(Self {
            method: method.into(),
            config,
            steps,
        })
    }

    pub fn steps(&self) -> &[EmbeddingStep] {
        &self.steps
    }

    pub fn get(&self, t: usize) -> Option<&EmbeddingStep> {
        self.steps.iter().find(|s| s.t == t)
    }

    pub fn last(&self) -> Option<&EmbeddingStep> {
        self.steps.last()
    }

    /// Snapshot indices with an embedding.
    pub fn times(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.t).collect()
    }

    pub fn dim(&self) -> Option<usize> {
        self.steps.first().map(|s| s.src.ncols())
    }

    /// Writes `<stem>_t<t>.src` and `.tgt` for every step; returns the paths.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, SeriesError> {
        let mut written = Vec::new();
        for s in &self.steps {
            for (ext, m) in [("src", &s.src), ("tgt", &s.tgt)] {
                let path = dir.join(format!("{stem}_t{}.{ext}", s.t));
                write_matrix(&path, m)?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

/// Reads every `<stem>_t<t>.src`/`.tgt` pair in `dir`, ordered by `t`.
pub fn load_series(dir: &Path, stem: &str, method: &str) -> Result<EmbeddingSeries, SeriesError> {
    let prefix = format!("{stem}_t");
    let mut times = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(t) = name
            .strip_prefix(&prefix)
            .and_then(|rest| rest.strip_suffix(".src"))
            .and_then(|t| t.parse::<usize>().ok())
        {
            times.push(t);
        }
    }
    times.sort_unstable();
    let steps = times
        .into_iter()
        .map(|t| {
            Ok(EmbeddingStep {
                t,
                src: read_matrix(&dir.join(format!("{prefix}{t}.src")))?,
                tgt: read_matrix(&dir.join(format!("{prefix}{t}.tgt")))?,
            })
        })
        .collect::<Result<Vec<_>, SeriesError>>()?;
    EmbeddingSeries::new(method, serde_json::Value::Null, steps)
}

pub fn matrix_to_text(m: &Mat) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", m.nrows(), m.ncols()).unwrap();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&x| fmt_real(x)).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    out
}

pub fn matrix_from_text(text: &str) -> Result<Mat, SeriesError> {
    let mut lines = text.lines().enumerate();
    let err = |line: usize, msg: &str| SeriesError::Parse {
        line: line + 1,
        msg: msg.to_string(),
    };
    let (hl, header) = lines.next().ok_or_else(|| err(0, "missing header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|x| x.parse())
        .collect::<Result<_, _>>()
        .map_err(|_| err(hl, "malformed header"))?;
    let [rows, cols] = dims[..] else {
        return Err(err(hl, "header must be `n d`"));
    };
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (ln, line) = lines.next().ok_or_else(|| err(hl, "missing rows"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|x| x.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| err(ln, "malformed real"))?;
        if vals.len() != cols {
            return Err(err(ln, "wrong number of columns"));
        }
        data.extend(vals);
    }
    if let Some((ln, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(err(ln, "trailing data"));
    }
    Ok(Mat::from_row_slice(rows, cols, &data))
}

pub fn write_matrix(path: &Path, m: &Mat) -> Result<(), SeriesError> {
    std::fs::write(path, matrix_to_text(m))?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Mat, SeriesError> {
    matrix_from_text(&std::fs::read_to_string(path)?)
}
