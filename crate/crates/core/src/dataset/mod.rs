//! Sparse binary datasets: loading, validation, indexing and feature
//! selection.
//!
//! The canonical on-disk format is line-oriented sparse text: a header
//! `#d=<n_features>` followed by one line per sample, `<label> <idx> <idx> ...`
//! (ASCII decimal, space separated, LF endings). Binary-feature corpora in
//! this domain are the wrong shape for dense storage (>99% zeros), so the
//! dense CSV reader exists only for tiny hand-written fixtures.

pub mod synth;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// On-disk representations understood by [`load`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// Header `#d=<n>`, then `<label> <idx> <idx> ...` per sample.
    SparseText,
    /// `<label>,<v0>,<v1>,...` per sample with every value 0 or 1.
    DenseCsv,
}

/// A row-sparse binary feature matrix with per-sample labels.
///
/// Rows store the indices of *present* features, sorted strictly
/// increasing. Labels are 0 (benign) or 1 (malicious). The struct is
/// immutable after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBinaryDataset {
    n_features: usize,
    rows: Vec<Vec<u32>>,
    labels: Vec<u8>,
    feature_names: Option<Vec<String>>,
}

impl SparseBinaryDataset {
    /// Builds a dataset from raw parts, normalizing each row to a sorted
    /// duplicate-free index set. Returns an error if any index is out of
    /// range or any label is not 0/1.
    pub fn new(n_features: usize, mut rows: Vec<Vec<u32>>, labels: Vec<u8>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let mut duplicates = 0usize;
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            let before = row.len();
            row.dedup();
            duplicates += before - row.len();
            if let Some(&max) = row.last() {
                if max as usize >= n_features {
                    return Err(Error::IndexOutOfRange {
                        index: max as usize,
                        dim: n_features,
                    });
                }
            }
            if labels[i] > 1 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("label must be 0 or 1, got {}", labels[i]),
                });
            }
        }
        if duplicates > 0 {
            log::warn!("normalized {duplicates} duplicate feature indices across rows");
        }
        Ok(Self {
            n_features,
            rows,
            labels,
            feature_names: None,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Attaches a vocabulary (one name per feature index).
    pub fn set_feature_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.n_features {
            return Err(Error::DimensionMismatch(format!(
                "{} names for {} features",
                names.len(),
                self.n_features
            )));
        }
        self.feature_names = Some(names);
        Ok(())
    }

    /// Appends the rows of `other` (labels included). Dimensions must match.
    pub fn concat(&self, other: &SparseBinaryDataset) -> Result<SparseBinaryDataset> {
        if other.n_features != self.n_features {
            return Err(Error::DimensionMismatch(format!(
                "cannot concatenate d={} with d={}",
                self.n_features, other.n_features
            )));
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(SparseBinaryDataset {
            n_features: self.n_features,
            rows,
            labels,
            feature_names: self.feature_names.clone(),
        })
    }

    /// Canonical sparse-text serialization. `load(save(ds))` is the
    /// identity, and `save(load(f))` is byte-identical for canonical `f`.
    pub fn to_sparse_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#d={}", self.n_features);
        for (row, label) in self.rows.iter().zip(&self.labels) {
            let _ = write!(out, "{label}");
            for &f in row {
                let _ = write!(out, " {f}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_sparse_text())?;
        Ok(())
    }
}

/// Per-feature presence counts and posting lists (sorted row ids).
///
/// This is the indexing layer every pairwise statistic runs on: a
/// contingency table for a feature pair reduces to one sorted-list
/// intersection plus the two presence counts.
#[derive(Debug, Clone)]
pub struct FeatureStats {
    presence_count: Vec<u32>,
    posting_lists: Vec<Vec<u32>>,
}

impl FeatureStats {
    pub fn compute(ds: &SparseBinaryDataset) -> Self {
        let mut posting_lists = vec![Vec::new(); ds.n_features()];
        for (row_id, row) in ds.rows().iter().enumerate() {
            for &f in row {
                posting_lists[f as usize].push(row_id as u32);
            }
        }
        let presence_count = posting_lists.iter().map(|p| p.len() as u32).collect();
        Self {
            presence_count,
            posting_lists,
        }
    }

    pub fn presence_count(&self, f: usize) -> u32 {
        self.presence_count[f]
    }

    pub fn presence_counts(&self) -> &[u32] {
        &self.presence_count
    }

    pub fn posting_list(&self, f: usize) -> &[u32] {
        &self.posting_lists[f]
    }

    /// Features present in no row or in every row. They carry no pairwise
    /// information (every phi involving them is undefined).
    pub fn constant_features(&self, n_samples: usize) -> Vec<u32> {
        self.presence_count
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0 || c as usize == n_samples)
            .map(|(f, _)| f as u32)
            .collect()
    }
}

/// Which rows participate in top-k frequency counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TopKScope {
    /// Count presence over every sample.
    #[default]
    All,
    /// Count presence over malware rows only.
    MalwareOnly,
}

/// Keeps the `k` most frequent features (ties: lower original index wins)
/// and remaps indices densely to `0..k`. Returns the reduced dataset and
/// the old-to-new index map (`None` for dropped features).
///
/// With `k >= n_features` this is the identity remap.
pub fn select_top_k(
    ds: &SparseBinaryDataset,
    k: usize,
) -> Result<(SparseBinaryDataset, Vec<Option<u32>>)> {
    select_top_k_scoped(ds, k, TopKScope::All)
}

pub fn select_top_k_scoped(
    ds: &SparseBinaryDataset,
    k: usize,
    scope: TopKScope,
) -> Result<(SparseBinaryDataset, Vec<Option<u32>>)> {
    if k == 0 {
        return Err(Error::InvalidParameter("top-k requires k >= 1".into()));
    }
    let mut counts = vec![0u32; ds.n_features()];
    for (row, &label) in ds.rows().iter().zip(ds.labels()) {
        if scope == TopKScope::MalwareOnly && label != 1 {
            continue;
        }
        for &f in row {
            counts[f as usize] += 1;
        }
    }
    let k = k.min(ds.n_features());
    let mut order: Vec<u32> = (0..ds.n_features() as u32).collect();
    order.sort_by_key(|&f| (std::cmp::Reverse(counts[f as usize]), f));
    let mut kept: Vec<u32> = order[..k].to_vec();
    kept.sort_unstable();

    let mut remap = vec![None; ds.n_features()];
    for (new, &old) in kept.iter().enumerate() {
        remap[old as usize] = Some(new as u32);
    }
    let rows = ds
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .filter_map(|&f| remap[f as usize])
                .collect::<Vec<u32>>()
        })
        .collect();
    let mut out = SparseBinaryDataset::new(k, rows, ds.labels().to_vec())?;
    if let Some(names) = ds.feature_names() {
        let kept_names = kept.iter().map(|&f| names[f as usize].clone()).collect();
        out.set_feature_names(kept_names)?;
    }
    Ok((out, remap))
}

/// Loads a dataset from disk under the declared format.
pub fn load(path: impl AsRef<Path>, format: Format) -> Result<SparseBinaryDataset> {
    let text = fs::read_to_string(path)?;
    match format {
        Format::SparseText => parse_sparse_text(&text),
        Format::DenseCsv => parse_dense_csv(&text),
    }
}

/// Parses the canonical sparse-text format. Rows with duplicate indices
/// are normalized to set semantics with a warning, not rejected: real
/// extraction pipelines emit duplicates.
pub fn parse_sparse_text(text: &str) -> Result<SparseBinaryDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file, expected #d=<n_features> header".into(),
    })?;
    let n_features: usize = header
        .strip_prefix("#d=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or(Error::Parse {
            line: 1,
            msg: format!("expected #d=<n_features> header, got {header:?}"),
        })?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap();
        let label: u8 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad label {label_tok:?}"),
        })?;
        if label > 1 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("label must be 0 or 1, got {label}"),
            });
        }
        let mut row = Vec::new();
        for tok in tokens {
            let f: u32 = tok.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature index {tok:?}"),
            })?;
            if f as usize >= n_features {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("feature index {f} out of declared range d={n_features}"),
                });
            }
            row.push(f);
        }
        rows.push(row);
        labels.push(label);
    }
    SparseBinaryDataset::new(n_features, rows, labels)
}

/// Parses the dense CSV fixture format: `<label>,<v0>,...` with binary
/// values only.
pub fn parse_dense_csv(text: &str) -> Result<SparseBinaryDataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut n_features = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let label_tok = fields.next().unwrap().trim();
        let label: u8 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad label {label_tok:?}"),
        })?;
        let mut row = Vec::new();
        let mut width = 0usize;
        for (col, tok) in fields.enumerate() {
            width += 1;
            match tok.trim() {
                "0" => {}
                "1" => row.push(col as u32),
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("non-binary value {other:?} in column {}", col + 1),
                    })
                }
            }
        }
        match n_features {
            None => n_features = Some(width),
            Some(d) if d != width => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("row has {width} values, expected {d}"),
                })
            }
            _ => {}
        }
        rows.push(row);
        labels.push(label);
    }
    let n_features = n_features.ok_or(Error::Parse {
        line: 1,
        msg: "empty csv".into(),
    })?;
    SparseBinaryDataset::new(n_features, rows, labels)
}

/// Loads a vocabulary file: one feature name per line, line number = index.
pub fn load_feature_names(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(str::to_owned).collect())
}

/// Dense column view of one feature, mostly useful in tests and oracles.
pub fn dense_column(ds: &SparseBinaryDataset, f: usize) -> Vec<u8> {
    let mut col = vec![0u8; ds.n_samples()];
    for (i, row) in ds.rows().iter().enumerate() {
        if row.binary_search(&(f as u32)).is_ok() {
            col[i] = 1;
        }
    }
    col
}
