//! Phrase-embedding matrices (EMB1 files), the feature-hashing fallback
//! embedder, and fused feature vectors.
//!
//! An EMB1 file is plain UTF-8 text:
//!
//! ```text
//! EMB1 <n> <d> <model_name>
//! <id> v1 ... vd
//! ...
//! ```
//!
//! Values are written in shortest round-trip decimal form, so
//! `parse_emb1(write_emb1(m)) == m` bit for bit.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::normalize_in_place;
use crate::textprep::BagOfTokens;
use crate::util::{fmt_f64, stable_hash};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line 1: bad EMB1 header: {0}")]
    Header(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("header declares {declared} rows but {found} follow")]
    RowCount { declared: usize, found: usize },
    #[error("matrix has {ids} ids but {rows} rows")]
    Shape { ids: usize, rows: usize },
    #[error("{block} block expects width {expected}, got {got}")]
    Width { block: Block, expected: usize, got: usize },
    #[error("embedding dimension must be at least 1")]
    ZeroDim,
    #[error("id {0:?} cannot be written to EMB1 (empty or contains whitespace)")]
    BadId(String),
}

pub type Result<T> = std::result::Result<T, EmbedError>;

/// Row-aligned phrase embeddings for a list of finding ids.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    values: Vec<f64>,
    model_name: String,
}

impl EmbeddingMatrix {
    pub fn new(ids: Vec<String>, dim: usize, values: Vec<f64>, model_name: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(EmbedError::ZeroDim);
        }
        if values.len() != ids.len() * dim {
            return Err(EmbedError::Shape { ids: ids.len(), rows: values.len() / dim });
        }
        let mut seen = HashSet::new();
        for (row, id) in ids.iter().enumerate() {
            if !seen.insert(id) {
                return Err(EmbedError::Row { row: row + 1, message: format!("duplicate id {id:?}") });
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::Row { row: pos / dim + 1, message: "non-finite value".into() });
        }
        Ok(Self { ids, dim, values, model_name: model_name.into() })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }
}

/// Parses EMB1 text. Row numbers in errors count data rows from 1.
pub fn parse_emb1(text: &str) -> Result<EmbeddingMatrix> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| EmbedError::Header("empty input".into()))?;
    let mut parts = header.splitn(4, ' ');
    if parts.next() != Some("EMB1") {
        return Err(EmbedError::Header("missing EMB1 magic".into()));
    }
    let n: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| EmbedError::Header("row count is not an integer".into()))?;
    let d: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| EmbedError::Header("dimension is not an integer".into()))?;
    let model_name = parts.next().unwrap_or("").trim();
    if model_name.is_empty() {
        return Err(EmbedError::Header("model name missing".into()));
    }
    if d == 0 {
        return Err(EmbedError::ZeroDim);
    }

    let mut ids = Vec::with_capacity(n.min(1 << 16));
    let mut values = Vec::with_capacity(n.min(1 << 16).saturating_mul(d).min(1 << 24));
    let mut seen = HashSet::new();
    let mut found = 0usize;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        found += 1;
        if found > n {
            continue;
        }
        let row = found;
        let mut fields = line.split(' ');
        let id = fields.next().unwrap_or("");
        if id.is_empty() {
            return Err(EmbedError::Row { row, message: "missing id".into() });
        }
        if id.chars().any(char::is_whitespace) {
            return Err(EmbedError::Row { row, message: format!("id {id:?} contains whitespace") });
        }
        if !seen.insert(id.to_string()) {
            return Err(EmbedError::Row { row, message: format!("duplicate id {id:?}") });
        }
        let mut count = 0;
        for field in fields {
            let v: f64 = field
                .parse()
                .map_err(|_| EmbedError::Row { row, message: format!("bad number {field:?}") })?;
            if !v.is_finite() {
                return Err(EmbedError::Row { row, message: "non-finite value".into() });
            }
            count += 1;
            if count > d {
                break;
            }
            values.push(v);
        }
        if count != d {
            return Err(EmbedError::Row { row, message: format!("expected {d} values, found {count}") });
        }
        ids.push(id.to_string());
    }
    if found != n {
        return Err(EmbedError::RowCount { declared: n, found });
    }
    Ok(EmbeddingMatrix { ids, dim: d, values, model_name: model_name.to_string() })
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let text = std::fs::read_to_string(path).map_err(|source| EmbedError::Io { path: path.to_path_buf(), source })?;
    parse_emb1(&text)
}

pub fn write_emb1(m: &EmbeddingMatrix) -> Result<String> {
    let mut out = format!("EMB1 {} {} {}\n", m.len(), m.dim, m.model_name);
    for (i, id) in m.ids.iter().enumerate() {
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(EmbedError::BadId(id.clone()));
        }
        out.push_str(id);
        for v in m.row(i) {
            let _ = write!(out, " {}", fmt_f64(*v));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Feature-hashing embedder: every token adds ±1 at a hashed index; the
/// sum is L2-normalized. Order-invariant; empty input gives zeros.
pub fn hash_embed(tokens: &[String], dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim >= 1, "embedding dimension must be at least 1");
    let mut v = vec![0.0; dim];
    for t in tokens {
        let h = stable_hash(seed, [t.as_bytes()]);
        let index = (h % dim as u64) as usize;
        let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
        v[index] += sign;
    }
    normalize_in_place(&mut v);
    v
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = crate::linalg::l2_norm(a);
    let nb = crate::linalg::l2_norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    crate::linalg::dot(a, b) / (na * nb)
}

/// The four blocks of a fused feature vector, in layout order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    TitleBag,
    DescriptionBag,
    TitleEmbedding,
    DescriptionEmbedding,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::TitleBag, Block::DescriptionBag, Block::TitleEmbedding, Block::DescriptionEmbedding];

    pub fn as_str(self) -> &'static str {
        match self {
            Block::TitleBag => "title_bag",
            Block::DescriptionBag => "description_bag",
            Block::TitleEmbedding => "title_embedding",
            Block::DescriptionEmbedding => "description_embedding",
        }
    }

    pub fn is_bag(self) -> bool {
        matches!(self, Block::TitleBag | Block::DescriptionBag)
    }
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a single feature index stands for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeatureSlot<'a> {
    Token { block: Block, token: &'a str },
    Component { block: Block, component: usize },
}

impl FeatureSlot<'_> {
    pub fn block(&self) -> Block {
        match self {
            FeatureSlot::Token { block, .. } | FeatureSlot::Component { block, .. } => *block,
        }
    }
}

/// Layout descriptor: `[title-bag | description-bag | title-embedding |
/// description-embedding]`. Any block may have width zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub title_tokens: Vec<String>,
    pub description_tokens: Vec<String>,
    pub title_dim: usize,
    pub description_dim: usize,
}

impl FeatureLayout {
    pub fn new(title_tokens: Vec<String>, description_tokens: Vec<String>, title_dim: usize, description_dim: usize) -> Self {
        Self { title_tokens, description_tokens, title_dim, description_dim }
    }

    /// Layout with anonymous bag columns, for tests and numeric-only use.
    pub fn from_widths(title_bag: usize, description_bag: usize, title_dim: usize, description_dim: usize) -> Self {
        Self::new(
            (0..title_bag).map(|i| format!("t{i}")).collect(),
            (0..description_bag).map(|i| format!("d{i}")).collect(),
            title_dim,
            description_dim,
        )
    }

    pub fn width(&self, block: Block) -> usize {
        match block {
            Block::TitleBag => self.title_tokens.len(),
            Block::DescriptionBag => self.description_tokens.len(),
            Block::TitleEmbedding => self.title_dim,
            Block::DescriptionEmbedding => self.description_dim,
        }
    }

    pub fn offset(&self, block: Block) -> usize {
        Block::ALL.iter().take_while(|&&b| b != block).map(|&b| self.width(b)).sum()
    }

    pub fn range(&self, block: Block) -> std::ops::Range<usize> {
        let start = self.offset(block);
        start..start + self.width(block)
    }

    pub fn total(&self) -> usize {
        Block::ALL.iter().map(|&b| self.width(b)).sum()
    }

    /// Describes feature `index`, or `None` past the end.
    pub fn describe(&self, index: usize) -> Option<FeatureSlot<'_>> {
        for block in Block::ALL {
            let r = self.range(block);
            if r.contains(&index) {
                let local = index - r.start;
                return Some(match block {
                    Block::TitleBag => FeatureSlot::Token { block, token: &self.title_tokens[local] },
                    Block::DescriptionBag => FeatureSlot::Token { block, token: &self.description_tokens[local] },
                    _ => FeatureSlot::Component { block, component: local },
                });
            }
        }
        None
    }

    /// Human-readable feature name, e.g. `title_bag:model`.
    pub fn feature_name(&self, index: usize) -> String {
        match self.describe(index) {
            Some(FeatureSlot::Token { block, token }) => format!("{block}:{token}"),
            Some(FeatureSlot::Component { block, component }) => format!("{block}:{component}"),
            None => format!("f{index}"),
        }
    }
}

/// Dense fused vector tied to its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Arc<FeatureLayout>,
}

fn check_bag(bag: &BagOfTokens, block: Block, layout: &FeatureLayout) -> Result<()> {
    let width = layout.width(block);
    match bag.0.keys().next_back() {
        Some(&max) if max >= width => Err(EmbedError::Width { block, expected: width, got: max + 1 }),
        _ => Ok(()),
    }
}

fn check_dense(v: &[f64], block: Block, layout: &FeatureLayout) -> Result<()> {
    let width = layout.width(block);
    if v.len() != width {
        return Err(EmbedError::Width { block, expected: width, got: v.len() });
    }
    Ok(())
}

/// Concatenates the four blocks in layout order. Bags become raw counts,
/// embeddings are copied unchanged.
pub fn fuse_features(
    title_bag: &BagOfTokens,
    description_bag: &BagOfTokens,
    title_embedding: &[f64],
    description_embedding: &[f64],
    layout: &Arc<FeatureLayout>,
) -> Result<FeatureVector> {
    check_bag(title_bag, Block::TitleBag, layout)?;
    check_bag(description_bag, Block::DescriptionBag, layout)?;
    check_dense(title_embedding, Block::TitleEmbedding, layout)?;
    check_dense(description_embedding, Block::DescriptionEmbedding, layout)?;

    let mut values = vec![0.0; layout.total()];
    for (bag, block) in [(title_bag, Block::TitleBag), (description_bag, Block::DescriptionBag)] {
        let off = layout.offset(block);
        for (i, c) in bag.iter() {
            values[off + i] = c as f64;
        }
    }
    let off = layout.offset(Block::TitleEmbedding);
    values[off..off + title_embedding.len()].copy_from_slice(title_embedding);
    let off = layout.offset(Block::DescriptionEmbedding);
    values[off..off + description_embedding.len()].copy_from_slice(description_embedding);
    Ok(FeatureVector { values, layout: Arc::clone(layout) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn parses_minimal_file() {
        let m = parse_emb1("EMB1 2 3 toy model\na 1 2 3\nb 0.5 -1 1e-3\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.dim(), 3);
        assert_eq!(m.model_name(), "toy model");
        assert_eq!(m.row(1), &[0.5, -1.0, 1e-3]);
    }

    #[test]
    fn row_count_mismatch_is_an_error() {
        assert!(matches!(
            parse_emb1("EMB1 3 1 m\na 1\nb 2\n"),
            Err(EmbedError::RowCount { declared: 3, found: 2 })
        ));
        assert!(matches!(parse_emb1("EMB1 1 1 m\na 1\nb 2\n"), Err(EmbedError::RowCount { .. })));
    }

    #[test]
    fn bad_rows_name_the_row() {
        match parse_emb1("EMB1 2 2 m\na 1 2\nb 1 NaN\n") {
            Err(EmbedError::Row { row: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_emb1("EMB1 2 1 m\na 1\na 2\n"), Err(EmbedError::Row { row: 2, .. })));
        assert!(matches!(parse_emb1("EMB1 1 2 m\na 1\n"), Err(EmbedError::Row { row: 1, .. })));
        assert!(matches!(parse_emb1("EMB2 1 2 m\n"), Err(EmbedError::Header(_))));
        assert!(matches!(parse_emb1("EMB1 1 0 m\n"), Err(EmbedError::ZeroDim)));
    }

    #[test]
    fn hash_embed_basics() {
        assert_eq!(hash_embed(&[], 8, 1), vec![0.0; 8]);
        let toks: Vec<String> = ["model", "moc", "model"].iter().map(|s| s.to_string()).collect();
        let v = hash_embed(&toks, 16, 1);
        assert!((crate::linalg::l2_norm(&v) - 1.0).abs() < 1e-9);
        assert!((cosine(&v, &hash_embed(&toks, 16, 1)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn layout_offsets() {
        let layout = FeatureLayout::from_widths(2, 2, 3, 3);
        assert_eq!(layout.total(), 10);
        let offsets: Vec<usize> = Block::ALL.iter().map(|&b| layout.offset(b)).collect();
        assert_eq!(offsets, vec![0, 2, 4, 7]);
        assert_eq!(layout.describe(5), Some(FeatureSlot::Component { block: Block::TitleEmbedding, component: 1 }));
        assert_eq!(layout.describe(10), None);
    }

    #[test]
    fn fuse_zero_inputs_and_width_errors() {
        let layout = Arc::new(FeatureLayout::from_widths(2, 2, 3, 3));
        let empty = BagOfTokens::default();
        let v = fuse_features(&empty, &empty, &[0.0; 3], &[0.0; 3], &layout).unwrap();
        assert_eq!(v.values, vec![0.0; 10]);

        let wide = BagOfTokens(BTreeMap::from([(2, 1)]));
        match fuse_features(&empty, &wide, &[0.0; 3], &[0.0; 3], &layout) {
            Err(EmbedError::Width { block: Block::DescriptionBag, .. }) => {}
            other => panic!("{other:?}"),
        }
        match fuse_features(&empty, &empty, &[0.0; 2], &[0.0; 3], &layout) {
            Err(EmbedError::Width { block: Block::TitleEmbedding, expected: 3, got: 2 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn matrix_constructor_checks_invariants() {
        assert!(EmbeddingMatrix::new(vec!["a".into()], 1, vec![f64::INFINITY], "m").is_err());
        assert!(EmbeddingMatrix::new(vec!["a".into(), "a".into()], 1, vec![1.0, 2.0], "m").is_err());
        assert!(EmbeddingMatrix::new(vec!["a".into()], 2, vec![1.0], "m").is_err());
        let m = EmbeddingMatrix::new(vec!["a b".into()], 1, vec![1.0], "m").unwrap();
        assert!(matches!(write_emb1(&m), Err(EmbedError::BadId(_))));
    }
}
