//! Category texts and their embedding rows.
//!
//! Each event carries exactly three category texts (the analyzer
//! pipeline's output contract). An encoder turns them into the K×d_h
//! content matrix: either a platform-stable hashed n-gram bag or a
//! file-backed lookup of externally computed vectors. A trainable
//! linear adapter sits on top; freezing it is the `no_finetune`
//! ablation.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::graph::{Graph, NodeId};
use crate::numerics::rng::fnv1a64;
use crate::numerics::Tensor;

pub const K_CATEGORIES: usize = 3;
pub const CATEGORY_KEYS: [&str; K_CATEGORIES] =
    ["event_info", "public_reactions", "traffic_conditions"];

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryTexts {
    pub event_info: String,
    pub public_reactions: String,
    pub traffic_conditions: String,
}

impl CategoryTexts {
    pub fn as_array(&self) -> [&str; K_CATEGORIES] {
        [
            &self.event_info,
            &self.public_reactions,
            &self.traffic_conditions,
        ]
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        match key {
            "event_info" => Some(&self.event_info),
            "public_reactions" => Some(&self.public_reactions),
            "traffic_conditions" => Some(&self.traffic_conditions),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextContext {
    pub event_id: String,
    pub category_texts: CategoryTexts,
}

#[derive(Clone, Debug)]
pub enum EncoderKind {
    /// Bag of hashed word n-grams folded into d_h signed buckets,
    /// L2-normalized. `ngram_max` is 1 or 2.
    HashNgram { ngram_max: usize },
    /// Lookup of (event_id, category) -> vector, e.g. real transformer
    /// sentence vectors loaded from embeddings.jsonl.
    FileBacked {
        table: BTreeMap<(String, String), Vec<f64>>,
    },
}

#[derive(Clone, Debug)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub d_h: usize,
    pub adapter_enabled: bool,
}

impl EncoderSpec {
    pub fn hash(d_h: usize) -> Self {
        EncoderSpec {
            kind: EncoderKind::HashNgram { ngram_max: 2 },
            d_h,
            adapter_enabled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_h < 4 {
            return Err(Error::Validation(format!(
                "encoder d_h must be >= 4, got {}",
                self.d_h
            )));
        }
        if let EncoderKind::HashNgram { ngram_max } = self.kind {
            if !(1..=2).contains(&ngram_max) {
                return Err(Error::Validation(format!(
                    "ngram_max must be 1 or 2, got {ngram_max}"
                )));
            }
        }
        if let EncoderKind::FileBacked { table } = &self.kind {
            for ((ev, cat), v) in table {
                if v.len() != self.d_h {
                    return Err(Error::Validation(format!(
                        "file-backed vector for ({ev}, {cat}) has length {}, want {}",
                        v.len(),
                        self.d_h
                    )));
                }
            }
        }
        Ok(())
    }
}

fn tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Hash one text into a signed-bucket bag vector (L2-normalized unless
/// empty). Bucket is `fnv1a64(gram) mod d_h`, sign is bit 63.
pub fn hash_embed(text: &str, d_h: usize, ngram_max: usize) -> Vec<f64> {
    let toks = tokens(text);
    let mut acc = vec![0.0; d_h];
    let mut fold = |gram: &str| {
        let h = fnv1a64(gram.as_bytes());
        let bucket = (h % d_h as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        acc[bucket] += sign;
    };
    for t in &toks {
        fold(t);
    }
    if ngram_max >= 2 {
        for pair in toks.windows(2) {
            fold(&format!("{} {}", pair[0], pair[1]));
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in &mut acc {
            *v /= norm;
        }
    }
    acc
}

/// Encode the three category texts into the raw K×d_h content matrix
/// (rows in [`CATEGORY_KEYS`] order, adapter not applied).
pub fn encode_categories(ctx: &TextContext, spec: &EncoderSpec) -> Result<Tensor> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(K_CATEGORIES);
    for (key, text) in CATEGORY_KEYS.iter().zip(ctx.category_texts.as_array()) {
        let row = match &spec.kind {
            EncoderKind::HashNgram { ngram_max } => hash_embed(text, spec.d_h, *ngram_max),
            EncoderKind::FileBacked { table } => table
                .get(&(ctx.event_id.clone(), key.to_string()))
                .cloned()
                .ok_or_else(|| Error::MissingEmbedding {
                    event_id: ctx.event_id.clone(),
                    category: key.to_string(),
                })?,
        };
        rows.push(row);
    }
    Tensor::from_rows(&rows)
}

/// Adapter on the tape: `C = C_raw · W + b`. Gradients flow to the
/// adapter tensors whenever they are leaves of the same graph.
pub fn adapter_forward(
    graph: &mut Graph,
    c_raw: NodeId,
    weight: NodeId,
    bias: NodeId,
) -> Result<NodeId> {
    let projected = graph.matmul(c_raw, weight)?;
    graph.add_row_bias(projected, bias)
}

/// One line of embeddings.jsonl.
#[derive(Serialize, Deserialize)]
struct EmbeddingLine {
    event_id: String,
    category: String,
    vector: Vec<f64>,
}

pub fn load_embeddings_jsonl(path: &Path, d_h: usize) -> Result<EncoderSpec> {
    let lines: Vec<EmbeddingLine> = crate::datamodel::io::read_jsonl(path)?;
    let mut table = BTreeMap::new();
    for line in lines {
        table.insert((line.event_id, line.category), line.vector);
    }
    let spec = EncoderSpec {
        kind: EncoderKind::FileBacked { table },
        d_h,
        adapter_enabled: true,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn write_embeddings_jsonl(
    path: &Path,
    rows: &[(String, String, Vec<f64>)],
) -> Result<()> {
    let lines: Vec<EmbeddingLine> = rows
        .iter()
        .map(|(event_id, category, vector)| EmbeddingLine {
            event_id: event_id.clone(),
            category: category.clone(),
            vector: vector.clone(),
        })
        .collect();
    crate::datamodel::io::write_jsonl(path, &lines)
}
