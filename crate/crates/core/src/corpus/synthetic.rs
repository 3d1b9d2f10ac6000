//! A synthetic attribute world for end-to-end runs without real models.
//!
//! Every item has one value per attribute. The caption reveals the first
//! `caption_attributes` values; each scripted round asks about one more. Image
//! embeddings are hashed bags of the item's value words, built with the same
//! hashing as [`HashEmbedder`], so dialog text that names more of the target's
//! values scores the target higher.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, DialogExample};
use crate::backends::HashEmbedder;
use crate::dialog::{Dialog, Round, DEFAULT_MAX_ROUNDS};

const NAMES: [&str; 10] = ["color", "shape", "material", "size", "texture", "pattern", "place", "season", "mood", "style"];

const WORDS: [&[&str]; 6] = [
    &["red", "green", "blue", "yellow", "black", "white", "orange", "purple", "pink", "brown", "gray", "teal"],
    &["round", "square", "oval", "triangular", "flat", "tall", "curved", "pointed", "spiral", "boxy", "conical", "hexagonal"],
    &["wooden", "metal", "plastic", "glass", "stone", "paper", "cloth", "leather", "rubber", "ceramic", "wicker", "concrete"],
    &["tiny", "small", "medium", "large", "huge", "giant", "miniature", "compact", "bulky", "slim", "wide", "narrow"],
    &["smooth", "rough", "furry", "shiny", "matte", "bumpy", "silky", "grainy", "glossy", "fuzzy", "scaly", "ridged"],
    &["striped", "dotted", "checkered", "plain", "floral", "plaid", "zigzag", "marbled", "speckled", "paisley", "camo", "swirled"],
];

/// Caption prefix shared by every item.
pub const CAPTION_PREFIX: &str = "a photo of something";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_items: usize,
    pub n_attributes: usize,
    pub attribute_vocab_size: usize,
    /// How many attribute values the caption reveals.
    pub caption_attributes: usize,
    /// Dimension of the generated image embeddings.
    #[serde(default = "default_dim")]
    pub embedding_dim: usize,
    /// Seed of the token hashing; queries must be embedded with the same seed.
    #[serde(default)]
    pub embedder_seed: u64,
    /// Draw attribute tuples without replacement.
    #[serde(default = "default_true")]
    pub unique_tuples: bool,
}

fn default_dim() -> usize {
    256
}

fn default_true() -> bool {
    true
}

impl SyntheticSpec {
    pub fn new(n_items: usize, n_attributes: usize, attribute_vocab_size: usize, caption_attributes: usize) -> Self {
        Self {
            n_items,
            n_attributes,
            attribute_vocab_size,
            caption_attributes,
            embedding_dim: default_dim(),
            embedder_seed: 0,
            unique_tuples: true,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidSpec(m));
        if self.n_items == 0 || self.n_attributes == 0 || self.attribute_vocab_size == 0 || self.embedding_dim == 0 {
            return bad("n_items, n_attributes, attribute_vocab_size and embedding_dim must be positive".into());
        }
        if self.caption_attributes > self.n_attributes {
            return bad(format!("caption_attributes {} > n_attributes {}", self.caption_attributes, self.n_attributes));
        }
        if self.unique_tuples {
            let space = (self.attribute_vocab_size as u128).checked_pow(self.n_attributes as u32);
            if space.is_some_and(|s| s < self.n_items as u128) {
                return bad(format!(
                    "{} items cannot have unique tuples over {}^{} combinations",
                    self.n_items, self.attribute_vocab_size, self.n_attributes
                ));
            }
        }
        Ok(())
    }
}

/// Attribute names and each item's values, in item order.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    names: Vec<String>,
    name_index: HashMap<String, usize>,
    items: Vec<(String, Vec<String>)>,
    item_index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct TableFile {
    attributes: Vec<String>,
    items: Vec<ItemRow>,
}

#[derive(Serialize, Deserialize)]
struct ItemRow {
    id: String,
    values: Vec<String>,
}

impl AttributeTable {
    pub fn new(names: Vec<String>, items: Vec<(String, Vec<String>)>) -> Result<Self, CorpusError> {
        let name_index: HashMap<_, _> = names.iter().enumerate().map(|(i, n)| (n.to_lowercase(), i)).collect();
        if name_index.len() != names.len() {
            return Err(CorpusError::InvalidSpec("duplicate attribute name".into()));
        }
        let mut item_index = HashMap::with_capacity(items.len());
        for (i, (id, values)) in items.iter().enumerate() {
            if values.len() != names.len() {
                return Err(CorpusError::InvalidSpec(format!("item {id:?} has {} values for {} attributes", values.len(), names.len())));
            }
            if item_index.insert(id.clone(), i).is_some() {
                return Err(CorpusError::InvalidSpec(format!("duplicate item id {id:?}")));
            }
        }
        Ok(Self { names, name_index, items, item_index })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Position of the attribute with this (lower-case) name.
    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.name_index.get(name).copied()
    }

    pub fn row(&self, id: &str) -> Option<&[String]> {
        self.item_index.get(id).map(|&i| self.items[i].1.as_slice())
    }

    pub fn items(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.items.iter().map(|(id, v)| (id.as_str(), v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = TableFile {
            attributes: self.names.clone(),
            items: self.items.iter().map(|(id, values)| ItemRow { id: id.clone(), values: values.clone() }).collect(),
        };
        serde_json::to_string(&file).expect("table serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        std::fs::write(path, self.to_json()).map_err(CorpusError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(CorpusError::io(path))?;
        let file: TableFile = serde_json::from_str(&text)
            .map_err(|e| CorpusError::Parse { path: path.display().to_string(), message: e.to_string() })?;
        Self::new(file.attributes, file.items.into_iter().map(|r| (r.id, r.values)).collect())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub ids: Vec<String>,
    /// Row-major `ids.len() * dim` image embeddings.
    pub vectors: Vec<f32>,
    pub dim: usize,
    /// Scripted dialogs, one round per attribute the caption leaves out.
    pub examples: Vec<DialogExample>,
    pub table: AttributeTable,
}

impl SyntheticCorpus {
    /// Attribute names in the order the scripted dialogs ask about them:
    /// the ones hidden from the caption first.
    pub fn question_order(&self, caption_attributes: usize) -> Vec<String> {
        let names = self.table.names();
        names[caption_attributes..].iter().chain(&names[..caption_attributes]).cloned().collect()
    }
}

fn attribute_name(a: usize) -> String {
    NAMES.get(a).map(|s| (*s).to_owned()).unwrap_or_else(|| format!("attribute{a}"))
}

fn value_word(a: usize, v: usize) -> String {
    match WORDS.get(a).and_then(|w| w.get(v)) {
        Some(w) => (*w).to_owned(),
        None => format!("{}{v}", attribute_name(a)),
    }
}

/// Asks about attribute `name` the same way the template questioner does.
pub fn attribute_question(name: &str) -> String {
    format!("what {name} is it?")
}

fn draw_tuples(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let (n, a, v) = (spec.n_items, spec.n_attributes, spec.attribute_vocab_size);
    let decode = |mut code: u128| -> Vec<usize> {
        (0..a)
            .map(|_| {
                let d = (code % v as u128) as usize;
                code /= v as u128;
                d
            })
            .collect()
    };
    if !spec.unique_tuples {
        return (0..n).map(|_| (0..a).map(|_| rng.random_range(0..v)).collect()).collect();
    }
    let space = (v as u128).checked_pow(a as u32);
    match space {
        // Small spaces: shuffle the enumeration and take a prefix.
        Some(s) if s <= 4 * n as u128 => {
            let mut codes: Vec<u128> = (0..s).collect();
            codes.shuffle(rng);
            codes.into_iter().take(n).map(decode).collect()
        }
        _ => {
            let mut seen = HashSet::with_capacity(n);
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let t: Vec<usize> = (0..a).map(|_| rng.random_range(0..v)).collect();
                if seen.insert(t.clone()) {
                    out.push(t);
                }
            }
            out
        }
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticCorpus, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tuples = draw_tuples(spec, &mut rng);
    let names: Vec<String> = (0..spec.n_attributes).map(attribute_name).collect();
    let width = spec.n_items.saturating_sub(1).to_string().len();
    let embedder = HashEmbedder::new(spec.embedding_dim, spec.embedder_seed)
        .map_err(|e| CorpusError::InvalidSpec(e.to_string()))?;
    let c = spec.caption_attributes;

    let mut ids = Vec::with_capacity(spec.n_items);
    let mut vectors = Vec::with_capacity(spec.n_items * spec.embedding_dim);
    let mut examples = Vec::with_capacity(spec.n_items);
    let mut rows = Vec::with_capacity(spec.n_items);
    for (i, tuple) in tuples.iter().enumerate() {
        let id = format!("item-{i:0width$}");
        let values: Vec<String> = tuple.iter().enumerate().map(|(a, &v)| value_word(a, v)).collect();
        let image = embedder.embed_text(&values.join(" ")).expect("values are non-empty");
        vectors.extend_from_slice(&image);

        let mut caption = CAPTION_PREFIX.to_owned();
        for v in &values[..c] {
            caption.push(' ');
            caption.push_str(v);
        }
        let rounds = (c..spec.n_attributes)
            .take(DEFAULT_MAX_ROUNDS)
            .map(|a| Round::new(attribute_question(&names[a]), values[a].clone()))
            .collect();
        examples.push(DialogExample::new(id.clone(), Dialog::with_rounds(caption, rounds)));
        rows.push((id.clone(), values));
        ids.push(id);
    }
    let table = AttributeTable::new(names, rows)?;
    Ok(SyntheticCorpus { ids, vectors, dim: spec.embedding_dim, examples, table })
}
