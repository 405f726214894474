//! Sample/taxonomy data model and the JSONL manifest format.
//!
//! A manifest file is JSON Lines. Line 1 is a header object:
//!
//! ```text
//! {"version":1,"split":"train","feature_dim":2,"taxonomy":[{"name":...,"kind":...,"default_fallback":...,"abbrev":...}]}
//! ```
//!
//! and each following line is one sample:
//!
//! ```text
//! {"id":"train-000001","features":[-1.9,1.4],"category":"clear_positive","fallback_label":"POSITIVE"}
//! ```
//!
//! Key order is fixed by declaration order and floats are written with the
//! shortest representation that parses back to the same `f64`, so saving is
//! byte-deterministic and `load(save(m)) == m`.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

/// Binary label of a sample: the alarm-worthy class or the benign one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "POSITIVE",
            Polarity::Negative => "NEGATIVE",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CategoryKind {
    ClearPositive,
    ClearNegative,
    Ambiguous,
}

impl CategoryKind {
    /// Ground-truth polarity of a clear category; `None` for ambiguous ones.
    pub fn polarity(self) -> Option<Polarity> {
        match self {
            CategoryKind::ClearPositive => Some(Polarity::Positive),
            CategoryKind::ClearNegative => Some(Polarity::Negative),
            CategoryKind::Ambiguous => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineCategory {
    pub name: String,
    pub kind: CategoryKind,
    #[serde(default)]
    pub default_fallback: Option<Polarity>,
    /// Short label used in design names, e.g. `IW`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abbrev: Option<String>,
}

impl FineCategory {
    pub fn clear(name: &str, polarity: Polarity) -> Self {
        let kind = match polarity {
            Polarity::Positive => CategoryKind::ClearPositive,
            Polarity::Negative => CategoryKind::ClearNegative,
        };
        FineCategory {
            name: name.to_owned(),
            kind,
            default_fallback: None,
            abbrev: None,
        }
    }

    pub fn ambiguous(name: &str, abbrev: &str, fallback: Option<Polarity>) -> Self {
        FineCategory {
            name: name.to_owned(),
            kind: CategoryKind::Ambiguous,
            default_fallback: fallback,
            abbrev: Some(abbrev.to_owned()),
        }
    }

    pub fn abbreviation(&self) -> &str {
        self.abbrev.as_deref().unwrap_or(&self.name)
    }

    pub fn is_ambiguous(&self) -> bool {
        self.kind == CategoryKind::Ambiguous
    }
}

/// Ordered list of fine categories with exactly one clear category per polarity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FineCategory>", into = "Vec<FineCategory>")]
pub struct Taxonomy {
    categories: Vec<FineCategory>,
}

impl Taxonomy {
    pub fn new(categories: Vec<FineCategory>) -> Result<Self> {
        let mut names = HashSet::new();
        let mut abbrevs = HashSet::new();
        for c in &categories {
            if c.name.is_empty() {
                return Err(Error::invalid("taxonomy category with empty name"));
            }
            if !names.insert(c.name.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate taxonomy category `{}`",
                    c.name
                )));
            }
            if c.is_ambiguous() && !abbrevs.insert(c.abbreviation()) {
                return Err(Error::invalid(format!(
                    "duplicate category abbreviation `{}`",
                    c.abbreviation()
                )));
            }
            if let (Some(p), Some(fb)) = (c.kind.polarity(), c.default_fallback) {
                if p != fb {
                    return Err(Error::invalid(format!(
                        "clear category `{}` declares fallback {fb} against its own polarity",
                        c.name
                    )));
                }
            }
        }
        for kind in [CategoryKind::ClearPositive, CategoryKind::ClearNegative] {
            let n = categories.iter().filter(|c| c.kind == kind).count();
            if n != 1 {
                return Err(Error::invalid(format!(
                    "taxonomy must have exactly one {kind:?} category, found {n}"
                )));
            }
        }
        Ok(Taxonomy { categories })
    }

    /// The mask-wearing taxonomy: clear positive (no mask), clear negative
    /// (mask worn) and the three ambiguity subsets IW, LQ and MLO.
    pub fn mask() -> Self {
        Taxonomy::new(vec![
            FineCategory::clear("clear_positive", Polarity::Positive),
            FineCategory::clear("clear_negative", Polarity::Negative),
            FineCategory::ambiguous("irregular_wearing", "IW", Some(Polarity::Positive)),
            // No single straightforward-design polarity; samples carry their own.
            FineCategory::ambiguous("low_quality", "LQ", None),
            FineCategory::ambiguous("mask_like_occlusion", "MLO", Some(Polarity::Negative)),
        ])
        .expect("mask taxonomy is valid")
    }

    pub fn categories(&self) -> &[FineCategory] {
        &self.categories
    }

    pub fn get(&self, name: &str) -> Option<&FineCategory> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.name == name)
    }

    /// Looks a category up by name, falling back to its abbreviation.
    pub fn resolve(&self, name_or_abbrev: &str) -> Option<&FineCategory> {
        self.get(name_or_abbrev).or_else(|| {
            self.categories
                .iter()
                .find(|c| c.abbrev.as_deref() == Some(name_or_abbrev))
        })
    }

    pub fn ambiguous(&self) -> impl Iterator<Item = &FineCategory> {
        self.categories.iter().filter(|c| c.is_ambiguous())
    }

    pub fn clear(&self, polarity: Polarity) -> &FineCategory {
        self.categories
            .iter()
            .find(|c| c.kind.polarity() == Some(polarity))
            .expect("validated taxonomy has both clear categories")
    }
}

impl TryFrom<Vec<FineCategory>> for Taxonomy {
    type Error = Error;

    fn try_from(v: Vec<FineCategory>) -> Result<Self> {
        Taxonomy::new(v)
    }
}

impl From<Taxonomy> for Vec<FineCategory> {
    fn from(t: Taxonomy) -> Self {
        t.categories
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    pub category: String,
    pub fallback_label: Polarity,
    /// Opaque pointer to an external asset (e.g. an image path); never interpreted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_ref: Option<String>,
}

/// On-disk sample: identical to [`Sample`] except the fallback may be absent
/// (allowed for clear categories only).
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    id: String,
    features: Vec<f64>,
    category: String,
    #[serde(default)]
    fallback_label: Option<Polarity>,
    #[serde(default)]
    asset_ref: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    split: Split,
    feature_dim: usize,
    taxonomy: Taxonomy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub taxonomy: Taxonomy,
    pub samples: Vec<Sample>,
    pub split: Split,
    pub feature_dim: usize,
}

impl Manifest {
    pub fn new(taxonomy: Taxonomy, split: Split, feature_dim: usize) -> Self {
        Manifest {
            taxonomy,
            samples: Vec::new(),
            split,
            feature_dim,
        }
    }

    /// Checks every manifest invariant, reporting the first offending sample.
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::invalid("feature_dim must be positive"));
        }
        let mut ids = HashSet::with_capacity(self.samples.len());
        for s in &self.samples {
            self.check_sample(s)?;
            if !ids.insert(s.id.as_str()) {
                return Err(sample_err(&s.id, "duplicate id"));
            }
        }
        Ok(())
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        let cat = self
            .taxonomy
            .get(&s.category)
            .ok_or_else(|| sample_err(&s.id, format!("unknown category `{}`", s.category)))?;
        if s.features.len() != self.feature_dim {
            return Err(sample_err(
                &s.id,
                format!(
                    "feature dimension {} does not match feature_dim {}",
                    s.features.len(),
                    self.feature_dim
                ),
            ));
        }
        if let Some(j) = s.features.iter().position(|x| !x.is_finite()) {
            return Err(sample_err(
                &s.id,
                format!("non-finite feature at index {j}"),
            ));
        }
        if let Some(p) = cat.kind.polarity() {
            if s.fallback_label != p {
                return Err(sample_err(
                    &s.id,
                    format!(
                        "fallback_label {} contradicts clear category polarity {p}",
                        s.fallback_label
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Per-category sample counts in taxonomy order, zeros included.
    pub fn summarize(&self) -> CategoryCounts {
        let mut counts: Vec<(String, usize)> = self
            .taxonomy
            .categories()
            .iter()
            .map(|c| (c.name.clone(), 0))
            .collect();
        for s in &self.samples {
            if let Some(i) = self.taxonomy.position(&s.category) {
                counts[i].1 += 1;
            }
        }
        CategoryCounts(counts)
    }

    /// Serializes the manifest to its JSONL text. Fails on invalid manifests.
    pub fn to_jsonl(&self) -> Result<String> {
        self.validate()?;
        let header = Header {
            version: MANIFEST_VERSION,
            split: self.split,
            feature_dim: self.feature_dim,
            taxonomy: self.taxonomy.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header: Header = loop {
            match lines.next() {
                None => {
                    return Err(Error::Parse {
                        line: 1,
                        message: "missing header line".into(),
                    })
                }
                Some((i, line)) => {
                    let line = line.map_err(|e| Error::io("<input>", e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e))?;
                }
            }
        };
        if header.version != MANIFEST_VERSION {
            return Err(Error::invalid(format!(
                "unsupported manifest version {}",
                header.version
            )));
        }
        let mut manifest = Manifest::new(header.taxonomy, header.split, header.feature_dim);
        for (i, line) in lines {
            let line = line.map_err(|e| Error::io("<input>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawSample = serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e))?;
            let cat = manifest.taxonomy.get(&raw.category).ok_or_else(|| {
                sample_err(&raw.id, format!("unknown category `{}`", raw.category))
            })?;
            let fallback_label = match (raw.fallback_label, cat.kind.polarity()) {
                (Some(fb), _) => fb,
                (None, Some(p)) => p,
                (None, None) => {
                    return Err(sample_err(
                        &raw.id,
                        "ambiguous-category sample is missing fallback_label",
                    ))
                }
            };
            manifest.samples.push(Sample {
                id: raw.id,
                features: raw.features,
                category: raw.category,
                fallback_label,
                asset_ref: raw.asset_ref,
            });
        }
        manifest.validate()?;
        Ok(manifest)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Manifest::from_reader(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Validates and writes `manifest`; nothing is written if validation fails.
pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = manifest.to_jsonl()?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn summarize(manifest: &Manifest) -> CategoryCounts {
    manifest.summarize()
}

/// Category name → count, ordered as in the taxonomy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryCounts(pub Vec<(String, usize)>);

impl CategoryCounts {
    pub fn get(&self, name: &str) -> Option<usize> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, c)| *c)
    }

    pub fn total(&self) -> usize {
        self.0.iter().map(|(_, c)| c).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.0.iter().map(|(n, c)| (n.as_str(), *c))
    }
}

impl Serialize for CategoryCounts {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (name, count) in &self.0 {
            map.serialize_entry(name, count)?;
        }
        map.end()
    }
}

fn sample_err(id: &str, reason: impl Into<String>) -> Error {
    Error::InvalidSample {
        id: id.to_owned(),
        reason: reason.into(),
    }
}

fn parse_err(line: usize, e: impl fmt::Display) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
