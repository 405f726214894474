//! Synthetic manifests with clear categories at the two ends of the
//! "mask evidence" axis and ambiguous categories in between.
//!
//! Random numbers come from ChaCha8 (`rand_chacha`) with one stream per
//! (split, category), and normals from the ziggurat sampler of `rand_distr`.
//! The algorithm name is pinned in the config's `rng` field.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Manifest, Polarity, Sample, Split, Taxonomy};

pub const RNG_ALGORITHM: &str = "chacha8-ziggurat";

/// Stream offset separating test draws from train draws.
const TEST_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryGeometry {
    pub category: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl CategoryGeometry {
    pub fn new(category: &str, mean: &[f64], std: &[f64]) -> Self {
        CategoryGeometry {
            category: category.to_owned(),
            mean: mean.to_vec(),
            std: std.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_rng")]
    pub rng: String,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "Taxonomy::mask")]
    pub taxonomy: Taxonomy,
    #[serde(default = "default_counts")]
    pub counts: BTreeMap<String, usize>,
    #[serde(default = "default_geometries")]
    pub geometries: Vec<CategoryGeometry>,
    #[serde(default = "default_test_counts")]
    pub test_counts: BTreeMap<String, usize>,
    #[serde(default = "default_test_std_multiplier")]
    pub test_std_multiplier: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_rng() -> String {
    RNG_ALGORITHM.to_owned()
}

fn default_feature_dim() -> usize {
    2
}

fn default_test_std_multiplier() -> f64 {
    1.5
}

fn default_counts() -> BTreeMap<String, usize> {
    [
        ("clear_positive", 3384),
        ("clear_negative", 3465),
        ("irregular_wearing", 587),
        ("low_quality", 2319),
        ("mask_like_occlusion", 375),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_owned(), v))
    .collect()
}

fn default_test_counts() -> BTreeMap<String, usize> {
    [("clear_positive", 500), ("clear_negative", 500)]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect()
}

/// Coordinate 0 is mask evidence (negative = no mask), coordinate 1 is
/// observability.
fn default_geometries() -> Vec<CategoryGeometry> {
    vec![
        CategoryGeometry::new("clear_positive", &[-2.0, 1.5], &[0.5, 0.5]),
        CategoryGeometry::new("clear_negative", &[2.0, 1.5], &[0.5, 0.5]),
        CategoryGeometry::new("irregular_wearing", &[1.0, 1.5], &[0.4, 0.5]),
        CategoryGeometry::new("low_quality", &[0.0, -1.5], &[1.0, 0.5]),
        CategoryGeometry::new("mask_like_occlusion", &[-1.0, 1.5], &[0.4, 0.5]),
    ]
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rng: default_rng(),
            feature_dim: default_feature_dim(),
            taxonomy: Taxonomy::mask(),
            counts: default_counts(),
            geometries: default_geometries(),
            test_counts: default_test_counts(),
            test_std_multiplier: default_test_std_multiplier(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SynthConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rng != RNG_ALGORITHM {
            return Err(Error::invalid(format!(
                "unsupported rng `{}` (expected `{RNG_ALGORITHM}`)",
                self.rng
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::invalid("feature_dim must be positive"));
        }
        let names: Vec<&str> = self
            .taxonomy
            .categories()
            .iter()
            .map(|c| c.name.as_str())
            .collect();
        let mut count_keys: Vec<&str> = self.counts.keys().map(String::as_str).collect();
        let mut sorted_names = names.clone();
        sorted_names.sort_unstable();
        count_keys.sort_unstable();
        if count_keys != sorted_names {
            return Err(Error::invalid(format!(
                "counts keys {count_keys:?} do not match taxonomy {sorted_names:?}"
            )));
        }
        for name in &names {
            let matching = self
                .geometries
                .iter()
                .filter(|g| g.category == *name)
                .count();
            if matching != 1 {
                return Err(Error::invalid(format!(
                    "expected exactly one geometry for `{name}`, found {matching}"
                )));
            }
        }
        for g in &self.geometries {
            if !names.contains(&g.category.as_str()) {
                return Err(Error::invalid(format!(
                    "geometry for unknown category `{}`",
                    g.category
                )));
            }
            if g.mean.len() != self.feature_dim || g.std.len() != self.feature_dim {
                return Err(Error::invalid(format!(
                    "geometry `{}` has dimension mismatch with feature_dim {}",
                    g.category, self.feature_dim
                )));
            }
            if g.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::invalid(format!(
                    "geometry `{}` has non-finite mean",
                    g.category
                )));
            }
            if g.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                return Err(Error::invalid(format!(
                    "geometry `{}` std entries must be finite and > 0",
                    g.category
                )));
            }
        }
        let mut test_keys: Vec<&str> = self.test_counts.keys().map(String::as_str).collect();
        let mut clear = vec![
            self.taxonomy.clear(Polarity::Positive).name.as_str(),
            self.taxonomy.clear(Polarity::Negative).name.as_str(),
        ];
        test_keys.sort_unstable();
        clear.sort_unstable();
        if test_keys != clear {
            return Err(Error::invalid(format!(
                "test_counts keys {test_keys:?} must be exactly the clear categories {clear:?}"
            )));
        }
        if !(self.test_std_multiplier.is_finite() && self.test_std_multiplier >= 1.0) {
            return Err(Error::invalid(
                "test_std_multiplier must be finite and >= 1",
            ));
        }
        Ok(())
    }

    fn geometry(&self, category: &str) -> &CategoryGeometry {
        self.geometries
            .iter()
            .find(|g| g.category == category)
            .expect("validated config has a geometry per category")
    }
}

/// Rounds to 9 significant decimal digits so manifests stay compact.
pub fn round_significant(x: f64) -> f64 {
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn draw(rng: &mut ChaCha8Rng, geometry: &CategoryGeometry, std_scale: f64) -> Vec<f64> {
    geometry
        .mean
        .iter()
        .zip(&geometry.std)
        .map(|(m, s)| {
            let z: f64 = StandardNormal.sample(rng);
            round_significant(m + s * std_scale * z)
        })
        .collect()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Training split at exactly `config.counts` per category, in taxonomy order.
pub fn generate_train(config: &SynthConfig) -> Result<Manifest> {
    config.validate()?;
    let mut manifest = Manifest::new(config.taxonomy.clone(), Split::Train, config.feature_dim);
    let total: usize = config.counts.values().sum();
    manifest.samples.reserve(total);
    for (ci, cat) in config.taxonomy.categories().iter().enumerate() {
        let n = config.counts[&cat.name];
        let geometry = config.geometry(&cat.name);
        let mut rng = stream_rng(config.seed, ci as u64);
        for k in 0..n {
            let fallback_label = match (cat.kind.polarity(), cat.default_fallback) {
                (Some(p), _) => p,
                (None, Some(fb)) => fb,
                // Undeclared polarity: alternate by index, even → POSITIVE.
                (None, None) if k % 2 == 0 => Polarity::Positive,
                (None, None) => Polarity::Negative,
            };
            let id = format!("train-{:06}", manifest.samples.len());
            manifest.samples.push(Sample {
                id,
                features: draw(&mut rng, geometry, 1.0),
                category: cat.name.clone(),
                fallback_label,
                asset_ref: None,
            });
        }
    }
    Ok(manifest)
}

/// Clear-only test split with widened spread, ids disjoint from the train split.
pub fn generate_test(config: &SynthConfig) -> Result<Manifest> {
    config.validate()?;
    let mut manifest = Manifest::new(config.taxonomy.clone(), Split::Test, config.feature_dim);
    for (ci, cat) in config.taxonomy.categories().iter().enumerate() {
        let Some(polarity) = cat.kind.polarity() else {
            continue;
        };
        let n = config.test_counts[&cat.name];
        let geometry = config.geometry(&cat.name);
        let mut rng = stream_rng(config.seed, TEST_STREAM_BASE + ci as u64);
        for _ in 0..n {
            let id = format!("test-{:06}", manifest.samples.len());
            manifest.samples.push(Sample {
                id,
                features: draw(&mut rng, geometry, config.test_std_multiplier),
                category: cat.name.clone(),
                fallback_label: polarity,
                asset_ref: None,
            });
        }
    }
    Ok(manifest)
}
