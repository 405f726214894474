//! Partition engine: turns a training manifest plus a choice of extracted
//! ambiguity subsets into a concretely labeled dataset.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{Manifest, Polarity, Split, Taxonomy};

pub const POSITIVE: &str = "POSITIVE";
pub const NEGATIVE: &str = "NEGATIVE";
pub const UNCERTAIN: &str = "UNCERTAIN";

/// Class names in index order; two-class designs use the first two.
pub const CLASS_NAMES: [&str; 3] = [POSITIVE, NEGATIVE, UNCERTAIN];

pub fn class_index(p: Polarity) -> usize {
    match p {
        Polarity::Positive => 0,
        Polarity::Negative => 1,
    }
}

pub const UNCERTAIN_INDEX: usize = 2;

/// Which ambiguous categories go to the uncertain class.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub extract: Vec<String>,
}

impl DesignConfig {
    pub fn original() -> Self {
        DesignConfig::default()
    }

    /// Resolves names or abbreviations against `taxonomy`, rejecting clear
    /// or unknown categories. The result is deduplicated and in taxonomy order.
    pub fn resolve<S: AsRef<str>>(taxonomy: &Taxonomy, names: &[S]) -> Result<Self> {
        let mut positions = Vec::with_capacity(names.len());
        for n in names {
            let n = n.as_ref();
            let cat = taxonomy
                .resolve(n)
                .ok_or_else(|| Error::invalid(format!("unknown category `{n}` in design")))?;
            if !cat.is_ambiguous() {
                return Err(Error::invalid(format!(
                    "category `{}` is clear and cannot be extracted into the uncertain class",
                    cat.name
                )));
            }
            positions.push(taxonomy.position(&cat.name).expect("resolved"));
        }
        positions.sort_unstable();
        positions.dedup();
        Ok(DesignConfig {
            extract: positions
                .into_iter()
                .map(|i| taxonomy.categories()[i].name.clone())
                .collect(),
        })
    }

    /// Re-resolves this config against `taxonomy` (normalizing order and aliases).
    pub fn validated(&self, taxonomy: &Taxonomy) -> Result<Self> {
        DesignConfig::resolve(taxonomy, &self.extract)
    }

    pub fn is_original(&self) -> bool {
        self.extract.is_empty()
    }

    pub fn extracts(&self, category: &str) -> bool {
        self.extract.iter().any(|c| c == category)
    }
}

/// One labeled training record.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub features: Vec<f64>,
    pub class_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub records: Vec<LabeledRecord>,
    pub class_names: Vec<String>,
    /// Originating design; `None` when the dataset was read from CSV.
    pub provenance: Option<DesignConfig>,
}

impl LabeledDataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.features.len())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for r in &self.records {
            counts[r.class_index] += 1;
        }
        counts
    }

    /// Writes `x0,...,x{D-1},class_index,class_name` rows with a header line.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let dim = self.feature_dim();
        let mut header: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
        header.push("class_index".into());
        header.push("class_name".into());
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row: Vec<String> = r.features.iter().map(|x| x.to_string()).collect();
            row.push(r.class_index.to_string());
            row.push(self.class_names[r.class_index].clone());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    /// Reads the CSV export. The class count is inferred from the largest
    /// class index present (at least two).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers().map_err(csv_err)?.clone();
        let n = header.len();
        if n < 3 || &header[n - 2] != "class_index" || &header[n - 1] != "class_name" {
            return Err(Error::Parse {
                line: 1,
                message: "expected header `x0,...,class_index,class_name`".into(),
            });
        }
        let dim = n - 2;
        let mut records = Vec::new();
        let mut max_class = 1;
        for (i, row) in r.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(csv_err)?;
            let perr = |message: String| Error::Parse { line, message };
            let features = (0..dim)
                .map(|j| {
                    row[j]
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| perr(format!("bad feature `{}`", &row[j])))
                })
                .collect::<Result<Vec<f64>>>()?;
            let class_index: usize = row[dim]
                .parse()
                .map_err(|_| perr(format!("bad class_index `{}`", &row[dim])))?;
            if class_index >= CLASS_NAMES.len() || row[dim + 1] != *CLASS_NAMES[class_index] {
                return Err(perr(format!(
                    "class `{}` does not match index {class_index}",
                    &row[dim + 1]
                )));
            }
            max_class = max_class.max(class_index);
            records.push(LabeledRecord {
                features,
                class_index,
            });
        }
        Ok(LabeledDataset {
            records,
            class_names: CLASS_NAMES[..=max_class]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            provenance: None,
        })
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => return Error::io("<csv>", io),
            _ => unreachable!(),
        }
    }
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn apply_design(manifest: &Manifest, config: &DesignConfig) -> Result<LabeledDataset> {
    if manifest.split != Split::Train {
        return Err(Error::invalid("designs apply to train manifests only"));
    }
    let config = config.validated(&manifest.taxonomy)?;
    let k = if config.is_original() { 2 } else { 3 };
    let records = manifest
        .samples
        .iter()
        .map(|s| LabeledRecord {
            features: s.features.clone(),
            class_index: if config.extracts(&s.category) {
                UNCERTAIN_INDEX
            } else {
                class_index(s.fallback_label)
            },
        })
        .collect();
    Ok(LabeledDataset {
        records,
        class_names: CLASS_NAMES[..k].iter().map(|s| s.to_string()).collect(),
        provenance: Some(config),
    })
}

/// All subsets of the ambiguous categories, smallest first, then
/// lexicographic by taxonomy position within each size.
pub fn enumerate_designs(taxonomy: &Taxonomy) -> Vec<DesignConfig> {
    let ambiguous: Vec<&str> = taxonomy.ambiguous().map(|c| c.name.as_str()).collect();
    let k = ambiguous.len();
    let mut subsets: Vec<Vec<usize>> = (0u64..1 << k)
        .map(|mask| (0..k).filter(|i| mask & (1 << i) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets
        .into_iter()
        .map(|s| DesignConfig {
            extract: s.into_iter().map(|i| ambiguous[i].to_owned()).collect(),
        })
        .collect()
}

/// `Original`, or `Extract ` followed by abbreviations joined with `+`.
pub fn design_name(config: &DesignConfig, taxonomy: &Taxonomy) -> String {
    if config.is_original() {
        return "Original".to_owned();
    }
    let abbrevs: Vec<&str> = taxonomy
        .categories()
        .iter()
        .filter(|c| config.extracts(&c.name))
        .map(|c| c.abbreviation())
        .collect();
    format!("Extract {}", abbrevs.join("+"))
}

/// Table-style row label: singleton extractions get an ` only` suffix.
pub fn display_name(config: &DesignConfig, taxonomy: &Taxonomy) -> String {
    let name = design_name(config, taxonomy);
    if config.extract.len() == 1 {
        format!("{name} only")
    } else {
        name
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{FineCategory, Sample};
    use crate::synthgen::{generate_train, SynthConfig};

    fn default_train() -> Manifest {
        generate_train(&SynthConfig::default()).unwrap()
    }

    /// Independent tally straight from the manifest, no design code involved.
    fn brute_force_counts(m: &Manifest, extract: &[&str]) -> [usize; 3] {
        let mut c = [0; 3];
        for s in &m.samples {
            if extract.contains(&s.category.as_str()) {
                c[2] += 1;
            } else if s.fallback_label == Polarity::Positive {
                c[0] += 1;
            } else {
                c[1] += 1;
            }
        }
        c
    }

    #[test]
    fn original_design_counts() {
        let m = default_train();
        let d = apply_design(&m, &DesignConfig::original()).unwrap();
        assert_eq!(d.class_names, vec![POSITIVE, NEGATIVE]);
        assert_eq!(brute_force_counts(&m, &[]), [5131, 4999, 0]);
        assert_eq!(d.class_counts(), vec![3384 + 587 + 1160, 3465 + 375 + 1159]);
    }

    #[test]
    fn full_extraction_counts() {
        let m = default_train();
        let cfg = DesignConfig::resolve(&m.taxonomy, &["IW", "LQ", "MLO"]).unwrap();
        let d = apply_design(&m, &cfg).unwrap();
        assert_eq!(d.class_counts(), vec![3384, 3465, 587 + 2319 + 375]);
        assert_eq!(
            d.class_counts(),
            brute_force_counts(
                &m,
                &cfg.extract.iter().map(String::as_str).collect::<Vec<_>>()
            )
            .to_vec()
        );
    }

    #[test]
    fn mlo_only_moves_negatives_to_uncertain() {
        let m = default_train();
        let orig = apply_design(&m, &DesignConfig::original())
            .unwrap()
            .class_counts();
        let cfg = DesignConfig::resolve(&m.taxonomy, &["mask_like_occlusion"]).unwrap();
        let d = apply_design(&m, &cfg).unwrap().class_counts();
        assert_eq!(d, vec![orig[0], orig[1] - 375, 375]);
    }

    #[test]
    fn rejects_clear_and_unknown_categories() {
        let t = Taxonomy::mask();
        assert!(DesignConfig::resolve(&t, &["clear_positive"]).is_err());
        assert!(DesignConfig::resolve(&t, &["helmet"]).is_err());
        let bad = DesignConfig {
            extract: vec!["clear_negative".into()],
        };
        assert!(apply_design(&default_train(), &bad).is_err());
    }

    #[test]
    fn rejects_test_manifest() {
        let mut m = default_train();
        m.split = Split::Test;
        assert!(apply_design(&m, &DesignConfig::original()).is_err());
    }

    #[test]
    fn enumeration_order() {
        let t = Taxonomy::mask();
        let names: Vec<String> = enumerate_designs(&t)
            .iter()
            .map(|d| display_name(d, &t))
            .collect();
        assert_eq!(
            names,
            [
                "Original",
                "Extract IW only",
                "Extract LQ only",
                "Extract MLO only",
                "Extract IW+LQ",
                "Extract IW+MLO",
                "Extract LQ+MLO",
                "Extract IW+LQ+MLO"
            ]
        );

        let two = Taxonomy::new(vec![
            FineCategory::clear("p", Polarity::Positive),
            FineCategory::clear("n", Polarity::Negative),
            FineCategory::ambiguous("a", "A", None),
            FineCategory::ambiguous("b", "B", None),
        ])
        .unwrap();
        let got: Vec<Vec<String>> = enumerate_designs(&two)
            .into_iter()
            .map(|d| d.extract)
            .collect();
        assert_eq!(
            got,
            vec![
                vec![],
                vec!["a".to_string()],
                vec!["b".into()],
                vec!["a".into(), "b".into()]
            ]
        );

        let none = Taxonomy::new(vec![
            FineCategory::clear("p", Polarity::Positive),
            FineCategory::clear("n", Polarity::Negative),
        ])
        .unwrap();
        assert_eq!(enumerate_designs(&none), vec![DesignConfig::original()]);
    }

    #[test]
    fn names() {
        let t = Taxonomy::mask();
        let d = |xs: &[&str]| DesignConfig::resolve(&t, xs).unwrap();
        assert_eq!(design_name(&d(&[]), &t), "Original");
        assert_eq!(design_name(&d(&["low_quality", "IW"]), &t), "Extract IW+LQ");
        assert_eq!(design_name(&d(&["LQ"]), &t), "Extract LQ");
        assert_eq!(display_name(&d(&["LQ"]), &t), "Extract LQ only");
    }

    #[test]
    fn design_config_json() {
        let cfg: DesignConfig = serde_json::from_str(r#"{"extract":["MLO","IW"]}"#).unwrap();
        let cfg = cfg.validated(&Taxonomy::mask()).unwrap();
        assert_eq!(
            cfg.extract,
            vec!["irregular_wearing", "mask_like_occlusion"]
        );
        assert_eq!(
            serde_json::to_string(&cfg).unwrap(),
            r#"{"extract":["irregular_wearing","mask_like_occlusion"]}"#
        );
    }

    #[test]
    fn csv_round_trip() {
        let mut m = Manifest::new(Taxonomy::mask(), Split::Train, 2);
        for (i, (cat, fb)) in [
            ("clear_positive", Polarity::Positive),
            ("low_quality", Polarity::Negative),
            ("irregular_wearing", Polarity::Positive),
        ]
        .into_iter()
        .enumerate()
        {
            m.samples.push(Sample {
                id: format!("s{i}"),
                features: vec![0.1 * i as f64 + 0.2, -1.0 / 3.0],
                category: cat.into(),
                fallback_label: fb,
                asset_ref: None,
            });
        }
        let d = apply_design(&m, &DesignConfig::resolve(&m.taxonomy, &["IW"]).unwrap()).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,class_index,class_name\n"));
        assert!(text.ends_with(",2,UNCERTAIN\n"));
        let back = LabeledDataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.records, d.records);
        assert_eq!(back.class_names, d.class_names);
    }

    #[test]
    fn csv_rejects_mismatched_class_name() {
        let text = "x0,class_index,class_name\n1.0,0,NEGATIVE\n";
        assert!(matches!(
            LabeledDataset::read_csv(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
