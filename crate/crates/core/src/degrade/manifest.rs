use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DegradationRecipe, DegradationType, DegradeError};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
}

/// One synthesized sample. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub lq_path: String,
    pub gt_path: String,
    pub recipe: DegradationRecipe,
    pub conf_gt: BTreeMap<DegradationType, u8>,
    pub level_gt: BTreeMap<DegradationType, f64>,
}

impl ManifestRecord {
    /// Builds the ground-truth maps from the recipe so they are consistent by
    /// construction.
    pub fn from_recipe(lq_path: String, gt_path: String, recipe: DegradationRecipe) -> Self {
        let conf_gt = DegradationType::ALL
            .iter()
            .map(|&t| (t, recipe.contains(t) as u8))
            .collect();
        let level_gt = recipe.entries().clone();
        Self {
            lq_path,
            gt_path,
            recipe,
            conf_gt,
            level_gt,
        }
    }

    pub fn is_active(&self, kind: DegradationType) -> bool {
        self.conf_gt.get(&kind) == Some(&1)
    }

    pub fn active_types(&self) -> Vec<DegradationType> {
        DegradationType::ALL
            .into_iter()
            .filter(|&t| self.is_active(t))
            .collect()
    }

    /// Ground-truth severity on the shared `[0, 1]` scale.
    pub fn severity(&self, kind: DegradationType) -> Option<f64> {
        self.level_gt.get(&kind).map(|&l| kind.range().normalize(l))
    }

    pub fn validate(&self) -> Result<(), DegradeError> {
        for t in DegradationType::ALL {
            let conf = *self.conf_gt.get(&t).ok_or_else(|| {
                DegradeError::Manifest(format!("{}: conf_gt missing {t}", self.lq_path))
            })?;
            if conf > 1 {
                return Err(DegradeError::Manifest(format!(
                    "{}: conf_gt[{t}] = {conf}",
                    self.lq_path
                )));
            }
            let in_recipe = self.recipe.contains(t);
            let has_level = self.level_gt.contains_key(&t);
            if (conf == 1) != in_recipe || (conf == 1) != has_level {
                return Err(DegradeError::Manifest(format!(
                    "{}: inconsistent labels for {t}",
                    self.lq_path
                )));
            }
            if let Some(&l) = self.level_gt.get(&t) {
                t.range().check(l)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub records: Vec<ManifestRecord>,
    /// Directory that record paths are relative to.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, records: Vec<ManifestRecord>) -> Self {
        Self {
            format_version: MANIFEST_FORMAT_VERSION,
            records,
            root: root.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Header {
            format_version: self.format_version,
        })
        .expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), DegradeError> {
        let file = fs::File::create(path).map_err(|e| DegradeError::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(self.to_jsonl().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| DegradeError::io(path, e))
    }

    /// Reads a manifest; record paths resolve against the file's directory.
    pub fn read(path: &Path) -> Result<Self, DegradeError> {
        let file = fs::File::open(path).map_err(|e| DegradeError::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(BufReader::new(file), root)
    }

    pub fn parse<R: BufRead>(reader: R, root: PathBuf) -> Result<Self, DegradeError> {
        let mut lines = reader.lines().enumerate().filter_map(|(i, l)| match l {
            Ok(s) if s.trim().is_empty() => None,
            other => Some((i + 1, other)),
        });
        let (_, first) = lines
            .next()
            .ok_or_else(|| DegradeError::Manifest("missing header line".into()))?;
        let first = first.map_err(|e| DegradeError::io(&root, e))?;
        let header: Header = serde_json::from_str(&first)
            .map_err(|e| DegradeError::Manifest(format!("line 1: {e}")))?;
        if header.format_version != MANIFEST_FORMAT_VERSION {
            return Err(DegradeError::Manifest(format!(
                "unsupported format_version {}",
                header.format_version
            )));
        }
        let mut records = Vec::new();
        for (lineno, line) in lines {
            let line = line.map_err(|e| DegradeError::io(&root, e))?;
            let rec: ManifestRecord = serde_json::from_str(&line)
                .map_err(|e| DegradeError::Manifest(format!("line {lineno}: {e}")))?;
            rec.validate()?;
            records.push(rec);
        }
        Ok(Self {
            format_version: header.format_version,
            records,
            root,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> ManifestRecord {
        let recipe = DegradationRecipe::from_pairs(
            &[(DegradationType::Blur, 1.5), (DegradationType::Jpeg, 40.0)],
            9,
        )
        .unwrap();
        ManifestRecord::from_recipe("lq/0.png".into(), "gt/0.png".into(), recipe)
    }

    #[test]
    fn labels_follow_recipe() {
        let r = record();
        r.validate().unwrap();
        assert_eq!(
            r.active_types(),
            vec![DegradationType::Blur, DegradationType::Jpeg]
        );
        assert_eq!(r.conf_gt[&DegradationType::Noisy], 0);
        assert!((r.severity(DegradationType::Jpeg).unwrap() - 55.0 / 65.0).abs() < 1e-15);
    }

    #[test]
    fn jsonl_round_trip() {
        let m = DatasetManifest::new("/tmp/x", vec![record(), record()]);
        let text = m.to_jsonl();
        assert!(text.starts_with("{\"format_version\":1}\n"));
        let back = DatasetManifest::parse(text.as_bytes(), "/tmp/x".into()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_inconsistent_labels() {
        let mut r = record();
        r.conf_gt.insert(DegradationType::Noisy, 1);
        assert!(r.validate().is_err());
        let mut r = record();
        r.level_gt.remove(&DegradationType::Blur);
        assert!(r.validate().is_err());
        let text = format!(
            "{{\"format_version\":1}}\n{}\n",
            serde_json::to_string(&{
                let mut r = record();
                r.conf_gt.insert(DegradationType::Blur, 0);
                r
            })
            .unwrap()
        );
        assert!(DatasetManifest::parse(text.as_bytes(), "/".into()).is_err());
        assert!(DatasetManifest::parse("{\"format_version\":2}\n".as_bytes(), "/".into()).is_err());
        assert!(DatasetManifest::parse("".as_bytes(), "/".into()).is_err());
    }

    #[test]
    fn empty_manifest_is_valid() {
        let m = DatasetManifest::new("/", vec![]);
        let back = DatasetManifest::parse(m.to_jsonl().as_bytes(), "/".into()).unwrap();
        assert!(back.is_empty());
    }
}
