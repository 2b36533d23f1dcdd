use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One row of a manifest. Paths are relative to the manifest's directory
/// unless absolute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub depth_path: String,
    pub rgb_path: Option<String>,
    pub mask_path: Option<String>,
    pub class_label: String,
    pub instance_id: String,
    pub split: Option<Split>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Random validation subset, no test split.
    Sample,
    /// One whole instance per class held out for test; validation drawn from
    /// the remaining training samples.
    Instance,
}

/// How class labels combine when two manifests are concatenated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClassMerge {
    /// Identical labels denote the same class.
    Shared,
    /// Labels are prefixed per source so classes never collide.
    Disjoint { left: String, right: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Self {
        DatasetManifest {
            root: root.into(),
            entries,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::file(path, "manifest does not exist"));
        }
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::file(path, e))?;
        let entries = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<ManifestEntry>, _>>()
            .map_err(|e| Error::file(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(DatasetManifest { root, entries })
    }

    /// Writes the CSV with a header row. Paths are written as stored.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::file(path, e))?;
        for e in &self.entries {
            w.serialize(e).map_err(|e| Error::file(path, e))?;
        }
        if self.entries.is_empty() {
            w.write_record(["depth_path", "rgb_path", "mask_path", "class_label", "instance_id", "split"])
                .map_err(|e| Error::file(path, e))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorted distinct class labels; the index into this list is the label id.
    pub fn classes(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| e.class_label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == Some(split))
    }

    pub fn count(&self, split: Split) -> usize {
        self.in_split(split).count()
    }

    /// Replaces each label by its first whitespace/underscore token.
    pub fn merge_classes_by_first_token(&self) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            if let Some(tok) = e
                .class_label
                .split(|c: char| c.is_whitespace() || c == '_')
                .find(|t| !t.is_empty())
            {
                e.class_label = tok.to_string();
            }
        }
        out
    }

    /// Assigns every entry to exactly one split, deterministically in `seed`.
    pub fn make_split(&self, seed: u64, val_fraction: f64, mode: SplitMode) -> Result<Self> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction must lie in [0, 1), got {val_fraction}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for e in &mut out.entries {
            e.split = Some(Split::Train);
        }

        if mode == SplitMode::Instance {
            let mut per_class: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
            for e in &self.entries {
                per_class
                    .entry(e.class_label.as_str())
                    .or_default()
                    .insert(e.instance_id.as_str());
            }
            let mut held_out: BTreeSet<(String, String)> = BTreeSet::new();
            for (class, instances) in &per_class {
                if instances.len() < 2 {
                    return Err(Error::Data(format!(
                        "class `{class}` has a single instance; instance-level split needs at least two"
                    )));
                }
                let list: Vec<&str> = instances.iter().copied().collect();
                let pick = list.choose(&mut rng).expect("non-empty");
                held_out.insert((class.to_string(), pick.to_string()));
            }
            for e in &mut out.entries {
                if held_out.contains(&(e.class_label.clone(), e.instance_id.clone())) {
                    e.split = Some(Split::Test);
                }
            }
        }

        let train_idx: Vec<usize> = (0..out.entries.len())
            .filter(|&i| out.entries[i].split == Some(Split::Train))
            .collect();
        let n_val = (val_fraction * train_idx.len() as f64 + 0.5).floor() as usize;
        let mut order = train_idx.clone();
        order.shuffle(&mut rng);
        let mut train_left: BTreeMap<String, usize> = BTreeMap::new();
        for &i in &train_idx {
            *train_left.entry(out.entries[i].class_label.clone()).or_default() += 1;
        }
        let mut assigned = 0;
        for i in order {
            if assigned == n_val {
                break;
            }
            let left = train_left.get_mut(&out.entries[i].class_label).expect("counted");
            if *left > 1 {
                *left -= 1;
                out.entries[i].split = Some(Split::Val);
                assigned += 1;
            }
        }
        Ok(out)
    }

    /// Concatenates two manifests, resolving every path against its own root.
    pub fn concat(&self, other: &Self, merge: &ClassMerge) -> Self {
        let absolutize = |m: &DatasetManifest, e: &ManifestEntry, prefix: Option<&str>| {
            let fix = |p: &str| m.resolve(p).to_string_lossy().into_owned();
            let label = match prefix {
                Some(pre) => format!("{pre}{}", e.class_label),
                None => e.class_label.clone(),
            };
            ManifestEntry {
                depth_path: fix(&e.depth_path),
                rgb_path: e.rgb_path.as_deref().map(fix),
                mask_path: e.mask_path.as_deref().map(fix),
                class_label: label,
                instance_id: match prefix {
                    Some(pre) => format!("{pre}{}", e.instance_id),
                    None => e.instance_id.clone(),
                },
                split: e.split,
            }
        };
        let (pl, pr) = match merge {
            ClassMerge::Shared => (None, None),
            ClassMerge::Disjoint { left, right } => (Some(left.as_str()), Some(right.as_str())),
        };
        let mut entries: Vec<ManifestEntry> =
            self.entries.iter().map(|e| absolutize(self, e, pl)).collect();
        entries.extend(other.entries.iter().map(|e| absolutize(other, e, pr)));
        DatasetManifest {
            root: PathBuf::new(),
            entries,
        }
    }
}

/// Builds a manifest from a Washington-style tree:
/// `<root>/<class>/<instance>/<stem>_depthcrop.png`, with optional sibling
/// `<stem>_crop.png` (RGB) and `<stem>_maskcrop.png` (mask).
pub fn build_washington_manifest(root: &Path) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    let mut files = Vec::new();
    while let Some(dir) = stack.pop() {
        for item in std::fs::read_dir(&dir).map_err(|e| Error::file(&dir, e))? {
            let path = item?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path
                .file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with("_depthcrop.png"))
            {
                files.push(path);
            }
        }
    }
    files.sort();
    for depth in files {
        let rel = depth.strip_prefix(root).expect("walked under root");
        let parts: Vec<&str> = rel.iter().filter_map(|c| c.to_str()).collect();
        if parts.len() < 3 {
            return Err(Error::file(
                &depth,
                "expected <class>/<instance>/<file> layout",
            ));
        }
        let class = parts[parts.len() - 3].to_string();
        let instance = parts[parts.len() - 2].to_string();
        let name = depth.file_name().and_then(|n| n.to_str()).expect("utf-8 checked");
        let stem = name.trim_end_matches("_depthcrop.png");
        let sibling = |suffix: &str| {
            let p = depth.with_file_name(format!("{stem}{suffix}"));
            p.exists().then(|| {
                p.strip_prefix(root)
                    .expect("sibling under root")
                    .to_string_lossy()
                    .into_owned()
            })
        };
        entries.push(ManifestEntry {
            depth_path: rel.to_string_lossy().into_owned(),
            rgb_path: sibling("_crop.png"),
            mask_path: sibling("_maskcrop.png"),
            class_label: class,
            instance_id: instance,
            split: None,
        });
    }
    if entries.is_empty() {
        return Err(Error::Data(format!(
            "no *_depthcrop.png files under {}",
            root.display()
        )));
    }
    Ok(DatasetManifest::new(root, entries))
}
