//! Dataset manifests: one pair per line,
//! `left_path right_path [gt_path gt_format] d_max`.
//! Blank lines and `#` comments are ignored; relative paths resolve
//! against the manifest's directory.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::ground_truth::GtFormat;
use super::{load_stereo_pair, read_file, StereoPair};

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub left: PathBuf,
    pub right: PathBuf,
    pub ground_truth: Option<(PathBuf, GtFormat)>,
    pub d_max: usize,
}

impl ManifestEntry {
    pub fn id(&self) -> String {
        self.left
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }

    pub fn load_pair(&self) -> Result<StereoPair> {
        load_stereo_pair(&self.left, &self.right, self.d_max)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut offset = 0;
        for (lineno, raw_line) in text.split_inclusive('\n').enumerate() {
            let line_start = offset;
            offset += raw_line.len();
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |msg: String| Error::format(line_start, format!("manifest line {}: {msg}", lineno + 1));
            let (left, right, gt, d_max) = match fields.as_slice() {
                [l, r, d] => (l, r, None, d),
                [l, r, g, f, d] => (l, r, Some((g, f)), d),
                _ => return Err(bad(format!("expected 3 or 5 fields, found {}", fields.len()))),
            };
            let d_max: usize = d_max.parse().map_err(|_| bad(format!("invalid d_max `{d_max}`")))?;
            let resolve = |p: &str| {
                let p = Path::new(p);
                if p.is_absolute() {
                    p.to_path_buf()
                } else {
                    base_dir.join(p)
                }
            };
            let ground_truth = match gt {
                Some((g, f)) => Some((resolve(g), f.parse::<GtFormat>().map_err(|e| bad(e.to_string()))?)),
                None => None,
            };
            entries.push(ManifestEntry {
                left: resolve(left),
                right: resolve(right),
                ground_truth,
                d_max,
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::format(e.valid_up_to(), format!("{}: manifest is not UTF-8", path.display())))?;
        Self::parse(text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Serializes with paths relative to `base_dir` where possible.
    pub fn to_text(&self, base_dir: &Path) -> String {
        let rel = |p: &Path| p.strip_prefix(base_dir).unwrap_or(p).display().to_string();
        self.entries
            .iter()
            .map(|e| match &e.ground_truth {
                Some((g, f)) => format!("{} {} {} {} {}\n", rel(&e.left), rel(&e.right), rel(g), f, e.d_max),
                None => format!("{} {} {}\n", rel(&e.left), rel(&e.right), e.d_max),
            })
            .collect()
    }

    pub fn find(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries
            .iter()
            .find(|e| e.id() == id)
            .or_else(|| id.parse::<usize>().ok().and_then(|k| self.entries.get(k)))
    }
}
