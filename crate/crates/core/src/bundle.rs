//! On-disk problem bundles and result directories.
//!
//! A bundle is a directory holding
//!
//! * `meta.json`: `{format_version: 1, p, n, num_groups, group_offsets,
//!   group_flop_cost, block_offsets, dtype: "f32"}`, unknown fields rejected;
//! * `weights.bin`: `p` little-endian `f32`;
//! * `gradsamples.bin`: the `n x p` sample-gradient matrix, row-major,
//!   little-endian `f32`.
//!
//! A result directory holds `mask.bin` (`p` bytes, each 0 or 1), `weights.bin`
//! and `report.txt`. Both kinds are written to a sibling temporary directory
//! and renamed into place.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{FalconError, Result};
use crate::problem::{GroupStructure, Mask};
use crate::report::Report;

pub const FORMAT_VERSION: u32 = 1;
pub const META_FILE: &str = "meta.json";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const SAMPLES_FILE: &str = "gradsamples.bin";
pub const MASK_FILE: &str = "mask.bin";
pub const REPORT_FILE: &str = "report.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleMeta {
    pub format_version: u32,
    pub p: usize,
    pub n: usize,
    pub num_groups: usize,
    pub group_offsets: Vec<usize>,
    pub group_flop_cost: Vec<f64>,
    pub block_offsets: Vec<usize>,
    pub dtype: String,
}

impl BundleMeta {
    /// Every structural problem with the descriptor; empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.format_version != FORMAT_VERSION {
            out.push(format!(
                "unsupported format_version {}, expected {FORMAT_VERSION}",
                self.format_version
            ));
        }
        if self.dtype != "f32" {
            out.push(format!("unsupported dtype {:?}, expected \"f32\"", self.dtype));
        }
        if self.group_offsets.len() != self.num_groups + 1 {
            out.push(format!(
                "num_groups is {} but group_offsets has {} entries",
                self.num_groups,
                self.group_offsets.len()
            ));
        }
        let groups = GroupStructure::new(self.group_offsets.clone(), self.group_flop_cost.clone());
        match &groups {
            Err(FalconError::InvalidInstance(v)) => {
                out.extend(v.iter().map(|x| format!("group structure: {x}")))
            }
            Err(e) => out.push(e.to_string()),
            Ok(g) if g.len() != self.p => out.push(format!(
                "group_offsets end at {}, expected p = {}",
                g.len(),
                self.p
            )),
            Ok(_) => {}
        }

        let b = &self.block_offsets;
        if b.len() < 2 || b[0] != 0 || *b.last().unwrap() != self.p {
            out.push(format!("block_offsets must run from 0 to p = {}", self.p));
        }
        if let Some(k) = b.windows(2).position(|w| w[0] >= w[1]) {
            out.push(format!("block offsets not increasing at position {}", k + 1));
        } else if let Ok(g) = &groups {
            for (k, w) in b.windows(2).enumerate() {
                if w[1] > g.len() {
                    break;
                }
                let (first, last) = (g.group_of(w[0]), g.group_of(w[1] - 1));
                if first != last {
                    out.push(format!(
                        "block {} spans groups {},{}",
                        k + 1,
                        first + 1,
                        last + 1
                    ));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemBundle {
    pub meta: BundleMeta,
    pub weights: Vec<f32>,
    /// Row-major `n x p`.
    pub samples: Arc<[f32]>,
}

impl ProblemBundle {
    pub fn new(
        group_offsets: Vec<usize>,
        group_flop_cost: Vec<f64>,
        block_offsets: Vec<usize>,
        weights: Vec<f32>,
        n: usize,
        samples: Arc<[f32]>,
    ) -> Result<Self> {
        let meta = BundleMeta {
            format_version: FORMAT_VERSION,
            p: weights.len(),
            n,
            num_groups: group_flop_cost.len(),
            group_offsets,
            group_flop_cost,
            block_offsets,
            dtype: "f32".into(),
        };
        let bundle = Self {
            meta,
            weights,
            samples,
        };
        let problems = bundle.problems();
        if problems.is_empty() {
            Ok(bundle)
        } else {
            Err(FalconError::Format {
                path: PathBuf::new(),
                problems,
            })
        }
    }

    /// Bundle whose blocks coincide with its groups.
    pub fn with_group_blocks(
        group_offsets: Vec<usize>,
        group_flop_cost: Vec<f64>,
        weights: Vec<f32>,
        n: usize,
        samples: Arc<[f32]>,
    ) -> Result<Self> {
        let blocks = group_offsets.clone();
        Self::new(group_offsets, group_flop_cost, blocks, weights, n, samples)
    }

    fn problems(&self) -> Vec<String> {
        let mut out = self.meta.problems();
        if self.weights.len() != self.meta.p {
            out.push(format!(
                "weights length: expected {} values, found {}",
                self.meta.p,
                self.weights.len()
            ));
        }
        if self.samples.len() != self.meta.n * self.meta.p {
            out.push(format!(
                "gradsamples length: expected {} values, found {}",
                self.meta.n * self.meta.p,
                self.samples.len()
            ));
        }
        if let Some(i) = self.weights.iter().position(|w| !w.is_finite()) {
            out.push(format!("non-finite weight at parameter {}", i + 1));
        }
        if let Some(k) = self.samples.iter().position(|x| !x.is_finite()) {
            let p = self.meta.p.max(1);
            out.push(format!(
                "non-finite sample gradient at row {}, parameter {}",
                k / p + 1,
                k % p + 1
            ));
        }
        out
    }

    pub fn p(&self) -> usize {
        self.meta.p
    }

    pub fn n(&self) -> usize {
        self.meta.n
    }

    pub fn groups(&self) -> GroupStructure {
        GroupStructure::new(
            self.meta.group_offsets.clone(),
            self.meta.group_flop_cost.clone(),
        )
        .expect("validated on construction")
    }

    pub fn weights_f64(&self) -> Vec<f64> {
        self.weights.iter().map(|&w| f64::from(w)).collect()
    }

    /// Same structure and samples, weights rounded to `f32`.
    pub fn with_weights(&self, weights: &[f64]) -> Self {
        assert_eq!(weights.len(), self.p(), "weight vector length");
        Self {
            meta: self.meta.clone(),
            weights: weights.iter().map(|&w| w as f32).collect(),
            samples: Arc::clone(&self.samples),
        }
    }

    /// `true` when both bundles share groups, costs and blocks.
    pub fn same_structure(&self, other: &Self) -> bool {
        self.meta.p == other.meta.p
            && self.meta.group_offsets == other.meta.group_offsets
            && self.meta.group_flop_cost == other.meta.group_flop_cost
            && self.meta.block_offsets == other.meta.block_offsets
    }
}

fn f32s_from_le(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub(crate) fn f32s_to_le(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FalconError::format(path, format!("cannot read: {e}")))
}

pub fn read_bundle(dir: impl AsRef<Path>) -> Result<ProblemBundle> {
    let dir = dir.as_ref();
    let meta_path = dir.join(META_FILE);
    let text = read_file(&meta_path)?;
    let meta: BundleMeta = serde_json::from_slice(&text)
        .map_err(|e| FalconError::format(&meta_path, format!("invalid descriptor: {e}")))?;
    let problems = meta.problems();
    if !problems.is_empty() {
        return Err(FalconError::Format {
            path: meta_path,
            problems,
        });
    }

    let weights_path = dir.join(WEIGHTS_FILE);
    let raw = read_file(&weights_path)?;
    if raw.len() != 4 * meta.p {
        return Err(FalconError::format(
            &weights_path,
            format!(
                "weights length: expected {} bytes, found {}",
                4 * meta.p,
                raw.len()
            ),
        ));
    }
    let weights = f32s_from_le(&raw);

    let samples_path = dir.join(SAMPLES_FILE);
    let raw = read_file(&samples_path)?;
    let expected = meta.n.checked_mul(meta.p).and_then(|v| v.checked_mul(4));
    if expected != Some(raw.len()) {
        return Err(FalconError::format(
            &samples_path,
            format!(
                "gradsamples length: expected {} bytes, found {}",
                expected.map_or_else(|| "too many".to_string(), |v| v.to_string()),
                raw.len()
            ),
        ));
    }
    let samples: Arc<[f32]> = f32s_from_le(&raw).into();
    drop(raw);

    let bundle = ProblemBundle {
        meta,
        weights,
        samples,
    };
    let problems = bundle.problems();
    if problems.is_empty() {
        Ok(bundle)
    } else {
        Err(FalconError::Format {
            path: dir.to_path_buf(),
            problems,
        })
    }
}

/// Write `files` into a fresh sibling of `dir`, then move it to `dir`,
/// replacing whatever was there.
fn write_dir_atomically(dir: &Path, files: &[(&str, &[u8])]) -> Result<()> {
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let staging = tempfile::Builder::new()
        .prefix(".falcon-staging-")
        .tempdir_in(&parent)?;
    for (name, bytes) in files {
        fs::write(staging.path().join(name), bytes)?;
    }
    let staged = staging.keep();
    if dir.exists() {
        let old = tempfile::Builder::new()
            .prefix(".falcon-old-")
            .tempdir_in(&parent)?
            .keep();
        fs::remove_dir(&old)?;
        fs::rename(dir, &old)?;
        fs::rename(&staged, dir)?;
        fs::remove_dir_all(&old)?;
    } else {
        fs::rename(&staged, dir)?;
    }
    Ok(())
}

pub fn write_bundle(bundle: &ProblemBundle, dir: impl AsRef<Path>) -> Result<()> {
    let meta = serde_json::to_string_pretty(&bundle.meta)
        .map_err(|e| FalconError::Domain(format!("cannot encode descriptor: {e}")))?;
    let weights = f32s_to_le(bundle.weights.iter().copied());
    let samples = f32s_to_le(bundle.samples.iter().copied());
    write_dir_atomically(
        dir.as_ref(),
        &[
            (META_FILE, format!("{meta}\n").as_bytes()),
            (WEIGHTS_FILE, &weights),
            (SAMPLES_FILE, &samples),
        ],
    )
}

pub fn write_result(
    dir: impl AsRef<Path>,
    mask: &Mask,
    weights: &[f64],
    report: &Report,
) -> Result<()> {
    crate::error::check_len("result weights", mask.len(), weights.len())?;
    let weights = f32s_to_le(weights.iter().map(|&w| w as f32));
    write_dir_atomically(
        dir.as_ref(),
        &[
            (MASK_FILE, &mask.to_bytes()),
            (WEIGHTS_FILE, &weights),
            (REPORT_FILE, report.render().as_bytes()),
        ],
    )
}

/// Read a `mask.bin` file, checking its length against `p`.
pub fn read_mask(path: impl AsRef<Path>, p: usize) -> Result<Mask> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    if bytes.len() != p {
        return Err(FalconError::format(
            path,
            format!("mask length: expected {p} bytes, found {}", bytes.len()),
        ));
    }
    Mask::from_bytes(&bytes).map_err(|e| FalconError::format(path, e.to_string()))
}

/// Read a weights file: `p` little-endian `f32` values.
pub fn read_weights(path: impl AsRef<Path>, p: usize) -> Result<Vec<f32>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    if bytes.len() != 4 * p {
        return Err(FalconError::format(
            path,
            format!("weights length: expected {} bytes, found {}", 4 * p, bytes.len()),
        ));
    }
    Ok(f32s_from_le(&bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle_a() -> ProblemBundle {
        ProblemBundle::with_group_blocks(
            vec![0, 2, 4],
            vec![2.0, 1.0],
            vec![2.0, -1.7, 1.4, 1.0],
            1,
            Arc::from(vec![0.5f32, -0.25, 0.125, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b");
        let b = bundle_a();
        write_bundle(&b, &path).unwrap();
        assert_eq!(read_bundle(&path).unwrap(), b);
        // Overwriting an existing bundle replaces it.
        write_bundle(&b.with_weights(&[0.0; 4]), &path).unwrap();
        assert_eq!(read_bundle(&path).unwrap().weights, vec![0.0; 4]);
    }

    #[test]
    fn truncated_weights_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(&bundle_a(), dir.path().join("b")).unwrap();
        let w = dir.path().join("b").join(WEIGHTS_FILE);
        let bytes = fs::read(&w).unwrap();
        fs::write(&w, &bytes[..13]).unwrap();
        let err = read_bundle(dir.path().join("b")).unwrap_err().to_string();
        assert!(err.contains("weights length: expected 16 bytes"), "{err}");
    }

    #[test]
    fn block_crossing_groups_is_reported() {
        let err = ProblemBundle::new(
            vec![0, 2, 4],
            vec![2.0, 1.0],
            vec![0, 1, 2, 3, 4],
            vec![0.0; 4],
            0,
            Arc::from(Vec::<f32>::new()),
        );
        assert!(err.is_ok());
        let err = ProblemBundle::new(
            vec![0, 3, 5],
            vec![2.0, 1.0],
            vec![0, 1, 2, 4, 5],
            vec![0.0; 5],
            0,
            Arc::from(Vec::<f32>::new()),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("block 3 spans groups 1,2"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b");
        write_bundle(&bundle_a(), &path).unwrap();
        let meta = path.join(META_FILE);
        let text = fs::read_to_string(&meta).unwrap();
        fs::write(&meta, text.replacen('{', "{\n  \"extra\": 1,", 1)).unwrap();
        assert!(matches!(read_bundle(&path), Err(FalconError::Format { .. })));
    }

    #[test]
    fn mask_file_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m");
        fs::write(&path, [1u8, 0, 2]).unwrap();
        assert!(read_mask(&path, 3).is_err());
        assert!(read_mask(&path, 4).is_err());
        fs::write(&path, [1u8, 0, 1]).unwrap();
        assert_eq!(read_mask(&path, 3).unwrap().nnz(), 2);
    }
}
