//! The 1024-wide static feature vector: four 256-bin blocks
//! (byte/entropy histogram, imports, header metadata, strings), each value
//! passed through `log10(1 + x)`.

mod entropy;
mod hashed;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pe::{self, PeSummary};

pub use entropy::{byte_entropy_features, window_count, window_entropy, STEP, WINDOW};
pub use hashed::{
    bucket, fnv1a64, import_features, import_key, metadata_features, printable_runs,
    string_features, BLOCK, MIN_STRING_LEN,
};

pub const FEATURE_DIM: usize = 4 * BLOCK;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureBlock {
    ByteEntropy,
    Imports,
    Metadata,
    Strings,
}

impl FeatureBlock {
    pub const ALL: [FeatureBlock; 4] = [
        FeatureBlock::ByteEntropy,
        FeatureBlock::Imports,
        FeatureBlock::Metadata,
        FeatureBlock::Strings,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn range(self) -> std::ops::Range<usize> {
        let start = self.index() * BLOCK;
        start..start + BLOCK
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureBlock::ByteEntropy => "byte-entropy",
            FeatureBlock::Imports => "imports",
            FeatureBlock::Metadata => "metadata",
            FeatureBlock::Strings => "strings",
        }
    }
}

impl FromStr for FeatureBlock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "byte-entropy" | "entropy" | "byte_entropy" => Ok(FeatureBlock::ByteEntropy),
            "imports" | "import" => Ok(FeatureBlock::Imports),
            "metadata" | "meta" => Ok(FeatureBlock::Metadata),
            "strings" | "string" => Ok(FeatureBlock::Strings),
            other => Err(Error::Usage(format!(
                "unknown feature block {other:?} (expected byte-entropy, imports, metadata, strings or all)"
            ))),
        }
    }
}

/// Non-empty, ordered subset of the four feature blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureBlock>", into = "Vec<FeatureBlock>")]
pub struct BlockMask(Vec<FeatureBlock>);

impl BlockMask {
    pub fn all() -> Self {
        BlockMask(FeatureBlock::ALL.to_vec())
    }

    pub fn new(blocks: impl IntoIterator<Item = FeatureBlock>) -> Result<Self> {
        let mut v: Vec<_> = blocks.into_iter().collect();
        v.sort();
        v.dedup();
        if v.is_empty() {
            return Err(Error::Usage("feature mask must name at least one block".into()));
        }
        Ok(BlockMask(v))
    }

    pub fn blocks(&self) -> &[FeatureBlock] {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.len() * BLOCK
    }

    /// Column indices of the full 1024-wide vector kept by this mask, in order.
    pub fn columns(&self) -> Vec<usize> {
        self.0.iter().flat_map(|b| b.range()).collect()
    }

    /// Narrows a full feature row to the masked columns.
    pub fn select(&self, row: &[f64]) -> Vec<f64> {
        self.0.iter().flat_map(|b| row[b.range()].iter().copied()).collect()
    }
}

impl TryFrom<Vec<FeatureBlock>> for BlockMask {
    type Error = Error;

    fn try_from(v: Vec<FeatureBlock>) -> Result<Self> {
        BlockMask::new(v)
    }
}

impl From<BlockMask> for Vec<FeatureBlock> {
    fn from(m: BlockMask) -> Self {
        m.0
    }
}

impl FromStr for BlockMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(BlockMask::all());
        }
        let blocks = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(FeatureBlock::from_str)
            .collect::<Result<Vec<_>>>()?;
        BlockMask::new(blocks)
    }
}

impl fmt::Display for BlockMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.0.iter().map(|b| b.name()).collect();
        f.write_str(&names.join(","))
    }
}

/// Pre-transform block values, before `log10(1 + x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawFeatures {
    pub byte_entropy: [u64; BLOCK],
    pub imports: [u64; BLOCK],
    pub metadata: [f64; BLOCK],
    pub strings: [u64; BLOCK],
}

impl RawFeatures {
    pub fn extract(raw: &[u8], pe: &PeSummary) -> Self {
        RawFeatures {
            byte_entropy: byte_entropy_features(raw),
            imports: import_features(pe::extract_imports(pe)),
            metadata: metadata_features(&pe.numeric_fields),
            strings: string_features(raw),
        }
    }

    pub fn concat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(FEATURE_DIM);
        out.extend(self.byte_entropy.iter().map(|&v| v as f64));
        out.extend(self.imports.iter().map(|&v| v as f64));
        out.extend_from_slice(&self.metadata);
        out.extend(self.strings.iter().map(|&v| v as f64));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Applies `log10(1 + x)` to a 1024-wide raw vector.
    pub fn from_raw(raw: &[f64]) -> Result<Self> {
        if raw.len() != FEATURE_DIM {
            return Err(Error::shape(FEATURE_DIM, raw.len()));
        }
        if let Some(x) = raw.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::Domain(format!("raw feature value {x} is not a finite non-negative number")));
        }
        Ok(FeatureVector(raw.iter().map(|&x| (1.0 + x).log10()).collect()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn block(&self, b: FeatureBlock) -> &[f64] {
        &self.0[b.range()]
    }

    /// Rounds through `f32`, the precision feature matrices are stored at.
    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&x| x as f32).collect()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn assemble_features(raw: &[u8], pe: &PeSummary) -> FeatureVector {
    let concat = RawFeatures::extract(raw, pe).concat();
    FeatureVector::from_raw(&concat).expect("raw blocks are finite and non-negative")
}

/// Parses and featurizes one file's bytes.
pub fn extract(raw: &[u8]) -> (PeSummary, FeatureVector) {
    let pe = pe::parse_pe(raw);
    let fv = assemble_features(raw, &pe);
    (pe, fv)
}
