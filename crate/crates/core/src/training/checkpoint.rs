//! Self-describing JSON checkpoints: the model config, named parameter
//! blocks with shape metadata, and a CRC32 over the canonical parameter
//! bytes. Floats are written with 17 significant digits, which is enough to
//! reproduce every f64 bit-exactly on load.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelConfig, ModelError, ModelParams};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported checkpoint format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("parameter block `{block}`: {reason}")]
    BlockMismatch { block: String, reason: String },
    #[error("checkpoint contains non-finite parameter in block `{block}`")]
    NonFinite { block: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    model_config: ModelConfig,
    blocks: Vec<BlockEntry>,
    crc32: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// CRC32 over the little-endian bytes of every parameter value, in canonical
/// block order.
fn parameter_crc(blocks: &[BlockEntry]) -> u32 {
    let mut hasher = crc32fast::Hasher::new();
    for block in blocks {
        for v in &block.values {
            hasher.update(&v.to_le_bytes());
        }
    }
    hasher.finalize()
}

fn block_entries(params: &ModelParams) -> Vec<BlockEntry> {
    let shapes = block_shapes(params.config());
    params
        .blocks()
        .into_iter()
        .zip(shapes)
        .map(|((name, values), (expected_name, shape))| {
            debug_assert_eq!(name, expected_name);
            BlockEntry {
                name,
                shape,
                values: values.to_vec(),
            }
        })
        .collect()
}

/// Canonical block layout for a config: names and shapes in the same order
/// as `ModelParams::blocks`.
fn block_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let mut stack = |name: &str, widths: &[usize]| {
        for (i, pair) in widths.windows(2).enumerate() {
            out.push((format!("{name}.{i}.weights"), vec![pair[1], pair[0]]));
            out.push((format!("{name}.{i}.bias"), vec![pair[1]]));
        }
    };
    stack("shared", &config.shared_widths);
    stack("det", &config.deterministic_widths);
    let trunk = &config.stochastic_widths[..config.stochastic_widths.len() - 1];
    stack("stoch_trunk", trunk);
    let trunk_out = *trunk.last().expect("validated config");
    for head in ["mean_head", "log_std_head"] {
        out.push((format!("{head}.weights"), vec![config.input_dim, trunk_out]));
        out.push((format!("{head}.bias"), vec![config.input_dim]));
    }
    out
}

/// serde_json formatter that renders every f64 with 17 significant digits.
struct SigFig17Pretty<'a> {
    inner: serde_json::ser::PrettyFormatter<'a>,
}

impl serde_json::ser::Formatter for SigFig17Pretty<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// Renders the checkpoint document without touching the filesystem.
pub fn checkpoint_to_string(params: &ModelParams) -> Result<String, CheckpointError> {
    for (name, values) in params.blocks() {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(CheckpointError::NonFinite { block: name });
        }
    }
    let blocks = block_entries(params);
    let file = CheckpointFile {
        format_version: CHECKPOINT_FORMAT_VERSION,
        model_config: params.config().clone(),
        crc32: parameter_crc(&blocks),
        blocks,
    };
    let mut buf = Vec::new();
    let formatter = SigFig17Pretty {
        inner: serde_json::ser::PrettyFormatter::new(),
    };
    let mut serializer = serde_json::Serializer::with_formatter(&mut buf, formatter);
    file.serialize(&mut serializer)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits utf-8"))
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<(), CheckpointError> {
    let text = checkpoint_to_string(params)?;
    fs::write(path, text).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: CheckpointFile = serde_json::from_str(&text)?;
    if file.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: file.format_version,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    file.model_config.validate()?;

    let expected = block_shapes(&file.model_config);
    if file.blocks.len() != expected.len() {
        return Err(CheckpointError::BlockMismatch {
            block: "<layout>".into(),
            reason: format!(
                "config expects {} blocks, file holds {}",
                expected.len(),
                file.blocks.len()
            ),
        });
    }
    for (entry, (name, shape)) in file.blocks.iter().zip(&expected) {
        if &entry.name != name {
            return Err(CheckpointError::BlockMismatch {
                block: entry.name.clone(),
                reason: format!("expected block `{name}` at this position"),
            });
        }
        if &entry.shape != shape {
            return Err(CheckpointError::BlockMismatch {
                block: entry.name.clone(),
                reason: format!("shape {:?} does not match config shape {shape:?}", entry.shape),
            });
        }
        let len: usize = shape.iter().product();
        if entry.values.len() != len {
            return Err(CheckpointError::BlockMismatch {
                block: entry.name.clone(),
                reason: format!("{} values for shape {shape:?}", entry.values.len()),
            });
        }
        if !entry.values.iter().all(|v| v.is_finite()) {
            return Err(CheckpointError::NonFinite {
                block: entry.name.clone(),
            });
        }
    }

    let computed = parameter_crc(&file.blocks);
    if computed != file.crc32 {
        return Err(CheckpointError::ChecksumMismatch {
            stored: file.crc32,
            computed,
        });
    }

    let mut params = ModelParams::init(&file.model_config)?;
    {
        let mut blocks = params.blocks_mut();
        for (entry, (_, values)) in file.blocks.iter().zip(blocks.iter_mut()) {
            values.copy_from_slice(&entry.values);
        }
    }
    Ok(params)
}
