//! CATT container.
//!
//! Layout (little-endian):
//! - magic: `b"CATT"`
//! - version: u32 (= 1)
//! - header length: u64
//! - header: UTF-8 JSON ([`DumpHeader`])
//! - payload: f32 * layers * steps * grid_h * grid_w, ordered by layer, step,
//!   token row, token column

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{check_layout, AttentionMap, AttentionStack, PromptKind, StackInfo};

pub const CATT_MAGIC: &[u8; 4] = b"CATT";
pub const CATT_VERSION: u32 = 1;
pub const PAYLOAD_DTYPE: &str = "float32-le";

/// Maps whose sum is further than this from 1 are renormalized on read.
const RENORMALIZE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("bad magic {0:?}, expected \"CATT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported dump version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated: expected {expected} elements, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{0} unexpected trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("header field: {0}")]
    HeaderField(String),
    #[error("token grid must be non-empty")]
    EmptyGrid,
    #[error("layer list {0:?} is not strictly increasing")]
    UnsortedLayers(Vec<u32>),
    #[error("step list {0:?} is not contiguous")]
    NonContiguousSteps(Vec<u32>),
    #[error("layout: {0}")]
    Layout(String),
    #[error("non-finite weight at layer {layer}, step {step}, token {index}")]
    NonFiniteWeight { layer: u32, step: u32, index: usize },
    #[error("negative weight at layer {layer}, step {step}, token {index}")]
    NegativeWeight { layer: u32, step: u32, index: usize },
    #[error("all-zero attention map at layer {layer}, step {step}")]
    ZeroMap { layer: u32, step: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub magic: String,
    pub version: u32,
    pub model_id: String,
    pub prompt_kind: PromptKind,
    pub prompt_text: String,
    pub grid_h: usize,
    pub grid_w: usize,
    pub layers: Vec<u32>,
    pub steps: Vec<u32>,
    #[serde(default)]
    pub generated_tokens: Vec<String>,
    pub payload_dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_aggregation: Option<String>,
}

/// A map that was rescaled on read because its sum was off by more than 1e-3.
#[derive(Clone, Debug, PartialEq)]
pub struct DumpWarning {
    pub layer: u32,
    pub step: u32,
    pub sum: f64,
}

impl std::fmt::Display for DumpWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "layer {} step {} summed to {:.6}; renormalized",
            self.layer, self.step, self.sum
        )
    }
}

#[derive(Clone, Debug)]
pub struct ParsedDump {
    pub stack: AttentionStack,
    pub warnings: Vec<DumpWarning>,
}

pub fn write_dump(stack: &AttentionStack) -> Vec<u8> {
    let (grid_h, grid_w) = stack.grid();
    let header = DumpHeader {
        magic: "CATT".into(),
        version: CATT_VERSION,
        model_id: stack.info.model_id.clone(),
        prompt_kind: stack.prompt_kind(),
        prompt_text: stack.info.prompt_text.clone(),
        grid_h,
        grid_w,
        layers: stack.layers().to_vec(),
        steps: stack.steps().to_vec(),
        generated_tokens: stack.info.generated_tokens.clone(),
        payload_dtype: PAYLOAD_DTYPE.into(),
        head_aggregation: stack.info.head_aggregation.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let n = stack.maps().len() * stack.n_tokens();
    let mut out = Vec::with_capacity(16 + json.len() + 4 * n);
    out.extend_from_slice(CATT_MAGIC);
    out.extend_from_slice(&CATT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for m in stack.maps() {
        for w in m.weights() {
            out.extend_from_slice(&w.to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8], DumpError> {
    if bytes.len() < n {
        return Err(DumpError::Truncated {
            expected: n,
            actual: bytes.len(),
        });
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn read_dump(bytes: &[u8]) -> Result<ParsedDump, DumpError> {
    let mut rest = bytes;
    let magic: [u8; 4] = take(&mut rest, 4)?.try_into().unwrap();
    if &magic != CATT_MAGIC {
        return Err(DumpError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(take(&mut rest, 4)?.try_into().unwrap());
    if version != CATT_VERSION {
        return Err(DumpError::UnsupportedVersion(version));
    }
    let header_len = u64::from_le_bytes(take(&mut rest, 8)?.try_into().unwrap());
    let header_len = usize::try_from(header_len)
        .map_err(|_| DumpError::HeaderField(format!("header length {header_len}")))?;
    let header: DumpHeader = serde_json::from_slice(take(&mut rest, header_len)?)?;

    if header.magic != "CATT" {
        return Err(DumpError::HeaderField(format!("magic {:?}", header.magic)));
    }
    if header.version != version {
        return Err(DumpError::HeaderField(format!(
            "header version {} differs from container version {version}",
            header.version
        )));
    }
    if header.payload_dtype != PAYLOAD_DTYPE {
        return Err(DumpError::HeaderField(format!(
            "payload_dtype {:?}",
            header.payload_dtype
        )));
    }
    let grid = (header.grid_h, header.grid_w);
    check_layout(grid, &header.layers, &header.steps)?;

    let per_map = header.grid_h * header.grid_w;
    let n_maps = header.layers.len() * header.steps.len();
    let expected = n_maps * per_map;
    if rest.len() < expected * 4 {
        return Err(DumpError::Truncated {
            expected,
            actual: rest.len() / 4,
        });
    }
    if rest.len() > expected * 4 {
        return Err(DumpError::TrailingBytes(rest.len() - expected * 4));
    }

    let mut floats = rest
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut maps = Vec::with_capacity(n_maps);
    let mut warnings = Vec::new();
    for &layer in &header.layers {
        for &step in &header.steps {
            let weights: Vec<f32> = floats.by_ref().take(per_map).collect();
            let map = AttentionMap::new(layer, step, header.grid_h, header.grid_w, weights)?;
            let sum = map.sum();
            if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
                let w = DumpWarning { layer, step, sum };
                log::warn!("{w}");
                warnings.push(w);
                maps.push(map.renormalized());
            } else {
                maps.push(map);
            }
        }
    }

    let info = StackInfo {
        model_id: header.model_id,
        prompt_text: header.prompt_text,
        generated_tokens: header.generated_tokens,
        head_aggregation: header.head_aggregation,
    };
    let stack = AttentionStack::new(
        info,
        header.prompt_kind,
        grid,
        header.layers,
        header.steps,
        maps,
    )?;
    Ok(ParsedDump { stack, warnings })
}

pub fn read_dump_file(path: impl AsRef<Path>) -> Result<ParsedDump, DumpError> {
    read_dump(&std::fs::read(path)?)
}

pub fn write_dump_file(path: impl AsRef<Path>, stack: &AttentionStack) -> std::io::Result<()> {
    std::fs::write(path, write_dump(stack))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_stack() -> AttentionStack {
        let info = StackInfo {
            model_id: "test/model".into(),
            prompt_text: "What color is the car?".into(),
            generated_tokens: vec!["Red".into(), ".".into()],
            head_aggregation: Some("mean".into()),
        };
        AttentionStack::from_fn(
            info,
            PromptKind::Question,
            (2, 3),
            vec![1, 4],
            vec![0, 1],
            |l, t| {
                let w: Vec<f64> = (0..6).map(|i| 1.0 + (i as f64) * (l + t) as f64).collect();
                AttentionMap::from_weights(l, t, 2, 3, &w)
            },
        )
        .unwrap()
    }

    fn header_of(bytes: &[u8]) -> (DumpHeader, usize) {
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        (
            serde_json::from_slice(&bytes[16..16 + len]).unwrap(),
            16 + len,
        )
    }

    fn with_header(header: &DumpHeader, payload: &[u8]) -> Vec<u8> {
        let json = serde_json::to_vec(header).unwrap();
        let mut out = b"CATT".to_vec();
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn round_trip_is_exact() {
        let stack = sample_stack();
        let bytes = write_dump(&stack);
        let parsed = read_dump(&bytes).unwrap();
        assert!(parsed.warnings.is_empty());
        assert_eq!(parsed.stack, stack);
        assert_eq!(write_dump(&parsed.stack), bytes);
    }

    #[test]
    fn container_prefix_layout() {
        let bytes = write_dump(&sample_stack());
        assert_eq!(&bytes[..4], b"CATT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let (header, payload_at) = header_of(&bytes);
        assert_eq!(header.payload_dtype, "float32-le");
        assert_eq!(header.layers, vec![1, 4]);
        assert_eq!(bytes.len() - payload_at, 2 * 2 * 6 * 4);
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = write_dump(&sample_stack());
        bytes[0] = b'X';
        assert!(matches!(read_dump(&bytes), Err(DumpError::BadMagic(_))));
        let mut bytes = write_dump(&sample_stack());
        bytes[4] = 2;
        assert!(matches!(
            read_dump(&bytes),
            Err(DumpError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn one_float_short_is_truncation() {
        let bytes = write_dump(&sample_stack());
        let short = &bytes[..bytes.len() - 4];
        assert!(matches!(
            read_dump(short),
            Err(DumpError::Truncated {
                expected: 24,
                actual: 23
            })
        ));
        assert!(matches!(
            read_dump(&bytes[..10]),
            Err(DumpError::Truncated { .. })
        ));
        let mut long = bytes.clone();
        long.extend_from_slice(&[0, 0, 0, 0]);
        assert!(matches!(read_dump(&long), Err(DumpError::TrailingBytes(4))));
    }

    #[test]
    fn step_gap_is_contiguity_error() {
        let bytes = write_dump(&sample_stack());
        let (mut header, at) = header_of(&bytes);
        header.steps = vec![0, 2];
        let forged = with_header(&header, &bytes[at..]);
        assert!(matches!(
            read_dump(&forged),
            Err(DumpError::NonContiguousSteps(_))
        ));
    }

    #[test]
    fn nan_and_negative_weights_are_distinct_errors() {
        let bytes = write_dump(&sample_stack());
        let (header, at) = header_of(&bytes);
        let mut payload = bytes[at..].to_vec();
        payload[8..12].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            read_dump(&with_header(&header, &payload)),
            Err(DumpError::NonFiniteWeight {
                layer: 1,
                step: 0,
                index: 2
            })
        ));
        let mut payload = bytes[at..].to_vec();
        payload[24..28].copy_from_slice(&(-0.5f32).to_le_bytes());
        assert!(matches!(
            read_dump(&with_header(&header, &payload)),
            Err(DumpError::NegativeWeight {
                layer: 1,
                step: 1,
                index: 0
            })
        ));
    }

    #[test]
    fn off_sum_maps_are_renormalized_with_warning() {
        let bytes = write_dump(&sample_stack());
        let (header, at) = header_of(&bytes);
        let mut payload = bytes[at..].to_vec();
        for c in payload[..24].chunks_exact_mut(4) {
            let v = f32::from_le_bytes(c.try_into().unwrap()) * 2.0;
            c.copy_from_slice(&v.to_le_bytes());
        }
        let parsed = read_dump(&with_header(&header, &payload)).unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        assert_eq!((parsed.warnings[0].layer, parsed.warnings[0].step), (1, 0));
        assert!((parsed.stack.get(1, 0).unwrap().sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn small_float_drift_is_kept_verbatim() {
        let bytes = write_dump(&sample_stack());
        let (header, at) = header_of(&bytes);
        let mut payload = bytes[at..].to_vec();
        let v = f32::from_le_bytes(payload[..4].try_into().unwrap()) + 1e-4;
        payload[..4].copy_from_slice(&v.to_le_bytes());
        let parsed = read_dump(&with_header(&header, &payload)).unwrap();
        assert!(parsed.warnings.is_empty());
        assert_eq!(parsed.stack.get(1, 0).unwrap().weights()[0], v);
    }
}
