//! Annotation documents (JSON) and flow-map dumps (TMLF binary).
//!
//! Annotation layout:
//!
//! ```json
//! {"format": "tml-annotations", "version": 1, "topology": "posetrack15",
//!  "frames": [{"frame_index": 0, "image_size": [256, 192],
//!              "poses": [{"track_id": 3,
//!                         "joints": [{"joint_index": 0, "x": 1.5, "y": 2.0,
//!                                     "confidence": 1.0, "visible": true}]}]}]}
//! ```
//!
//! Written canonically: keys sorted, joints by ascending index, floats in
//! shortest round-trip form, `track_id` omitted when absent, one trailing
//! newline.
//!
//! TMLF layout, all little-endian: `"TMLF"`, u16 version (1), u8 layout
//! (0 individual, 1 accumulated), u16 source channel count, u32 width,
//! u32 height, then every plane as f32, channel-major, x plane before y.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Map, Value};

use crate::encode::{ChannelLayout, FlowMapGrid};
use crate::error::{Result, TmlError};
use crate::pose::{FramePoses, JointCandidate, Pose, Sequence};
use crate::skeleton::{topology_by_name, SkeletonTopology};

pub const ANNOTATION_FORMAT: &str = "tml-annotations";
pub const ANNOTATION_VERSION: u64 = 1;
pub const TMLF_MAGIC: &[u8; 4] = b"TMLF";
pub const TMLF_VERSION: u16 = 1;
pub const TMLF_HEADER_LEN: usize = 17;

// ---------------------------------------------------------------- annotations

pub fn annotations_to_value(seq: &Sequence) -> Value {
    let frames: Vec<Value> = seq
        .frames
        .iter()
        .map(|f| {
            let poses: Vec<Value> = f
                .poses
                .iter()
                .map(|p| {
                    let joints: Vec<Value> = p
                        .joints
                        .iter()
                        .enumerate()
                        .filter_map(|(j, c)| {
                            c.map(|c| {
                                json!({"joint_index": j, "x": c.x, "y": c.y,
                                       "confidence": c.confidence, "visible": c.visible})
                            })
                        })
                        .collect();
                    let mut m = Map::new();
                    m.insert("joints".into(), Value::Array(joints));
                    if let Some(id) = p.track_id {
                        m.insert("track_id".into(), id.into());
                    }
                    Value::Object(m)
                })
                .collect();
            json!({"frame_index": f.frame_index, "image_size": [f.image_size.0, f.image_size.1], "poses": poses})
        })
        .collect();
    json!({
        "format": ANNOTATION_FORMAT,
        "version": ANNOTATION_VERSION,
        "topology": seq.topology.name,
        "frames": frames,
    })
}

/// Canonical text of a sequence.
pub fn annotations_to_string(seq: &Sequence) -> String {
    // serde_json's default map is ordered, so keys come out sorted
    let mut s = serde_json::to_string_pretty(&annotations_to_value(seq)).expect("json values always serialize");
    s.push('\n');
    s
}

pub fn write_annotations(seq: &Sequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    seq.validate().map_err(TmlError::InvalidSequence)?;
    std::fs::write(path, annotations_to_string(seq)).map_err(|e| TmlError::io(path, e))
}

/// Field-path cursor for error messages such as `frames[2].poses[0].x`.
struct At<'a> {
    path: String,
    value: &'a Value,
}

impl<'a> At<'a> {
    fn root(value: &'a Value) -> Self {
        At { path: String::new(), value }
    }

    fn err(&self, msg: impl Into<String>) -> TmlError {
        TmlError::parse(if self.path.is_empty() { "<root>" } else { &self.path }, msg)
    }

    fn field(&self, key: &str) -> Result<At<'a>> {
        let obj = self.value.as_object().ok_or_else(|| self.err("expected an object"))?;
        let path = if self.path.is_empty() { key.to_string() } else { format!("{}.{key}", self.path) };
        match obj.get(key) {
            Some(v) => Ok(At { path, value: v }),
            None => Err(TmlError::parse(path, "missing field")),
        }
    }

    fn opt_field(&self, key: &str) -> Result<Option<At<'a>>> {
        let obj = self.value.as_object().ok_or_else(|| self.err("expected an object"))?;
        Ok(obj.get(key).map(|v| At {
            path: format!("{}.{key}", self.path),
            value: v,
        }))
    }

    fn items(&self) -> Result<Vec<At<'a>>> {
        let arr = self.value.as_array().ok_or_else(|| self.err("expected an array"))?;
        Ok(arr
            .iter()
            .enumerate()
            .map(|(i, v)| At { path: format!("{}[{i}]", self.path), value: v })
            .collect())
    }

    fn f64(&self) -> Result<f64> {
        self.value.as_f64().ok_or_else(|| self.err("malformed number"))
    }

    fn u64(&self) -> Result<u64> {
        self.value.as_u64().ok_or_else(|| self.err("expected a non-negative integer"))
    }

    fn u32(&self) -> Result<u32> {
        u32::try_from(self.u64()?).map_err(|_| self.err("integer out of range"))
    }

    fn bool(&self) -> Result<bool> {
        self.value.as_bool().ok_or_else(|| self.err("expected a boolean"))
    }

    fn str(&self) -> Result<&'a str> {
        self.value.as_str().ok_or_else(|| self.err("expected a string"))
    }
}

fn parse_pose(p: &At, joint_count: usize) -> Result<Pose> {
    let mut pose = Pose::empty(joint_count);
    pose.track_id = p.opt_field("track_id")?.map(|v| v.u64()).transpose()?;
    for j in p.field("joints")?.items()? {
        let idx_at = j.field("joint_index")?;
        let idx = idx_at.u64()? as usize;
        if idx >= joint_count {
            return Err(idx_at.err(format!("joint index out of range ({idx} >= {joint_count})")));
        }
        if pose.joints[idx].is_some() {
            return Err(idx_at.err(format!("duplicate joint index {idx}")));
        }
        let c = JointCandidate {
            x: j.field("x")?.f64()?,
            y: j.field("y")?.f64()?,
            confidence: j.field("confidence")?.f64()?,
            visible: j.field("visible")?.bool()?,
        };
        pose.joints[idx] = Some(c);
    }
    Ok(pose)
}

/// Parses a document, resolving its topology name with `resolve`.
pub fn parse_annotations_with(
    text: &str,
    resolve: impl Fn(&str) -> Result<Arc<SkeletonTopology>>,
) -> Result<Sequence> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| TmlError::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    let root = At::root(&value);
    let fmt = root.field("format")?;
    if fmt.str()? != ANNOTATION_FORMAT {
        return Err(fmt.err(format!("expected \"{ANNOTATION_FORMAT}\"")));
    }
    let ver = root.field("version")?;
    if ver.u64()? != ANNOTATION_VERSION {
        return Err(ver.err(format!("unsupported version {}", ver.value)));
    }
    let topology = resolve(root.field("topology")?.str()?)?;
    let n = topology.joint_count();
    let mut seq = Sequence::new(topology);
    for f in root.field("frames")?.items()? {
        let size = f.field("image_size")?.items()?;
        if size.len() != 2 {
            return Err(f.field("image_size")?.err("expected [width, height]"));
        }
        let mut frame = FramePoses::new(f.field("frame_index")?.u64()?, (size[0].u32()?, size[1].u32()?));
        for p in f.field("poses")?.items()? {
            frame.poses.push(parse_pose(&p, n)?);
        }
        seq.frames.push(frame);
    }
    seq.validate().map_err(TmlError::InvalidSequence)?;
    Ok(seq)
}

/// Parses a document whose topology is one of the built-in ones.
pub fn parse_annotations(text: &str) -> Result<Sequence> {
    parse_annotations_with(text, |name| topology_by_name(name).map(Arc::new))
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<Sequence> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| TmlError::io(path, e))?;
    parse_annotations(&text)
}

/// Like [`read_annotations`] but also accepts `custom` by name.
pub fn read_annotations_with_topology(path: impl AsRef<Path>, custom: Arc<SkeletonTopology>) -> Result<Sequence> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| TmlError::io(path, e))?;
    parse_annotations_with(&text, |name| {
        if name == custom.name {
            Ok(custom.clone())
        } else {
            topology_by_name(name).map(Arc::new)
        }
    })
}

/// `scene.json` -> `scene.gt.json`.
pub fn gt_sidecar_path(path: impl AsRef<Path>) -> PathBuf {
    let path = path.as_ref();
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.gt.json"))
}

// ---------------------------------------------------------------- flow maps

pub fn flowmap_to_bytes(grid: &FlowMapGrid) -> Result<Vec<u8>> {
    let too_big = |what: &str| TmlError::Config(format!("flow map {what} does not fit the TMLF header"));
    let channels = u16::try_from(grid.source_channels()).map_err(|_| too_big("channel count"))?;
    let width = u32::try_from(grid.width()).map_err(|_| too_big("width"))?;
    let height = u32::try_from(grid.height()).map_err(|_| too_big("height"))?;
    let mut out = Vec::with_capacity(TMLF_HEADER_LEN + 4 * grid.planes().len());
    out.extend_from_slice(TMLF_MAGIC);
    out.extend_from_slice(&TMLF_VERSION.to_le_bytes());
    out.push(match grid.layout() {
        ChannelLayout::Individual => 0,
        ChannelLayout::Accumulated => 1,
    });
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    for v in grid.planes() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn flowmap_from_bytes(bytes: &[u8]) -> Result<FlowMapGrid> {
    if bytes.len() < 4 || &bytes[..4] != TMLF_MAGIC {
        return Err(TmlError::BadMagic);
    }
    if bytes.len() < TMLF_HEADER_LEN {
        return Err(TmlError::Truncated { expected: TMLF_HEADER_LEN, found: bytes.len() });
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = u16_at(4);
    if version != TMLF_VERSION {
        return Err(TmlError::UnsupportedVersion(version));
    }
    let layout = match bytes[6] {
        0 => ChannelLayout::Individual,
        1 => ChannelLayout::Accumulated,
        b => return Err(TmlError::parse("byte 6", format!("unknown layout byte {b}"))),
    };
    let channels = u16_at(7) as usize;
    let (width, height) = (u32_at(9) as usize, u32_at(13) as usize);
    let planes = match layout {
        ChannelLayout::Individual => 2 * channels,
        ChannelLayout::Accumulated => 2,
    };
    let expected = width
        .checked_mul(height)
        .and_then(|c| c.checked_mul(planes))
        .and_then(|c| c.checked_mul(4))
        .and_then(|c| c.checked_add(TMLF_HEADER_LEN))
        .ok_or_else(|| TmlError::parse("header", "grid dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(TmlError::Truncated { expected, found: bytes.len() });
    }
    let values = bytes[TMLF_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FlowMapGrid::from_planes(width, height, layout, channels, values)
}

pub fn write_flowmap(grid: &FlowMapGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, flowmap_to_bytes(grid)?).map_err(|e| TmlError::io(path, e))
}

pub fn read_flowmap(path: impl AsRef<Path>) -> Result<FlowMapGrid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| TmlError::io(path, e))?;
    flowmap_from_bytes(&bytes)
}
