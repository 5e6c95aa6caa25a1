use std::collections::BTreeMap;

use log::warn;

use crate::cmr::lax::{LandmarkSet, View, VIEW_META};
use crate::cmr::{rle_decode, SegmentationMask};
use crate::recon::label_from_probability;
use crate::stages::ImageGroup;
use crate::wire::{ImageFrame, Pixels};

use super::{BridgeError, Tensor};

/// Frame meta carrying a run-length encoded ground-truth mask.
pub const GT_MASK_META: &str = "gt_mask_rle";
/// Frame meta carrying one ground-truth landmark as `name,row,col`; repeated.
pub const GT_LANDMARK_META: &str = "gt_landmark";
/// Frame meta added to outgoing frames for each detected landmark.
pub const LANDMARK_META: &str = "landmark";

const INPUT_NAMES: [&str; 5] = ["frames", "trigger_times", "gt_mask", "gt_landmarks", "landmark_names"];

/// An image group together with the model outputs for its frames.
#[derive(Debug, Clone, Default)]
pub struct InferredGroup {
    pub group: ImageGroup,
    /// One per frame when the model segments, in frame order.
    pub masks: Vec<SegmentationMask>,
    /// One per frame when the model detects landmarks, in frame order.
    pub landmarks: Vec<LandmarkSet>,
}

fn grid(group: &ImageGroup) -> Result<(usize, usize), BridgeError> {
    let first = group.frames.first().ok_or_else(|| BridgeError::Shape("empty group".into()))?;
    let (rows, cols) = (first.header.rows, first.header.cols);
    if let Some(f) = group.frames.iter().find(|f| (f.header.rows, f.header.cols) != (rows, cols)) {
        return Err(BridgeError::Shape(format!(
            "frames are {rows}x{cols} and {}x{}",
            f.header.rows, f.header.cols
        )));
    }
    Ok((rows as usize, cols as usize))
}

fn ground_truth_mask(group: &ImageGroup, i: usize) -> Result<Option<Vec<u16>>, BridgeError> {
    if let Some(a) = group.attachment_for(i) {
        if let Pixels::Label(l) = &a.pixels {
            return Ok(Some(l.clone()));
        }
    }
    let f = &group.frames[i];
    match f.meta.get(GT_MASK_META) {
        Some(rle) => rle_decode(rle, f.header.pixel_count())
            .map(Some)
            .map_err(|e| BridgeError::Shape(format!("frame {i}: {e}"))),
        None => Ok(None),
    }
}

fn parse_landmark(value: &str) -> Option<(String, f64, f64)> {
    let mut parts = value.split(',').map(str::trim);
    let name = parts.next()?.to_string();
    let row = parts.next()?.parse().ok()?;
    let col = parts.next()?.parse().ok()?;
    (parts.next().is_none() && !name.is_empty()).then_some((name, row, col))
}

fn ground_truth_landmarks(f: &ImageFrame) -> Result<Vec<(String, f64, f64)>, BridgeError> {
    f.meta
        .get_all(GT_LANDMARK_META)
        .map(|v| parse_landmark(v).ok_or_else(|| BridgeError::Shape(format!("bad landmark meta {v:?}"))))
        .collect()
}

fn dims3(n: usize, rows: usize, cols: usize) -> [u32; 3] {
    [n as u32, rows as u32, cols as u32]
}

/// Model inputs for a group: `frames` f32 [N, rows, cols] and
/// `trigger_times` f32 [N], plus ground truth when every frame carries it.
pub fn group_to_tensors(group: &ImageGroup) -> Result<Vec<Tensor>, BridgeError> {
    let (rows, cols) = grid(group)?;
    let n = group.len();
    let mut pixels = Vec::with_capacity(n * rows * cols);
    for f in &group.frames {
        pixels.extend(f.pixels.to_f32());
    }
    let times: Vec<f32> = group.frames.iter().map(|f| f.header.trigger_time_ms).collect();
    let mut out = vec![
        Tensor::from_f32("frames", &dims3(n, rows, cols), &pixels)?,
        Tensor::from_f32("trigger_times", &[n as u32], &times)?,
    ];

    let masks = (0..n).map(|i| ground_truth_mask(group, i)).collect::<Result<Vec<_>, _>>()?;
    if masks.iter().all(Option::is_some) {
        let mut data = Vec::with_capacity(n * rows * cols);
        for m in masks.into_iter().flatten() {
            for v in m {
                data.push(u8::try_from(v).map_err(|_| BridgeError::Shape(format!("label {v} exceeds u8")))?);
            }
        }
        out.push(Tensor::from_u8("gt_mask", &dims3(n, rows, cols), &data)?);
    } else if masks.iter().any(Option::is_some) {
        warn!("ground-truth masks on only some frames of group {}; not forwarded", group.key);
    }

    let marks = group.frames.iter().map(ground_truth_landmarks).collect::<Result<Vec<_>, _>>()?;
    if marks.iter().all(|m| !m.is_empty()) {
        let names: Vec<&str> = marks[0].iter().map(|(n, _, _)| n.as_str()).collect();
        if marks.iter().any(|m| m.iter().map(|(n, _, _)| n.as_str()).ne(names.iter().copied())) {
            return Err(BridgeError::Shape("landmark names differ between frames".into()));
        }
        let coords: Vec<f32> = marks.iter().flatten().flat_map(|(_, r, c)| [*r as f32, *c as f32]).collect();
        out.push(Tensor::from_f32("gt_landmarks", &[n as u32, names.len() as u32, 2], &coords)?);
        let joined = names.join(",");
        out.push(Tensor::from_u8("landmark_names", &[joined.len() as u32], joined.as_bytes())?);
    }
    Ok(out)
}

/// `mask` u8 [N, rows, cols] from masks on a shared grid.
pub fn masks_to_tensor(masks: &[SegmentationMask]) -> Result<Tensor, BridgeError> {
    let first = masks.first().ok_or_else(|| BridgeError::Shape("no masks".into()))?;
    let (rows, cols) = (first.rows(), first.cols());
    let mut data = Vec::with_capacity(masks.len() * rows * cols);
    for m in masks {
        if (m.rows(), m.cols()) != (rows, cols) {
            return Err(BridgeError::Shape("masks differ in size".into()));
        }
        data.extend(m.labels.iter().map(|v| *v as u8));
    }
    Tensor::from_u8("mask", &dims3(masks.len(), rows, cols), &data)
}

fn expect_dims(t: &Tensor, want: &[u32]) -> Result<(), BridgeError> {
    if t.dims != want {
        return Err(BridgeError::Tensor { name: t.name.clone(), reason: format!("dims {:?}, expected {want:?}", t.dims) });
    }
    Ok(())
}

fn to_mask(f: &ImageFrame, labels: Vec<u16>) -> Result<SegmentationMask, BridgeError> {
    SegmentationMask::new(f.header, labels).map_err(|e| BridgeError::Shape(e.to_string()))
}

/// Interpret worker outputs for `group`.
///
/// Recognised outputs: `mask` u8 [N, rows, cols]; `prob` f32 [N, C, rows,
/// cols] (argmax with background below `threshold`); `landmarks` f32
/// [N, K, 2] with `landmark_names` (comma-separated UTF-8). Echoed input
/// tensors are ignored; any other name is an error.
pub fn artifacts_from_tensors(group: ImageGroup, tensors: Vec<Tensor>, threshold: f32) -> Result<InferredGroup, BridgeError> {
    let (rows, cols) = grid(&group)?;
    let n = group.len();
    let px = rows * cols;
    let mut masks = Vec::new();
    let mut coords: Option<Tensor> = None;
    let mut names: Option<Vec<String>> = None;
    for t in tensors {
        match t.name.as_str() {
            "mask" => {
                expect_dims(&t, &dims3(n, rows, cols))?;
                let data = t.to_u8()?;
                masks = group
                    .frames
                    .iter()
                    .zip(data.chunks_exact(px))
                    .map(|(f, c)| to_mask(f, c.iter().map(|v| *v as u16).collect()))
                    .collect::<Result<_, _>>()?;
            }
            "prob" => {
                let classes = t.dims.get(1).copied().unwrap_or(0);
                expect_dims(&t, &[n as u32, classes, rows as u32, cols as u32])?;
                let data = t.to_f32()?;
                let mut out = Vec::with_capacity(n);
                for (f, chunk) in group.frames.iter().zip(data.chunks_exact((classes as usize * px).max(1))) {
                    let planes: Vec<Vec<f32>> = chunk.chunks_exact(px).map(<[f32]>::to_vec).collect();
                    let labels = label_from_probability(&planes, threshold).map_err(|e| BridgeError::Shape(e.to_string()))?;
                    out.push(to_mask(f, labels)?);
                }
                masks = out;
            }
            "landmarks" => coords = Some(t),
            "landmark_names" => {
                let text = String::from_utf8(t.to_u8()?).map_err(|_| BridgeError::Protocol("landmark names not UTF-8".into()))?;
                names = Some(text.split(',').map(|s| s.trim().to_string()).collect());
            }
            other if INPUT_NAMES.contains(&other) => {}
            other => return Err(BridgeError::UnknownOutput(other.to_string())),
        }
    }
    let mut landmarks = Vec::new();
    if let Some(t) = coords {
        let names = names.ok_or_else(|| BridgeError::Shape("landmarks without landmark_names".into()))?;
        expect_dims(&t, &[n as u32, names.len() as u32, 2])?;
        let data = t.to_f32()?;
        for (i, f) in group.frames.iter().enumerate() {
            let view: View = f
                .meta
                .get(VIEW_META)
                .ok_or_else(|| BridgeError::Shape(format!("frame {i} has no view")))?
                .parse()
                .map_err(|e: crate::cmr::AnalysisError| BridgeError::Shape(e.to_string()))?;
            let base = i * names.len() * 2;
            let points: BTreeMap<String, (f64, f64)> = names
                .iter()
                .enumerate()
                .map(|(k, name)| (name.clone(), (data[base + 2 * k] as f64, data[base + 2 * k + 1] as f64)))
                .collect();
            landmarks.push(LandmarkSet {
                view,
                phase_idx: f.header.phase_idx,
                trigger_time_ms: f.header.trigger_time_ms as f64,
                points,
            });
        }
    }
    Ok(InferredGroup { group, masks, landmarks })
}
