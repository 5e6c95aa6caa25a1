use std::collections::BTreeMap;
use std::str::FromStr;

use log::warn;

use crate::wire::{ImageFrame, Pixels};

use super::StageError;

/// Meta `role` value marking a label frame that carries ground truth for the
/// image with the same slice and phase. Such frames ride along with the
/// group instead of taking part in grouping.
pub const GROUND_TRUTH_ROLE: &str = "ground_truth";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupBy {
    #[default]
    Slice,
    Series,
    All,
}

impl GroupBy {
    fn key(self, f: &ImageFrame) -> u32 {
        match self {
            GroupBy::Slice => f.header.slice_idx as u32,
            GroupBy::Series => f.header.series_idx as u32,
            GroupBy::All => 0,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            GroupBy::Slice => "slice",
            GroupBy::Series => "series",
            GroupBy::All => "all",
        }
    }
}

impl FromStr for GroupBy {
    type Err = StageError;

    fn from_str(s: &str) -> Result<Self, StageError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "slice" => Ok(GroupBy::Slice),
            "series" => Ok(GroupBy::Series),
            "all" => Ok(GroupBy::All),
            _ => Err(StageError::BadProperty { property: "group_by", value: s.into() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageGroup {
    pub key: u32,
    pub frames: Vec<ImageFrame>,
    /// Ground-truth frames matched to `frames` by (slice, phase), in frame order.
    pub attachments: Vec<ImageFrame>,
    /// False when the group has fewer frames than the first group of the stream.
    pub complete: bool,
}

impl ImageGroup {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Ground truth for frame `i`, if one was attached.
    pub fn attachment_for(&self, i: usize) -> Option<&ImageFrame> {
        let h = &self.frames.get(i)?.header;
        self.attachments
            .iter()
            .find(|a| a.header.slice_idx == h.slice_idx && a.header.phase_idx == h.phase_idx)
    }
}

pub(crate) fn is_ground_truth(f: &ImageFrame) -> bool {
    matches!(f.pixels, Pixels::Label(_)) && f.meta.get("role") == Some(GROUND_TRUTH_ROLE)
}

/// Buffers images until the grouping key advances.
#[derive(Debug, Default)]
pub struct ImageGrouper {
    by: GroupBy,
    open: Option<ImageGroup>,
    last_key: Option<u32>,
    expected_len: Option<usize>,
    pending: BTreeMap<(u16, u16), ImageFrame>,
}

impl ImageGrouper {
    pub fn new(by: GroupBy) -> Self {
        Self { by, ..Default::default() }
    }

    pub fn ingest(&mut self, frame: ImageFrame) -> Result<Option<ImageGroup>, StageError> {
        if is_ground_truth(&frame) {
            self.pending.insert((frame.header.slice_idx, frame.header.phase_idx), frame);
            return Ok(None);
        }
        let key = self.by.key(&frame);
        if let Some(previous) = self.last_key {
            if key < previous {
                return Err(StageError::DecreasingKey { dimension: self.by.as_str(), previous, got: key });
            }
        }
        self.last_key = Some(key);
        let released = match &self.open {
            Some(g) if g.key != key => self.close(),
            _ => None,
        };
        self.open
            .get_or_insert_with(|| ImageGroup { key, ..Default::default() })
            .frames
            .push(frame);
        Ok(released)
    }

    pub fn finish(&mut self) -> Option<ImageGroup> {
        let group = self.close();
        if !self.pending.is_empty() {
            warn!("dropping {} unmatched ground-truth frames", self.pending.len());
            self.pending.clear();
        }
        group
    }

    fn close(&mut self) -> Option<ImageGroup> {
        let mut group = self.open.take()?;
        for f in &group.frames {
            if let Some(a) = self.pending.remove(&(f.header.slice_idx, f.header.phase_idx)) {
                group.attachments.push(a);
            }
        }
        let expected = *self.expected_len.get_or_insert(group.len());
        group.complete = group.len() >= expected;
        Some(group)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::frame;

    fn keys(g: &ImageGroup) -> Vec<(u16, u16)> {
        g.frames.iter().map(|f| (f.header.slice_idx, f.header.phase_idx)).collect()
    }

    #[test]
    fn slice_grouping_releases_on_third_frame() {
        let mut g = ImageGrouper::new(GroupBy::Slice);
        assert!(g.ingest(frame(0, 0, 0)).unwrap().is_none());
        assert!(g.ingest(frame(0, 0, 1)).unwrap().is_none());
        let out = g.ingest(frame(0, 1, 0)).unwrap().unwrap();
        assert_eq!(out.key, 0);
        assert_eq!(keys(&out), [(0, 0), (0, 1)]);
        assert_eq!(g.finish().unwrap().len(), 1);
    }

    #[test]
    fn group_all_emits_once() {
        let mut g = ImageGrouper::new(GroupBy::All);
        for i in 0..30 {
            assert!(g.ingest(frame(0, i % 3, i)).unwrap().is_none());
        }
        assert_eq!(g.finish().unwrap().len(), 30);
        assert!(g.finish().is_none());
    }

    #[test]
    fn decreasing_key_rejected() {
        let mut g = ImageGrouper::new(GroupBy::Series);
        g.ingest(frame(1, 0, 0)).unwrap();
        assert!(g.ingest(frame(0, 0, 0)).is_err());
    }

    #[test]
    fn ground_truth_attaches_regardless_of_order() {
        let gt = |slice, phase| {
            let mut f = frame(0, slice, phase);
            f.pixels = Pixels::Label(vec![1; 4]);
            f.meta.push("role", GROUND_TRUTH_ROLE);
            f
        };
        let mut g = ImageGrouper::new(GroupBy::Slice);
        // all ground truth first, as with an untriggered chain
        for s in 0..2 {
            g.ingest(gt(s, 0)).unwrap();
        }
        assert!(g.ingest(frame(0, 0, 0)).unwrap().is_none());
        let first = g.ingest(frame(0, 1, 0)).unwrap().unwrap();
        assert_eq!(first.attachments.len(), 1);
        assert!(first.attachment_for(0).is_some());
        let second = g.finish().unwrap();
        assert_eq!(second.attachments[0].header.slice_idx, 1);
    }

    #[test]
    fn short_trailing_group_marked_incomplete() {
        let mut g = ImageGrouper::new(GroupBy::Slice);
        g.ingest(frame(0, 0, 0)).unwrap();
        g.ingest(frame(0, 0, 1)).unwrap();
        assert!(g.ingest(frame(0, 1, 0)).unwrap().unwrap().complete);
        assert!(!g.finish().unwrap().complete);
    }
}
