use std::str::FromStr;

use crate::wire::{flags, KSpaceReadout};

use super::StageError;

/// Readout dimension whose advance releases the buffered data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TriggerDimension {
    #[default]
    Slice,
    Phase,
    Repetition,
    /// Buffer everything until end of stream.
    None,
}

impl TriggerDimension {
    pub fn key(self, r: &KSpaceReadout) -> u32 {
        match self {
            TriggerDimension::Slice => r.header.slice_idx as u32,
            TriggerDimension::Phase => r.header.phase_idx as u32,
            TriggerDimension::Repetition => r.header.repetition_idx as u32,
            TriggerDimension::None => 0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TriggerDimension::Slice => "slice",
            TriggerDimension::Phase => "phase",
            TriggerDimension::Repetition => "repetition",
            TriggerDimension::None => "none",
        }
    }
}

impl FromStr for TriggerDimension {
    type Err = StageError;

    fn from_str(s: &str) -> Result<Self, StageError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "slice" => Ok(TriggerDimension::Slice),
            "phase" => Ok(TriggerDimension::Phase),
            "repetition" => Ok(TriggerDimension::Repetition),
            "none" => Ok(TriggerDimension::None),
            _ => Err(StageError::BadProperty { property: "trigger_dimension", value: s.into() }),
        }
    }
}

/// Readouts sharing one value of the trigger dimension, in arrival order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KSpaceBucket {
    pub key: u32,
    pub readouts: Vec<KSpaceReadout>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BucketExtents {
    pub klines: usize,
    pub phases: usize,
    pub coils: usize,
    pub samples: usize,
}

impl KSpaceBucket {
    pub fn new(key: u32) -> Self {
        Self { key, readouts: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.readouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.readouts.is_empty()
    }

    pub fn extents(&self) -> BucketExtents {
        self.readouts.iter().fold(BucketExtents::default(), |e, r| BucketExtents {
            klines: e.klines.max(r.header.kline_idx as usize + 1),
            phases: e.phases.max(r.header.phase_idx as usize + 1),
            coils: e.coils.max(r.header.num_coils as usize),
            samples: e.samples.max(r.header.num_samples as usize),
        })
    }
}

/// Dimension-triggered k-space buffer.
#[derive(Debug, Default)]
pub struct Trigger {
    dimension: TriggerDimension,
    open: Option<KSpaceBucket>,
    last_key: Option<u32>,
}

impl Trigger {
    pub fn new(dimension: TriggerDimension) -> Self {
        Self { dimension, open: None, last_key: None }
    }

    pub fn dimension(&self) -> TriggerDimension {
        self.dimension
    }

    pub fn buffered(&self) -> usize {
        self.open.as_ref().map_or(0, |b| b.len())
    }

    /// Buffer one readout. Returns the previous bucket when the readout opens a new key.
    pub fn ingest(&mut self, readout: KSpaceReadout) -> Result<Option<KSpaceBucket>, StageError> {
        let key = self.dimension.key(&readout);
        if let Some(previous) = self.last_key {
            if key < previous {
                return Err(StageError::DecreasingKey {
                    dimension: self.dimension.as_str(),
                    previous,
                    got: key,
                });
            }
        }
        self.last_key = Some(key);
        let released = match &self.open {
            Some(b) if b.key != key => self.open.take(),
            _ => None,
        };
        self.open.get_or_insert_with(|| KSpaceBucket::new(key)).readouts.push(readout);
        Ok(released)
    }

    /// End of stream: release whatever is buffered.
    pub fn finish(&mut self) -> Option<KSpaceBucket> {
        self.open.take()
    }
}

/// Split a bucket into imaging and calibration readouts, preserving order.
pub fn prepare_ref(bucket: KSpaceBucket) -> (KSpaceBucket, KSpaceBucket) {
    let key = bucket.key;
    let (calibration, imaging): (Vec<_>, Vec<_>) = bucket
        .readouts
        .into_iter()
        .partition(|r| r.header.has_flag(flags::CALIBRATION));
    (
        KSpaceBucket { key, readouts: imaging },
        KSpaceBucket { key, readouts: calibration },
    )
}
