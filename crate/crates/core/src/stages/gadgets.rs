use log::warn;

use crate::chain::{Gadget, GadgetContext, GadgetError, GadgetRegistry, Item};
use crate::recon::{recon_bucket, ReconGeometry};

use super::{prepare_ref, GroupBy, ImageGrouper, StageError, Trigger, TriggerDimension};

pub fn register(r: &mut GadgetRegistry) {
    r.register("kspace_buffer", KSpaceBufferGadget::default);
    r.register("trigger", TriggerGadget::default);
    r.register("prepare_ref", || PrepareRefGadget);
    r.register("fft_recon", FftReconGadget::default);
    r.register("image_buffer", ImageBufferGadget::default);
}

/// Entry stage for k-space: checks that the readout shape stays fixed.
#[derive(Debug, Default)]
pub struct KSpaceBufferGadget {
    shape: Option<(u16, u16)>,
}

impl Gadget for KSpaceBufferGadget {
    fn configure(&mut self, _: &GadgetContext) -> Result<(), GadgetError> {
        Ok(())
    }

    fn process(&mut self, item: Item, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        if let Item::Readout(r) = &item {
            let shape = (r.header.num_samples, r.header.num_coils);
            match self.shape {
                None => self.shape = Some(shape),
                Some(s) if s != shape => {
                    return Err(StageError::ShapeChanged(format!(
                        "samples x coils {}x{} then {}x{}",
                        s.0, s.1, shape.0, shape.1
                    ))
                    .into())
                }
                _ => {}
            }
        }
        out.push(item);
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct TriggerGadget {
    trigger: Trigger,
}

impl Gadget for TriggerGadget {
    fn configure(&mut self, ctx: &GadgetContext) -> Result<(), GadgetError> {
        let dim = ctx.parse::<TriggerDimension>("trigger_dimension")?.unwrap_or_default();
        self.trigger = Trigger::new(dim);
        Ok(())
    }

    fn process(&mut self, item: Item, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        match item {
            Item::Readout(r) => {
                if let Some(b) = self.trigger.ingest(r)? {
                    out.push(Item::Bucket(b));
                }
            }
            other => out.push(other),
        }
        Ok(())
    }

    fn flush(&mut self, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        out.extend(self.trigger.finish().map(Item::Bucket));
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct PrepareRefGadget;

impl Gadget for PrepareRefGadget {
    fn configure(&mut self, _: &GadgetContext) -> Result<(), GadgetError> {
        Ok(())
    }

    fn process(&mut self, item: Item, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        out.push(match item {
            Item::Bucket(b) => {
                let (imaging, calibration) = prepare_ref(b);
                Item::ReconData { imaging, calibration }
            }
            other => other,
        });
        Ok(())
    }
}

/// Fully sampled FFT reconstruction of each incoming bucket.
#[derive(Debug, Default)]
pub struct FftReconGadget {
    geometry: ReconGeometry,
}

impl Gadget for FftReconGadget {
    fn configure(&mut self, ctx: &GadgetContext) -> Result<(), GadgetError> {
        self.geometry = ReconGeometry::from_session(ctx.session);
        Ok(())
    }

    fn process(&mut self, item: Item, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        let bucket = match item {
            Item::ReconData { imaging, calibration } => {
                if !calibration.is_empty() {
                    warn!("ignoring {} calibration readouts", calibration.len());
                }
                imaging
            }
            Item::Bucket(b) => b,
            other => {
                out.push(other);
                return Ok(());
            }
        };
        if bucket.is_empty() {
            return Ok(());
        }
        out.extend(recon_bucket(&bucket, &self.geometry)?.into_iter().map(Item::Image));
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct ImageBufferGadget {
    grouper: ImageGrouper,
}

impl Gadget for ImageBufferGadget {
    fn configure(&mut self, ctx: &GadgetContext) -> Result<(), GadgetError> {
        self.grouper = ImageGrouper::new(ctx.parse::<GroupBy>("group_by")?.unwrap_or_default());
        Ok(())
    }

    fn process(&mut self, item: Item, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        match item {
            Item::Image(f) => {
                if let Some(g) = self.grouper.ingest(f)? {
                    out.push(Item::Group(g));
                }
            }
            other => out.push(other),
        }
        Ok(())
    }

    fn flush(&mut self, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        out.extend(self.grouper.finish().map(Item::Group));
        Ok(())
    }
}
