use std::time::Duration;

use log::info;

use crate::chain::{Gadget, GadgetContext, GadgetError, Item};
use crate::stages::ImageGroup;

use super::worker::{DEFAULT_INFER_TIMEOUT, DEFAULT_LOAD_TIMEOUT};
use super::{artifacts_from_tensors, group_to_tensors, Device, ModelHandle, ModelSpec, WorkerClient, WorkerTarget, LANDMARK_META};

/// Role meta on mask frames emitted next to the analysed images.
pub const MASK_ROLE: &str = "mask";

const PARAM_PREFIX: &str = "param.";

/// Runs each image group through a model worker.
///
/// Properties: `model` (required), `device` (cpu|gpu), `worker_cmd`
/// (whitespace separated argv) or `worker_endpoint` (host:port),
/// `infer_timeout_ms`, `load_timeout_ms`, `threshold` for probability
/// outputs, and `param.<key>` forwarded to the worker on load.
#[derive(Debug)]
pub struct InferenceGadget {
    worker: Option<WorkerClient>,
    handle: Option<ModelHandle>,
    timeout: Duration,
    threshold: f32,
}

impl Default for InferenceGadget {
    fn default() -> Self {
        Self { worker: None, handle: None, timeout: DEFAULT_INFER_TIMEOUT, threshold: 0.5 }
    }
}

fn target(ctx: &GadgetContext) -> Result<WorkerTarget, GadgetError> {
    if let Some(ep) = ctx.prop("worker_endpoint") {
        return Ok(WorkerTarget::Endpoint(ep.to_string()));
    }
    let argv = match ctx.prop("worker_cmd") {
        Some(cmd) => cmd.split_whitespace().map(String::from).collect(),
        None => ctx.defaults.worker_cmd.clone().unwrap_or_default(),
    };
    if argv.is_empty() {
        return Err(GadgetError::Property { key: "worker_cmd".into(), reason: "no worker command configured".into() });
    }
    Ok(WorkerTarget::Command(argv))
}

impl InferenceGadget {
    fn run(&mut self, group: ImageGroup, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        let (Some(worker), Some(handle)) = (self.worker.as_mut(), self.handle.as_ref()) else {
            return Err(GadgetError::Other("inference gadget used before configure".into()));
        };
        let inputs = group_to_tensors(&group)?;
        let outputs = worker.infer(handle, inputs, self.timeout)?;
        let inferred = artifacts_from_tensors(group, outputs, self.threshold)?;
        for (i, f) in inferred.group.frames.iter().enumerate() {
            let mut f = f.clone();
            if let Some(ls) = inferred.landmarks.get(i) {
                for (name, (r, c)) in &ls.points {
                    f.meta.push(LANDMARK_META, format!("{name},{r},{c}"));
                }
            }
            out.push(Item::Image(f));
        }
        for m in &inferred.masks {
            let mut meta = crate::wire::Meta::new();
            meta.push("role", MASK_ROLE);
            out.push(Item::Image(m.to_frame(meta)));
        }
        out.push(Item::Inferred(inferred));
        Ok(())
    }
}

impl Gadget for InferenceGadget {
    fn configure(&mut self, ctx: &GadgetContext) -> Result<(), GadgetError> {
        let model = ctx
            .prop("model")
            .ok_or_else(|| GadgetError::Property { key: "model".into(), reason: "required".into() })?;
        let mut spec = ModelSpec::new(model);
        spec.device = ctx.parse::<Device>("device")?.unwrap_or(Device::Cpu);
        spec.load_timeout = ctx.parse::<u64>("load_timeout_ms")?.map_or(DEFAULT_LOAD_TIMEOUT, Duration::from_millis);
        spec.params = ctx
            .properties
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(PARAM_PREFIX).map(|k| (k.to_string(), v.clone())))
            .collect();
        self.timeout = ctx.parse::<u64>("infer_timeout_ms")?.map_or(DEFAULT_INFER_TIMEOUT, Duration::from_millis);
        self.threshold = ctx.parse("threshold")?.unwrap_or(0.5);
        let mut worker = WorkerClient::connect(&target(ctx)?)?;
        let handle = worker.load(&spec)?;
        info!("loaded {} on {} (worker pid {:?})", spec.model_id, spec.device, worker.pid());
        self.worker = Some(worker);
        self.handle = Some(handle);
        Ok(())
    }

    fn process(&mut self, item: Item, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        match item {
            Item::Group(g) => self.run(g, out),
            other => {
                out.push(other);
                Ok(())
            }
        }
    }
}
