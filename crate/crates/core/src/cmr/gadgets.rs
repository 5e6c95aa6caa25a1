use std::collections::BTreeMap;
use std::sync::Arc;

use log::{info, warn};

use crate::bridge::InferredGroup;
use crate::chain::{kinds, Gadget, GadgetContext, GadgetError, GadgetRegistry, Item, SessionStore};
use crate::wire::meta::keys;
use crate::wire::{ImageHeader, Meta};

use super::lax::{lax_biomarkers, view_geometry, LandmarkSet, View, ViewGeometry};
use super::perf::{
    extract_curve, find_rv_insertion, perfusion_reserve, ptt, split_endo_epi, split_sectors, Curve, PttMethod, Rotation,
    SectorAccumulator, SliceClass,
};
use super::report::{lax_document, perf_document, sax_document, PerfSummary};
use super::sax::sax_biomarkers;
use super::{labels, AnalysisError, SegmentationMask};

/// Frame meta telling flow-map frames from AIF frames in a perfusion scan.
pub const PERF_SERIES_META: &str = "perf_series";
pub const PERF_FLOW: &str = "flow";
pub const PERF_AIF: &str = "aif";
/// Frame meta with the slice class of a flow map.
pub const SLICE_CLASS_META: &str = "slice_class";

pub const FLAG_NO_PARTNER_SCAN: &str = "no linked scan for reserve";
pub const FLAG_NO_SEGMENT_17: &str = "16-sector model, no apical cap";

pub fn register(r: &mut GadgetRegistry) {
    r.register("sax_analysis", SaxAnalysisGadget::default);
    r.register("lax_analysis", LaxAnalysisGadget::default);
    r.register("perf_analysis", PerfAnalysisGadget::default);
}

/// Session facts every analysis gadget needs.
#[derive(Debug, Default, Clone)]
struct SessionInfo {
    key: Option<String>,
    store: Option<Arc<SessionStore>>,
    scan: BTreeMap<String, String>,
    heart_rate: Option<f64>,
    bsa: Option<f64>,
}

impl SessionInfo {
    fn from_context(ctx: &GadgetContext) -> Self {
        let s = ctx.session;
        let scan = [keys::HEART_RATE, keys::BSA, keys::RESPIRATORY, keys::SCAN_KIND]
            .iter()
            .filter_map(|k| s.get(k).map(|v| (k.to_string(), v.to_string())))
            .collect();
        if ctx.session_key().is_none() {
            warn!("{}: session has no {}; results will not be linked", ctx.gadget, keys::PATIENT_KEY);
        }
        Self {
            key: ctx.session_key().map(String::from),
            store: Some(Arc::clone(ctx.store)),
            scan,
            heart_rate: s.get_f64(keys::HEART_RATE),
            bsa: s.get_f64(keys::BSA),
        }
    }

    fn load(&self, kind: &str) -> Option<Vec<u8>> {
        self.store.as_ref()?.get(self.key.as_deref()?, kind)
    }

    fn save(&self, kind: &str, payload: Vec<u8>) {
        if let (Some(store), Some(key)) = (&self.store, &self.key) {
            store.put(key, kind, payload);
        }
    }
}

fn report(doc_json: String) -> Item {
    Item::Report(doc_json)
}

/// Short-axis volumetry over all slices of a cine.
#[derive(Debug, Default)]
pub struct SaxAnalysisGadget {
    session: SessionInfo,
    slices: BTreeMap<u16, Vec<SegmentationMask>>,
}

impl Gadget for SaxAnalysisGadget {
    fn configure(&mut self, ctx: &GadgetContext) -> Result<(), GadgetError> {
        self.session = SessionInfo::from_context(ctx);
        Ok(())
    }

    fn process(&mut self, item: Item, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        match item {
            Item::Inferred(InferredGroup { masks, .. }) => {
                for m in masks {
                    self.slices.entry(m.header.slice_idx).or_default().push(m);
                }
            }
            other => out.push(other),
        }
        Ok(())
    }

    fn flush(&mut self, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        if self.slices.is_empty() {
            return Ok(());
        }
        let stack: Vec<Vec<SegmentationMask>> = std::mem::take(&mut self.slices)
            .into_values()
            .map(|mut v| {
                v.sort_by_key(|m| m.header.phase_idx);
                v
            })
            .collect();
        let lax: Option<Vec<ViewGeometry>> = self.session.load(kinds::LAX_LANDMARKS).and_then(|b| match serde_json::from_slice(&b) {
            Ok(v) => Some(v),
            Err(e) => {
                warn!("ignoring unreadable long-axis artifacts: {e}");
                None
            }
        });
        let r = sax_biomarkers(&stack, lax.as_deref(), self.session.heart_rate, self.session.bsa)?;
        info!("sax: EF {:.1}% EDV {:.1} mL ESV {:.1} mL", r.values.ef_percent, r.values.edv_ml, r.values.esv_ml);
        out.push(report(sax_document(&r, self.session.scan.clone()).to_json()));
        Ok(())
    }
}

/// Landmark analysis per long-axis view; stores valve geometry for the
/// short-axis scan of the same session.
#[derive(Debug, Default)]
pub struct LaxAnalysisGadget {
    session: SessionInfo,
    views: BTreeMap<View, (ImageHeader, Vec<LandmarkSet>)>,
}

impl Gadget for LaxAnalysisGadget {
    fn configure(&mut self, ctx: &GadgetContext) -> Result<(), GadgetError> {
        self.session = SessionInfo::from_context(ctx);
        Ok(())
    }

    fn process(&mut self, item: Item, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        match item {
            Item::Inferred(g) => {
                for (i, ls) in g.landmarks.into_iter().enumerate() {
                    let h = g.group.frames[i].header;
                    ls.validate(&h)?;
                    self.views.entry(ls.view).or_insert_with(|| (h, Vec::new())).1.push(ls);
                }
            }
            other => out.push(other),
        }
        Ok(())
    }

    fn flush(&mut self, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        if self.views.is_empty() {
            return Ok(());
        }
        let mut reports = Vec::new();
        let mut geometry = Vec::new();
        for (_, (h, sets)) in std::mem::take(&mut self.views) {
            let r = lax_biomarkers(&sets, &h)?;
            geometry.push(view_geometry(&sets, &h, &r)?);
            info!("lax {}: GLS {:.1}% MAPSE {:.1} mm", r.view, r.gls_percent, r.mapse_mm);
            reports.push(r);
        }
        self.session.save(kinds::LAX_LANDMARKS, serde_json::to_vec(&geometry).expect("geometry serializes"));
        out.push(report(lax_document(&reports, self.session.scan.clone()).to_json()));
        Ok(())
    }
}

/// Sector flow statistics, AIF transit time and, when the partner scan of
/// the session is stored, perfusion reserve.
#[derive(Debug, Default)]
pub struct PerfAnalysisGadget {
    session: SessionInfo,
    stress: bool,
    rotation: Rotation,
    ptt_method: PttMethod,
    sectors: SectorAccumulator,
    flow_frames: usize,
    aif: Option<(Curve, Curve)>,
    flags: Vec<String>,
}

fn slice_class(meta: &Meta, position: usize) -> Result<SliceClass, AnalysisError> {
    match meta.get(SLICE_CLASS_META) {
        Some(v) => v.parse(),
        None => SliceClass::ALL
            .get(position)
            .copied()
            .ok_or_else(|| AnalysisError::Other(format!("flow map {position} has no slice class"))),
    }
}

impl PerfAnalysisGadget {
    fn add_flow(&mut self, g: &InferredGroup) -> Result<(), AnalysisError> {
        if g.masks.len() != g.group.len() {
            return Err(AnalysisError::Other(format!("{} masks for {} flow maps", g.masks.len(), g.group.len())));
        }
        for (i, (f, m)) in g.group.frames.iter().zip(&g.masks).enumerate() {
            let class = slice_class(&f.meta, self.flow_frames + i)?;
            let (_, insertion) = find_rv_insertion(m)?;
            let sectors = split_sectors(m, insertion, class, self.rotation)?;
            let layers = split_endo_epi(m)?;
            self.sectors.add(&f.pixels.to_f32(), &sectors, &layers)?;
        }
        self.flow_frames += g.group.len();
        Ok(())
    }

    fn add_aif(&mut self, g: &InferredGroup) -> Result<(), AnalysisError> {
        // blood pools are static over the series; the first mask serves all frames
        let mask = g.masks.first().ok_or_else(|| AnalysisError::Other("AIF series without mask".into()))?;
        let frames: Vec<(f64, Vec<f32>)> =
            g.group.frames.iter().map(|f| (f.header.trigger_time_ms as f64, f.pixels.to_f32())).collect();
        let rv = extract_curve(&frames, mask, labels::RV_BLOOD)?;
        let lv = extract_curve(&frames, mask, labels::LV_BLOOD)?;
        self.aif = Some((rv, lv));
        Ok(())
    }
}

impl Gadget for PerfAnalysisGadget {
    fn configure(&mut self, ctx: &GadgetContext) -> Result<(), GadgetError> {
        self.session = SessionInfo::from_context(ctx);
        self.stress = ctx.session.get(keys::SCAN_KIND).is_some_and(|k| k.contains("stress"));
        self.rotation = ctx.parse("rotation")?.unwrap_or_default();
        self.ptt_method = ctx.parse("ptt_method")?.unwrap_or_default();
        Ok(())
    }

    fn process(&mut self, item: Item, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        match item {
            Item::Inferred(g) => {
                let role = g.group.frames.first().and_then(|f| f.meta.get(PERF_SERIES_META)).unwrap_or(PERF_FLOW);
                if role == PERF_AIF {
                    self.add_aif(&g)?;
                } else {
                    self.add_flow(&g)?;
                }
            }
            other => out.push(other),
        }
        Ok(())
    }

    fn flush(&mut self, out: &mut Vec<Item>) -> Result<(), GadgetError> {
        if self.flow_frames == 0 && self.aif.is_none() {
            return Ok(());
        }
        let stats = self.sectors.finish();
        let (own, partner) = if self.stress {
            (kinds::PERF_STRESS_SECTORS, kinds::PERF_REST_SECTORS)
        } else {
            (kinds::PERF_REST_SECTORS, kinds::PERF_STRESS_SECTORS)
        };
        self.session.save(own, serde_json::to_vec(&stats.mean).expect("means serialize"));
        let partner: Option<Vec<Option<f64>>> = self.session.load(partner).and_then(|b| serde_json::from_slice(&b).ok());
        let mut flags = std::mem::take(&mut self.flags);
        flags.push(FLAG_NO_SEGMENT_17.into());
        let mpr = match &partner {
            Some(p) if self.stress => Some(perfusion_reserve(&stats.mean, p)),
            Some(p) => Some(perfusion_reserve(p, &stats.mean)),
            None => {
                flags.push(FLAG_NO_PARTNER_SCAN.into());
                None
            }
        };
        if mpr.as_ref().is_some_and(|m| m.iter().any(Option::is_none)) {
            flags.push("reserve absent for some sectors".into());
        }
        let ptt_s = match &self.aif {
            Some((rv, lv)) => match ptt(rv, lv, self.ptt_method) {
                Ok(v) => Some(v),
                Err(e) => {
                    flags.push(format!("no transit time: {e}"));
                    None
                }
            },
            None => None,
        };
        let summary = PerfSummary {
            stats: &stats,
            mpr: mpr.as_deref(),
            rv: self.aif.as_ref().map(|a| &a.0),
            lv: self.aif.as_ref().map(|a| &a.1),
            ptt_s,
            flags,
        };
        let kind = if self.stress { "perf_stress" } else { "perf_rest" };
        out.push(report(perf_document(kind, &summary, self.session.scan.clone()).to_json()));
        Ok(())
    }
}
