//! Run directories, accuracy checks against ground truth and rendering.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chain::{resolve_chain, ChainDefaults};
use crate::cmr::render::{render_bullseye, render_curves, render_mosaic, Tile};
use crate::cmr::report::{tables, ReportDocument};
use crate::cmr::SegmentationMask;
use crate::wire::{encode_message, FrameReader, ImageFrame, Message};

use super::client::{RunRecord, TimingLog};
use super::phantom::{Pacing, PhantomParams};
use super::session::ScanKind;
use super::truth::GroundTruth;
use super::SimError;

pub const SENT_FILE: &str = "sent.icsp";
pub const RECEIVED_FILE: &str = "received.icsp";
pub const RUN_FILE: &str = "run.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const TIMING_FILE: &str = "timing.json";
pub const VERDICT_FILE: &str = "verdict.json";
pub const SUMMARY_FILE: &str = "summary.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub kind: ScanKind,
    pub chain: String,
    pub endpoint: String,
    pub pacing: Option<Pacing>,
    pub params: PhantomParams,
}

impl RunInfo {
    /// Whether the chain reconstructs per trigger group; `None` for chains
    /// that are not known locally.
    pub fn chain_triggers(&self) -> Option<bool> {
        let c = resolve_chain(&self.chain, &ChainDefaults::default()).ok()?;
        let trigger = c.gadgets.iter().find(|g| g.name == "trigger")?;
        Some(trigger.properties.get("trigger_dimension").is_some_and(|d| d.trim() != "none"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative, for EDV and ESV.
    pub volume_rel: f64,
    /// Percentage points.
    pub ef_pp: f64,
    pub mass_rel: f64,
    pub gls_pp: f64,
    pub mapse_mm: f64,
    pub tapse_mm: f64,
    pub flow_rel: f64,
    pub mpr_rel: f64,
    pub ptt_s: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            volume_rel: 0.03,
            ef_pp: 1.0,
            mass_rel: 0.1,
            gls_pp: 0.5,
            mapse_mm: 0.5,
            tapse_mm: 0.5,
            flow_rel: 0.1,
            mpr_rel: 0.1,
            ptt_s: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: ScanKind,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub first_result_ms: Option<f64>,
    pub last_acquisition_ms: Option<f64>,
    pub completion_ms: Option<f64>,
}

impl Verdict {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{} run: {}\n", self.kind, if self.passed { "PASS" } else { "FAIL" });
        for c in &self.checks {
            let _ = writeln!(s, "  [{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
        }
        s
    }
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn add(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.0.push(Check { name: name.into(), passed, detail: detail.into() });
    }

    fn close(&mut self, name: &str, got: Option<f64>, want: f64, tol: f64) {
        match got {
            Some(g) => self.add(name, (g - want).abs() <= tol, format!("{g:.4} vs {want:.4} (tol {tol:.4})")),
            None => self.add(name, false, "value missing from report"),
        }
    }

    fn rel(&mut self, name: &str, got: Option<f64>, want: f64, tol: f64) {
        self.close(name, got, want, tol * want.abs());
    }
}

fn report_of<'a>(docs: &'a [ReportDocument], kind: &str, c: &mut Checks) -> Option<&'a ReportDocument> {
    let d = docs.iter().find(|d| d.kind == kind);
    c.add(format!("report {kind}"), d.is_some(), if d.is_some() { "present" } else { "missing" });
    d
}

fn table<'a>(doc: &'a ReportDocument, name: &str, c: &mut Checks) -> Option<&'a crate::cmr::report::Table> {
    let t = doc.table(name);
    if t.is_none() {
        c.add(format!("table {name}"), false, "missing");
    }
    t
}

fn role(f: &ImageFrame) -> Option<&str> {
    f.meta.get("role")
}

pub fn parse_reports(record: &RunRecord) -> Vec<ReportDocument> {
    record.reports().filter_map(|r| ReportDocument::from_json(r).ok()).collect()
}

/// Compare a run against ground truth.
pub fn verify_run(info: &RunInfo, truth: &GroundTruth, record: &RunRecord, tol: &Tolerances) -> Verdict {
    let mut c = Checks::default();
    let docs = parse_reports(record);
    let t = &record.timing;
    c.add("server closed", record.server_closed, if record.server_closed { "CLOSE received" } else { "no CLOSE" });
    c.add("timestamps monotone", t.is_monotone(), format!("{} sent, {} received", t.sent.len(), t.received.len()));
    let errors: Vec<&str> = record.texts().collect();
    c.add("no server messages", errors.is_empty(), errors.join(" | "));
    match truth.kind {
        ScanKind::Sax => verify_sax(info, truth, record, &docs, tol, &mut c),
        ScanKind::Lax => verify_lax(truth, &docs, tol, &mut c),
        ScanKind::PerfRest | ScanKind::PerfStress => verify_perf(truth, &docs, tol, &mut c),
    }
    let ms = |v: Option<u64>| v.map(|x| x as f64 / 1000.0);
    Verdict {
        kind: truth.kind,
        passed: c.0.iter().all(|x| x.passed),
        checks: c.0,
        first_result_ms: ms(t.first_result_us()),
        last_acquisition_ms: ms(t.last_acquisition_us()),
        completion_ms: t.completion_ms(),
    }
}

fn verify_sax(info: &RunInfo, truth: &GroundTruth, record: &RunRecord, docs: &[ReportDocument], tol: &Tolerances, c: &mut Checks) {
    let Some(st) = &truth.sax else { return c.add("truth", false, "no short-axis truth") };
    let recon = record
        .received
        .iter()
        .filter(|m| matches!(m, Message::Image(f) if role(f) == Some("recon")))
        .count();
    c.add("recon frames", recon == st.recon_frames, format!("{recon} received, {} expected", st.recon_frames));
    if let (Some(_), Some(triggers)) = (info.pacing, info.chain_triggers()) {
        let t = &record.timing;
        match (t.first_image_us(), t.first_result_us(), t.last_acquisition_us()) {
            (Some(img), _, Some(acq)) if triggers => {
                c.add("overlap", img < acq, format!("first image {img} us, last acquisition {acq} us"))
            }
            (_, Some(res), Some(acq)) if !triggers => {
                c.add("no overlap", res > acq, format!("first result {res} us, last acquisition {acq} us"))
            }
            _ => c.add("overlap", false, "missing timestamps"),
        }
    }
    let Some(doc) = report_of(docs, "sax", c) else { return };
    if let Some(f) = table(doc, tables::SAX_FUNCTION, c) {
        c.rel("EDV", f.lookup("EDV (ml)", "Value"), st.edv_ml, tol.volume_rel);
        c.rel("ESV", f.lookup("ESV (ml)", "Value"), st.esv_ml, tol.volume_rel);
        c.close("EF", f.lookup("EF (%)", "Value"), st.ef_percent, tol.ef_pp);
        c.rel("MASS", f.lookup("MASS (g)", "Value"), st.mass_g, tol.mass_rel);
        if let Some(s) = table(doc, tables::SAX_SLICES, c) {
            for (col, key) in [("edv_ml", "EDV (ml)"), ("esv_ml", "ESV (ml)")] {
                let sum: f64 = s.numbers(col).iter().sum();
                let total = f.lookup(key, "Value").unwrap_or(f64::NAN);
                let ok = (sum - total).abs() <= 1e-9 * total.abs().max(1.0);
                c.add(format!("slice sum {col}"), ok, format!("{sum} vs {total}"));
            }
        }
    }
    // neighbouring phases of a smooth cycle differ by less than a voxel
    // layer, so one phase either way counts as a match
    let n = info.params.n_phases as f64;
    let near = |got: Option<f64>, want: usize| {
        got.is_some_and(|g| {
            let d = (g - want as f64).rem_euclid(n);
            d.min(n - d) <= 1.0
        })
    };
    let ed = doc.fields.get("ed_phase").copied();
    let es = doc.fields.get("es_phase").copied();
    c.add(
        "ED/ES phases",
        near(ed, st.ed_phase) && near(es, st.es_phase),
        format!("{ed:?}/{es:?} vs {}/{}", st.ed_phase, st.es_phase),
    );
}

fn verify_lax(truth: &GroundTruth, docs: &[ReportDocument], tol: &Tolerances, c: &mut Checks) {
    let Some(lt) = &truth.lax else { return c.add("truth", false, "no long-axis truth") };
    let Some(doc) = report_of(docs, "lax", c) else { return };
    for v in &lt.views {
        let name = match v.view {
            crate::cmr::lax::View::Ch4 => tables::LAX_CH4,
            crate::cmr::lax::View::Ch2 => tables::LAX_CH2,
        };
        let Some(t) = table(doc, name, c) else { continue };
        c.close(&format!("{} GLS", v.view), t.lookup("GLS (%)", "Value"), v.gls_percent, tol.gls_pp);
        c.close(&format!("{} MAPSE", v.view), t.lookup("MAPSE (mm)", "Value"), v.mapse_mm, tol.mapse_mm);
        if let Some(tapse) = v.tapse_mm {
            c.close(&format!("{} TAPSE", v.view), t.lookup("TAPSE (mm)", "Value"), tapse, tol.tapse_mm);
        }
    }
}

fn sector_values(t: &crate::cmr::report::Table, column: &str) -> Vec<Option<f64>> {
    let j = t.column(column);
    t.rows.iter().map(|r| j.and_then(|j| r.get(j)?.as_f64())).collect()
}

fn verify_perf(truth: &GroundTruth, docs: &[ReportDocument], tol: &Tolerances, c: &mut Checks) {
    let Some(pt) = &truth.perf else { return c.add("truth", false, "no perfusion truth") };
    let Some(doc) = report_of(docs, truth.kind.as_str(), c) else { return };
    if let Some(t) = table(doc, tables::PERF_SECTORS, c) {
        let got = sector_values(t, "mean");
        let bad: Vec<String> = pt
            .flows
            .iter()
            .enumerate()
            .filter(|(k, want)| !got.get(*k).copied().flatten().is_some_and(|g| (g - *want).abs() <= tol.flow_rel * want.abs()))
            .map(|(k, want)| format!("sector {}: {:?} vs {want:.3}", k + 1, got.get(k).copied().flatten()))
            .collect();
        c.add("sector flows", bad.is_empty() && got.len() == pt.flows.len(), bad.join("; "));
    }
    if let Some(t) = doc.table(tables::PERF_MPR) {
        let got = sector_values(t, "mpr");
        let bad: Vec<String> = pt
            .mpr
            .iter()
            .enumerate()
            .filter(|(k, want)| !got.get(*k).copied().flatten().is_some_and(|g| (g - *want).abs() <= tol.mpr_rel * want.abs()))
            .map(|(k, want)| format!("sector {}: {:?} vs {want:.3}", k + 1, got.get(k).copied().flatten()))
            .collect();
        c.add("sector reserve", bad.is_empty(), bad.join("; "));
    }
    c.close("PTT", doc.fields.get("ptt_s").copied(), pt.ptt_s, tol.ptt_s);
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), SimError> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, v).map_err(|e| SimError::Io(e.into()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SimError> {
    let f = BufReader::new(File::open(path).map_err(|e| SimError::Artifact(format!("{}: {e}", path.display())))?);
    serde_json::from_reader(f).map_err(|e| SimError::Artifact(format!("{}: {e}", path.display())))
}

/// Write everything `verify` needs into `dir`. The sent stream is written
/// by the client while it runs.
pub fn save_run(dir: &Path, info: &RunInfo, truth: &GroundTruth, record: &RunRecord) -> Result<(), SimError> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(RECEIVED_FILE))?);
    for m in &record.received {
        w.write_all(&encode_message(m)?)?;
    }
    w.flush()?;
    write_json(&dir.join(RUN_FILE), info)?;
    write_json(&dir.join(TRUTH_FILE), truth)?;
    write_json(&dir.join(TIMING_FILE), &record.timing)?;
    for (i, doc) in parse_reports(record).iter().enumerate() {
        write_json(&dir.join(format!("report_{i}_{}.json", doc.kind)), doc)?;
    }
    Ok(())
}

pub fn load_run(dir: &Path) -> Result<(RunInfo, GroundTruth, RunRecord), SimError> {
    let info: RunInfo = read_json(&dir.join(RUN_FILE))?;
    let truth: GroundTruth = read_json(&dir.join(TRUTH_FILE))?;
    let timing: TimingLog = read_json(&dir.join(TIMING_FILE))?;
    let path = dir.join(RECEIVED_FILE);
    let f = File::open(&path).map_err(|e| SimError::Artifact(format!("{}: {e}", path.display())))?;
    let mut reader = FrameReader::new(BufReader::new(f));
    let mut received = Vec::new();
    while let Some(m) = reader.next_message().map_err(|e| SimError::Artifact(format!("{}: {e}", path.display())))? {
        received.push(m);
    }
    let server_closed = received.last() == Some(&Message::Close);
    Ok((info, truth, RunRecord { timing, received, server_closed }))
}

pub fn write_verdict(dir: &Path, v: &Verdict) -> Result<(), SimError> {
    write_json(&dir.join(VERDICT_FILE), v)?;
    fs::write(dir.join(SUMMARY_FILE), v.summary())?;
    Ok(())
}

fn images(record: &RunRecord) -> impl Iterator<Item = &ImageFrame> {
    record.received.iter().filter_map(|m| match m {
        Message::Image(f) => Some(f),
        _ => None,
    })
}

/// Mosaic of the first phase of every slice/series with contours, report
/// curves and bullseyes, as PNG files in `dir`.
pub fn render_run(dir: &Path, record: &RunRecord) -> Result<Vec<PathBuf>, SimError> {
    let mut written = Vec::new();
    let masks: Vec<SegmentationMask> = images(record)
        .filter(|f| role(f) == Some(crate::bridge::MASK_ROLE))
        .filter_map(|f| SegmentationMask::from_frame(f).ok())
        .collect();
    let mut seen = std::collections::BTreeSet::new();
    let frames: Vec<&ImageFrame> = images(record)
        .filter(|f| role(f) != Some(crate::bridge::MASK_ROLE))
        .filter(|f| seen.insert((f.header.series_idx, f.header.slice_idx)))
        .collect();
    let mut by_size: std::collections::BTreeMap<(u16, u16), Vec<Tile>> = Default::default();
    for f in frames {
        let h = f.header;
        let mask = masks.iter().find(|m| {
            let mh = m.header;
            (mh.series_idx, mh.slice_idx, mh.phase_idx, mh.rows, mh.cols) == (h.series_idx, h.slice_idx, h.phase_idx, h.rows, h.cols)
        });
        by_size.entry((h.rows, h.cols)).or_default().push(Tile {
            frame: f,
            mask,
            caption: format!("S{} {}", h.slice_idx, f.meta.get(crate::cmr::lax::VIEW_META).unwrap_or("")),
            lines: Vec::new(),
        });
    }
    for (i, tiles) in by_size.values().enumerate() {
        let path = dir.join(format!("mosaic_{i}.png"));
        render_mosaic(tiles).map_err(|e| SimError::Artifact(e.to_string()))?.save_png(&path)?;
        written.push(path);
    }
    for doc in parse_reports(record) {
        for curve in &doc.curves {
            let path = dir.join(format!("curve_{}_{}.png", doc.kind, curve.name));
            render_curves(&[(&curve.x, &curve.y)], 320, 200).save_png(&path)?;
            written.push(path);
        }
        for b in &doc.bullseyes {
            let path = dir.join(format!("bullseye_{}_{}.png", doc.kind, b.name));
            render_bullseye(&b.values, 256).save_png(&path)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmr::report::Table;
    use serde_json::json;

    fn record_with(docs: &[ReportDocument]) -> RunRecord {
        let mut received: Vec<Message> = docs.iter().map(|d| Message::Report(d.to_json())).collect();
        received.push(Message::Close);
        RunRecord { timing: TimingLog::default(), received, server_closed: true }
    }

    fn info(kind: ScanKind) -> RunInfo {
        RunInfo { kind, chain: kind.default_chain().into(), endpoint: String::new(), pacing: None, params: PhantomParams::default() }
    }

    #[test]
    fn missing_table_names_it() {
        let s = super::super::Session::new(ScanKind::Lax, PhantomParams::default()).unwrap();
        let v = verify_run(&info(ScanKind::Lax), &s.truth(), &record_with(&[ReportDocument::new("lax")]), &Tolerances::default());
        assert!(!v.passed);
        assert!(!v.check("table lax_ch4").unwrap().passed);
    }

    #[test]
    fn lax_within_tolerance() {
        let s = super::super::Session::new(ScanKind::Lax, PhantomParams::default()).unwrap();
        let truth = s.truth();
        let mut doc = ReportDocument::new("lax");
        for v in &truth.lax.as_ref().unwrap().views {
            let name = if v.view == crate::cmr::lax::View::Ch4 { tables::LAX_CH4 } else { tables::LAX_CH2 };
            let mut t = Table::new(name, &["Biomarker", "Value"]);
            t.rows.push(vec![json!("GLS (%)"), json!(v.gls_percent + 0.1)]);
            t.rows.push(vec![json!("MAPSE (mm)"), json!(v.mapse_mm)]);
            t.rows.push(vec![json!("TAPSE (mm)"), json!(v.tapse_mm)]);
            doc.tables.push(t);
        }
        let v = verify_run(&info(ScanKind::Lax), &truth, &record_with(&[doc]), &Tolerances::default());
        assert!(v.passed, "{}", v.summary());
    }

    #[test]
    fn chain_trigger_detection() {
        let mut i = info(ScanKind::Sax);
        assert_eq!(i.chain_triggers(), Some(true));
        i.chain = "sax_untriggered".into();
        assert_eq!(i.chain_triggers(), Some(false));
        i.chain = "lax".into();
        assert_eq!(i.chain_triggers(), None);
    }

    #[test]
    fn tolerances_fill_defaults() {
        let t: Tolerances = serde_json::from_str(r#"{"ef_pp": 2.0}"#).unwrap();
        assert_eq!(t.ef_pp, 2.0);
        assert_eq!(t.volume_rel, 0.03);
    }
}
