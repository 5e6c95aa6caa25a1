//! Report document returned to the client as JSON in a REPORT message.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::lax::ViewReport;
use super::perf::{Curve, SectorStats, N_SECTORS};
use super::sax::SaxReport;

pub mod tables {
    pub const SAX_FUNCTION: &str = "sax_function";
    pub const SAX_SLICES: &str = "sax_slices";
    pub const LAX_CH4: &str = "lax_ch4";
    pub const LAX_CH2: &str = "lax_ch2";
    pub const LV_LENGTH: &str = "lv_length";
    pub const GL_SHORTENING: &str = "gl_shortening";
    pub const PERF_SECTORS: &str = "perf_sectors";
    pub const PERF_MPR: &str = "perf_mpr";
    pub const PERF_AIF: &str = "perf_aif";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric cell in `column` of the first row whose first cell is `key`.
    pub fn lookup(&self, key: &str, column: &str) -> Option<f64> {
        let j = self.column(column)?;
        self.rows.iter().find(|r| r.first().and_then(Value::as_str) == Some(key))?.get(j)?.as_f64()
    }

    /// Numeric values of `column` over all rows (missing cells are skipped).
    pub fn numbers(&self, column: &str) -> Vec<f64> {
        let Some(j) = self.column(column) else { return Vec::new() };
        self.rows.iter().filter_map(|r| r.get(j)?.as_f64()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedCurve {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bullseye {
    pub name: String,
    /// Sector 1..16 values in order.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportDocument {
    pub kind: String,
    /// Scan information echoed from the session header.
    pub scan: BTreeMap<String, String>,
    pub fields: BTreeMap<String, f64>,
    pub flags: Vec<String>,
    pub tables: Vec<Table>,
    pub curves: Vec<NamedCurve>,
    pub bullseyes: Vec<Bullseye>,
}

impl ReportDocument {
    pub fn new(kind: &str) -> Self {
        Self { kind: kind.into(), ..Default::default() }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn curve(&self, name: &str) -> Option<&NamedCurve> {
        self.curves.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn num(v: Option<f64>) -> Value {
    v.filter(|x| x.is_finite()).map_or(Value::Null, |x| json!(x))
}

pub fn sax_document(r: &SaxReport, scan: BTreeMap<String, String>) -> ReportDocument {
    let v = &r.values;
    let mut doc = ReportDocument::new("sax");
    doc.scan = scan;
    doc.flags = r.flags.clone();
    let mut t = Table::new(tables::SAX_FUNCTION, &["Biomarker", "Value", "Index", "IndexValue"]);
    let rows: [(&str, Option<f64>, &str, Option<f64>); 7] = [
        ("EF (%)", Some(v.ef_percent), "", None),
        ("EDV (ml)", Some(v.edv_ml), "EDVi (ml/m2)", v.edvi),
        ("ESV (ml)", Some(v.esv_ml), "ESVi (ml/m2)", v.esvi),
        ("SV (ml)", Some(v.sv_ml), "SVi (ml/m2)", v.svi),
        ("MASS (g)", Some(v.mass_g), "MASSi (g/m2)", v.massi),
        ("CO (L/min)", v.co_l_min, "CI (L/min/m2)", v.ci),
        ("MCF (%)", Some(v.mcf_percent), "", None),
    ];
    for (name, value, index, iv) in rows {
        let index = if index.is_empty() { Value::Null } else { json!(index) };
        t.rows.push(vec![json!(name), num(value), index, num(iv)]);
    }
    doc.tables.push(t);

    let mut s = Table::new(
        tables::SAX_SLICES,
        &["slice", "included_ed", "included_es", "edv_ml", "esv_ml", "mass_g", "max_wall_mm"],
    );
    for i in 0..r.slice_edv_ml.len() {
        s.rows.push(vec![
            json!(i),
            json!(r.included_ed[i]),
            json!(r.included_es[i]),
            json!(r.slice_edv_ml[i]),
            json!(r.slice_esv_ml[i]),
            json!(r.slice_mass_g[i]),
            num(r.slice_max_wall_mm[i]),
        ]);
    }
    doc.tables.push(s);
    doc.fields.insert("ed_phase".into(), r.ed_phase as f64);
    doc.fields.insert("es_phase".into(), r.es_phase as f64);
    doc.curves.push(NamedCurve {
        name: "lv_volume".into(),
        x_label: "phase".into(),
        y_label: "volume (ml)".into(),
        x: (0..r.phase_volumes_ml.len()).map(|p| p as f64).collect(),
        y: r.phase_volumes_ml.clone(),
    });
    doc
}

pub fn lax_document(views: &[ViewReport], scan: BTreeMap<String, String>) -> ReportDocument {
    let mut doc = ReportDocument::new("lax");
    doc.scan = scan;
    let mut lengths = Table::new(tables::LV_LENGTH, &["view", "phase", "trigger_time_ms", "length_mm"]);
    let mut gls = Table::new(tables::GL_SHORTENING, &["view", "phase", "trigger_time_ms", "gls_percent"]);
    for v in views {
        let name = match v.view {
            super::lax::View::Ch4 => tables::LAX_CH4,
            super::lax::View::Ch2 => tables::LAX_CH2,
        };
        let mut t = Table::new(name, &["Biomarker", "Value"]);
        t.rows.push(vec![json!("GLS (%)"), json!(v.gls_percent)]);
        t.rows.push(vec![json!("MAPSE (mm)"), json!(v.mapse_mm)]);
        t.rows.push(vec![json!("TAPSE (mm)"), num(v.tapse_mm)]);
        t.rows.push(vec![json!("ED phase"), json!(v.phases[v.ed_phase])]);
        t.rows.push(vec![json!("ES phase"), json!(v.phases[v.es_phase])]);
        doc.tables.push(t);
        for i in 0..v.phases.len() {
            lengths.rows.push(vec![json!(v.view), json!(v.phases[i]), json!(v.trigger_times_ms[i]), json!(v.lengths_mm[i])]);
            gls.rows.push(vec![json!(v.view), json!(v.phases[i]), json!(v.trigger_times_ms[i]), json!(v.gls_curve[i])]);
        }
        doc.curves.push(NamedCurve {
            name: format!("gls_{}", v.view.as_str().to_ascii_lowercase()),
            x_label: "trigger time (ms)".into(),
            y_label: "GL shortening (%)".into(),
            x: v.trigger_times_ms.clone(),
            y: v.gls_curve.clone(),
        });
    }
    doc.tables.push(lengths);
    doc.tables.push(gls);
    doc
}

/// Perfusion inputs for the report.
pub struct PerfSummary<'a> {
    pub stats: &'a SectorStats,
    pub mpr: Option<&'a [Option<f64>]>,
    pub rv: Option<&'a Curve>,
    pub lv: Option<&'a Curve>,
    pub ptt_s: Option<f64>,
    pub flags: Vec<String>,
}

pub fn perf_document(kind: &str, p: &PerfSummary, scan: BTreeMap<String, String>) -> ReportDocument {
    let mut doc = ReportDocument::new(kind);
    doc.scan = scan;
    doc.flags = p.flags.clone();
    let mut t = Table::new(tables::PERF_SECTORS, &["sector", "mean", "endo", "epi", "pixels"]);
    for k in 0..N_SECTORS {
        t.rows.push(vec![
            json!(k + 1),
            num(p.stats.mean[k]),
            num(p.stats.endo[k]),
            num(p.stats.epi[k]),
            json!(p.stats.counts[k]),
        ]);
    }
    doc.tables.push(t);
    doc.bullseyes.push(Bullseye { name: "flow".into(), values: p.stats.mean.clone() });
    if let Some(mpr) = p.mpr {
        let mut t = Table::new(tables::PERF_MPR, &["sector", "mpr"]);
        for (k, v) in mpr.iter().enumerate() {
            t.rows.push(vec![json!(k + 1), num(*v)]);
        }
        doc.tables.push(t);
        doc.bullseyes.push(Bullseye { name: "mpr".into(), values: mpr.to_vec() });
    }
    if let (Some(rv), Some(lv)) = (p.rv, p.lv) {
        let mut t = Table::new(tables::PERF_AIF, &["frame", "rv_time_ms", "rv", "lv_time_ms", "lv"]);
        for i in 0..rv.values.len().min(lv.values.len()) {
            t.rows.push(vec![json!(i), json!(rv.times_ms[i]), json!(rv.values[i]), json!(lv.times_ms[i]), json!(lv.values[i])]);
        }
        doc.tables.push(t);
        for (name, c) in [("aif_rv", rv), ("aif_lv", lv)] {
            doc.curves.push(NamedCurve {
                name: name.into(),
                x_label: "time (ms)".into(),
                y_label: "signal".into(),
                x: c.times_ms.clone(),
                y: c.values.clone(),
            });
        }
    }
    if let Some(v) = p.ptt_s {
        doc.fields.insert("ptt_s".into(), v);
    }
    doc
}
