//! JSON/CSV serialization of explanations and SVG figures.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lime::LimeExplanation;
use crate::lipex::ExplanationMatrix;

/// Common on-disk shape of both explanation kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDocument {
    pub method: String,
    pub classes: Vec<String>,
    pub features: Vec<String>,
    /// One row per class.
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercepts: Option<Vec<f64>>,
    #[serde(default)]
    pub diagnostics: serde_json::Value,
}

impl MatrixDocument {
    pub fn lipex(w: &ExplanationMatrix) -> Self {
        MatrixDocument {
            method: "lipex".into(),
            classes: w.classes().as_slice().to_vec(),
            features: w.features().to_vec(),
            matrix: w.rows(),
            intercepts: None,
            diagnostics: serde_json::to_value(&w.diagnostics).unwrap_or_default(),
        }
    }

    pub fn lime(e: &LimeExplanation) -> Self {
        MatrixDocument {
            method: "lime".into(),
            classes: e.classes.as_slice().to_vec(),
            features: e.features.clone(),
            matrix: e.weights.clone(),
            intercepts: Some(e.intercepts.clone()),
            diagnostics: serde_json::to_value(&e.config).unwrap_or_default(),
        }
    }

    /// Back to a matrix; diagnostics are not restored.
    pub fn to_matrix(&self) -> Result<ExplanationMatrix> {
        ExplanationMatrix::from_rows(
            crate::distributions::ClassLabels::new(self.classes.clone()),
            self.features.clone(),
            &self.matrix,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Header `class,<features…>` then one row per class. `columns`
    /// restricts and orders the feature columns.
    pub fn to_csv(&self, columns: Option<&[usize]>) -> Result<String> {
        let all: Vec<usize> = (0..self.features.len()).collect();
        let cols = columns.unwrap_or(&all);
        if let Some(&j) = cols.iter().find(|&&j| j >= self.features.len()) {
            return Err(Error::Range {
                requested: j + 1,
                available: self.features.len(),
            });
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["class".to_string()];
        header.extend(cols.iter().map(|&j| self.features[j].clone()));
        w.write_record(&header)?;
        for (c, row) in self.matrix.iter().enumerate() {
            let mut rec = vec![self.classes[c].clone()];
            rec.extend(cols.iter().map(|&j| format_num(row[j])));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Shortest round-trip formatting.
pub fn format_num(x: f64) -> String {
    format!("{x}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Diverging blue/white/red fill for a signed value scaled by `max_abs`.
fn diverging(v: f64, max_abs: f64) -> String {
    let t = if max_abs > 0.0 {
        (v / max_abs).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let fade = |c: f64| (255.0 - (255.0 - c) * t.abs()).round() as u8;
    let (r, g, b) = if t >= 0.0 {
        (fade(178.0), fade(24.0), fade(43.0))
    } else {
        (fade(33.0), fade(102.0), fade(172.0))
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap with rows in `row_order` (typically classes by descending
/// predicted probability) and cells colored by signed weight. Row labels
/// carry the probability when given.
pub fn heatmap_svg(doc: &MatrixDocument, row_order: &[usize], probs: Option<&[f64]>) -> String {
    let cell_w = 56.0;
    let cell_h = 28.0;
    let left = 150.0;
    let top = 90.0;
    let width = left + cell_w * doc.features.len() as f64 + 20.0;
    let height = top + cell_h * row_order.len() as f64 + 20.0;
    let max_abs = doc
        .matrix
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<title>{} explanation</title>"#, escape(&doc.method));
    for (j, f) in doc.features.iter().enumerate() {
        let x = left + cell_w * (j as f64 + 0.5);
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" transform="rotate(-45 {x} {})" text-anchor="start">{}</text>"#,
            top - 6.0,
            top - 6.0,
            escape(f)
        );
    }
    for (r, &c) in row_order.iter().enumerate() {
        let y = top + cell_h * r as f64;
        let label = match probs {
            Some(p) => format!("{} ({:.3})", doc.classes[c], p[c]),
            None => doc.classes[c].clone(),
        };
        let _ = writeln!(
            s,
            r#"<text class="row" data-class="{}" x="{}" y="{}" text-anchor="end">{}</text>"#,
            escape(&doc.classes[c]),
            left - 6.0,
            y + cell_h * 0.65,
            escape(&label)
        );
        for (j, v) in doc.matrix[c].iter().enumerate() {
            let x = left + cell_w * j as f64;
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" fill="{}" stroke="#ffffff"><title>{:.4}</title></rect>"##,
                diverging(*v, max_abs),
                v
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="9">{:.2}</text>"#,
                x + cell_w / 2.0,
                y + cell_h * 0.65,
                v
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Class indices by descending probability; ties keep class order.
pub fn descending_order(probs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    idx
}

/// A named polyline over shared x values.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub y: Vec<f64>,
}

const PALETTE: [&str; 6] = [
    "#e66101", "#5e3c99", "#1b7837", "#b2182b", "#2166ac", "#333333",
];

/// Line chart of one or more series against `x`.
pub fn line_chart_svg(title: &str, x_label: &str, x: &[f64], series: &[Series]) -> String {
    let (w, h, pad) = (520.0, 340.0, 50.0);
    let (xmin, xmax) = bounds(x.iter().copied());
    let (ymin, ymax) = bounds(series.iter().flat_map(|s| s.y.iter().copied()).chain([0.0]));
    let sx = |v: f64| pad + (v - xmin) / (xmax - xmin).max(1e-12) * (w - 2.0 * pad);
    let sy = |v: f64| h - pad - (v - ymin) / (ymax - ymin).max(1e-12) * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    axes(&mut s, w, h, pad, x_label, (xmin, xmax), (ymin, ymax));
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = x
            .iter()
            .zip(&ser.y)
            .filter(|(_, y)| y.is_finite())
            .map(|(a, b)| format!("{:.2},{:.2}", sx(*a), sy(*b)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            w - pad - 120.0,
            pad + 14.0 * i as f64,
            escape(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Bar histogram over equal-width bins on `[lo, hi]`.
pub fn histogram_svg(title: &str, lo: f64, hi: f64, counts: &[usize]) -> String {
    let (w, h, pad) = (520.0, 340.0, 50.0);
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bw = (w - 2.0 * pad) / counts.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    axes(&mut s, w, h, pad, "value", (lo, hi), (0.0, max));
    for (i, &c) in counts.iter().enumerate() {
        let bh = c as f64 / max * (h - 2.0 * pad);
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4575b4"><title>{c}</title></rect>"##,
            pad + bw * i as f64,
            h - pad - bh,
            bw - 1.0,
            bh
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn axes(s: &mut String, w: f64, h: f64, pad: f64, x_label: &str, x: (f64, f64), y: (f64, f64)) {
    let _ = writeln!(
        s,
        r##"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="#000"/>"##,
        h - pad,
        w - pad
    );
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="{}">{:.3}</text>"#,
        h - pad + 15.0,
        x.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
        w - pad,
        h - pad + 15.0,
        x.1
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        w / 2.0,
        h - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
        pad - 4.0,
        h - pad,
        y.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
        pad - 4.0,
        pad + 4.0,
        y.1
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ClassLabels;

    fn doc() -> MatrixDocument {
        let w = ExplanationMatrix::from_rows(
            ClassLabels::new(["joy", "anger"]),
            vec!["happy".into(), "mad".into(), "the".into()],
            &[vec![0.9, -0.4, 0.01], vec![-0.8, 1.1, 0.0]],
        )
        .unwrap();
        MatrixDocument::lipex(&w)
    }

    #[test]
    fn json_round_trip() {
        let d = doc();
        let back = MatrixDocument::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_matrix().unwrap().rows(), d.matrix);
        assert!(d.to_json().unwrap().contains("\"method\": \"lipex\""));
    }

    #[test]
    fn csv_layout() {
        let d = doc();
        let csv = d.to_csv(None).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,happy,mad,the");
        assert_eq!(lines[1], "joy,0.9,-0.4,0.01");
        assert_eq!(lines.len(), 3);
        let sub = d.to_csv(Some(&[1])).unwrap();
        assert_eq!(sub.lines().next().unwrap(), "class,mad");
        assert!(d.to_csv(Some(&[3])).is_err());
    }

    #[test]
    fn heatmap_rows_follow_order() {
        let d = doc();
        let order = descending_order(&[0.2, 0.8]);
        assert_eq!(order, vec![1, 0]);
        let svg = heatmap_svg(&d, &order, Some(&[0.2, 0.8]));
        let anger = svg.find(r#"data-class="anger""#).unwrap();
        let joy = svg.find(r#"data-class="joy""#).unwrap();
        assert!(anger < joy);
        assert_eq!(svg.matches("<rect").count(), 6);
    }

    #[test]
    fn charts_are_well_formed() {
        let svg = line_chart_svg(
            "t",
            "sigma",
            &[0.0, 1.0],
            &[Series {
                name: "a".into(),
                y: vec![0.0, 0.5],
            }],
        );
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let h = histogram_svg("h", 0.0, 1.0, &[3, 0, 1]);
        assert_eq!(h.matches("<rect").count(), 3);
        assert_eq!(diverging(0.0, 1.0), "#ffffff");
    }
}
