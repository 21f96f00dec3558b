//! CSV and SVG export of per-round client matrices.
//!
//! CSV: header `data_client,model_0,...,model_{K-1}`, one row per data client,
//! empty fields for absent entries. Values are written with Rust's shortest
//! round-trip float formatting, so parsing the file restores every bit.
//!
//! SVG: one 24px cell per (data client, model) pair, data clients along the x
//! axis and models along the y axis, absent pairs left blank, plus a colour
//! legend. Forgetting uses a diverging scale centred at 0 over `[-1, 1]`;
//! accuracy a sequential scale over `[0, 1]`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::forgetting::{ClientMatrix, MatrixKind};
use crate::error::{Error, Result};

pub const CELL_PX: usize = 24;

type Rgb = (u8, u8, u8);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorScale {
    /// `-1 -> blue`, `0 -> pale yellow`, `+1 -> green`.
    Diverging,
    /// `0 -> near white`, `1 -> dark blue`.
    Sequential,
}

const DIV_LOW: Rgb = (49, 54, 149);
const DIV_MID: Rgb = (255, 255, 191);
const DIV_HIGH: Rgb = (0, 104, 55);
const SEQ_LOW: Rgb = (247, 251, 255);
const SEQ_HIGH: Rgb = (8, 48, 107);

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    let mix = |x: u8, y: u8| (f64::from(x) + (f64::from(y) - f64::from(x)) * t).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

impl ColorScale {
    pub fn for_kind(kind: MatrixKind) -> Self {
        match kind {
            MatrixKind::Forgetting => ColorScale::Diverging,
            MatrixKind::Accuracy => ColorScale::Sequential,
        }
    }

    /// Domain of the scale; values outside are clamped.
    pub fn domain(self) -> (f64, f64) {
        match self {
            ColorScale::Diverging => (-1.0, 1.0),
            ColorScale::Sequential => (0.0, 1.0),
        }
    }

    pub fn color(self, v: f64) -> Rgb {
        let (lo, hi) = self.domain();
        let v = v.clamp(lo, hi);
        match self {
            ColorScale::Diverging if v < 0.0 => lerp(DIV_MID, DIV_LOW, -v),
            ColorScale::Diverging => lerp(DIV_MID, DIV_HIGH, v),
            ColorScale::Sequential => lerp(SEQ_LOW, SEQ_HIGH, v),
        }
    }

    pub fn hex(self, v: f64) -> String {
        let (r, g, b) = self.color(v);
        format!("#{r:02x}{g:02x}{b:02x}")
    }
}

pub fn to_csv(m: &ClientMatrix) -> String {
    let mut s = String::from("data_client");
    for i in 0..m.size() {
        write!(s, ",model_{i}").unwrap();
    }
    s.push('\n');
    for k in 0..m.size() {
        write!(s, "{k}").unwrap();
        for v in m.row(k) {
            s.push(',');
            if let Some(v) = v {
                write!(s, "{v}").unwrap();
            }
        }
        s.push('\n');
    }
    s
}

/// Inverse of [`to_csv`]. Round and kind are not stored in the file and are supplied by the caller.
pub fn parse_csv(text: &str, round: usize, kind: MatrixKind) -> Result<ClientMatrix> {
    let bad = |line: usize, msg: String| Error::Parse {
        path: PathBuf::from("<heatmap csv>"),
        location: format!("line {line}"),
        message: msg,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"data_client") {
        return Err(bad(1, "header must start with data_client".into()));
    }
    let size = cols.len() - 1;
    let mut rows = Vec::with_capacity(size);
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != size + 1 {
            return Err(bad(n + 2, format!("expected {} fields, found {}", size + 1, fields.len())));
        }
        let row = fields[1..]
            .iter()
            .map(|f| {
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>().map(Some).map_err(|_| bad(n + 2, format!("bad number `{f}`")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    ClientMatrix::from_rows(round, kind, rows)
}

pub fn to_svg(m: &ClientMatrix) -> String {
    let scale = ColorScale::for_kind(m.kind);
    let k = m.size();
    let (left, top, bottom) = (64usize, 32usize, 48usize);
    let legend_w = 72usize;
    let grid = k * CELL_PX;
    let width = left + grid + 16 + legend_w;
    let height = top + grid.max(120) + bottom;
    let title = match m.kind {
        MatrixKind::Forgetting => format!("Local client forgetting, round {}", m.round),
        MatrixKind::Accuracy => format!("Client model accuracy, round {}", m.round),
    };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
    )
    .unwrap();
    writeln!(s, r#"<text x="{left}" y="16" font-size="12">{title}</text>"#).unwrap();
    for i in 0..k {
        for d in 0..k {
            if let Some(v) = m.get(d, i) {
                writeln!(
                    s,
                    r#"<rect class="cell" x="{}" y="{}" width="{CELL_PX}" height="{CELL_PX}" fill="{}"><title>data {d}, model {i}: {v}</title></rect>"#,
                    left + d * CELL_PX,
                    top + i * CELL_PX,
                    scale.hex(v)
                )
                .unwrap();
            }
        }
    }
    writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{grid}" height="{grid}" fill="none" stroke="#999"/>"##
    )
    .unwrap();
    for c in 0..k {
        let mid = c * CELL_PX + CELL_PX / 2;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{c}</text>"#, left + mid, top + grid + 12).unwrap();
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{c}</text>"#, left - 4, top + mid + 3).unwrap();
    }
    writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">data of client k</text>"#,
        left + grid / 2,
        top + grid + 32
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">model of client i</text>"#,
        y = top + grid / 2
    )
    .unwrap();

    // Legend: vertical gradient bar, top = max of the domain.
    let (lo, hi) = scale.domain();
    let lx = left + grid + 16;
    let bar_h = 100usize;
    writeln!(s, r#"<defs><linearGradient id="legend" x1="0" y1="1" x2="0" y2="0">"#).unwrap();
    for step in 0..=10 {
        let t = step as f64 / 10.0;
        writeln!(
            s,
            r#"<stop offset="{t}" stop-color="{}"/>"#,
            scale.hex(lo + t * (hi - lo))
        )
        .unwrap();
    }
    writeln!(s, "</linearGradient></defs>").unwrap();
    writeln!(
        s,
        r##"<rect class="legend" x="{lx}" y="{top}" width="14" height="{bar_h}" fill="url(#legend)" stroke="#999"/>"##
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="{}">{hi}</text>"#, lx + 18, top + 8).unwrap();
    writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 18, top + bar_h / 2 + 3, (lo + hi) / 2.0).unwrap();
    writeln!(s, r#"<text x="{}" y="{}">{lo}</text>"#, lx + 18, top + bar_h).unwrap();
    s.push_str("</svg>\n");
    s
}

/// Writes `<stem>.csv` and `<stem>.svg`; returns both paths.
pub fn export_heatmap(m: &ClientMatrix, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    if m.size() == 0 {
        return Err(Error::config("cannot export an empty matrix"));
    }
    let csv_path = stem.with_extension("csv");
    let svg_path = stem.with_extension("svg");
    std::fs::write(&csv_path, to_csv(m)).map_err(|e| Error::io(&csv_path, e))?;
    std::fs::write(&svg_path, to_svg(m)).map_err(|e| Error::io(&svg_path, e))?;
    Ok((csv_path, svg_path))
}
