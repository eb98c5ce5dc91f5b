//! SVG heatmaps of scalar fields sampled on a square grid.

use std::fmt::Write as _;
use std::path::Path;

use crate::mesh::DomainTag;
use crate::{Error, Result};

pub const DEFAULT_RESOLUTION: usize = 128;

/// Cell-centre samples over the domain's bounding box. Row 0 is the top row;
/// cells whose centre lies outside the domain are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub resolution: usize,
    pub bbox: [f64; 4],
    pub values: Vec<Option<f64>>,
    pub min: f64,
    pub max: f64,
}

/// Centre of cell `(row, col)`.
pub fn cell_center(bbox: [f64; 4], resolution: usize, row: usize, col: usize) -> [f64; 2] {
    let [x0, y0, x1, y1] = bbox;
    let dx = (x1 - x0) / resolution as f64;
    let dy = (y1 - y0) / resolution as f64;
    [x0 + (col as f64 + 0.5) * dx, y1 - (row as f64 + 0.5) * dy]
}

/// Sample `sampler` (a batched field evaluation) at every unmasked cell.
pub fn sample_field(
    sampler: &dyn Fn(&[[f64; 2]]) -> Result<Vec<f64>>,
    domain: DomainTag,
    resolution: usize,
) -> Result<Heatmap> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("heatmap resolution must be positive".into()));
    }
    let bbox = domain.bbox();
    let mut points = Vec::with_capacity(resolution * resolution);
    let mut slots = Vec::with_capacity(resolution * resolution);
    for row in 0..resolution {
        for col in 0..resolution {
            let p = cell_center(bbox, resolution, row, col);
            if domain.contains(p, 0.0) {
                slots.push(Some(points.len()));
                points.push(p);
            } else {
                slots.push(None);
            }
        }
    }
    let sampled = sampler(&points)?;
    if sampled.len() != points.len() {
        return Err(Error::Structural(format!("sampler returned {} values for {} points", sampled.len(), points.len())));
    }
    if let Some(i) = sampled.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteNode { node: i, x: points[i][0], y: points[i][1], value: sampled[i] });
    }
    let values: Vec<Option<f64>> = slots.iter().map(|s| s.map(|i| sampled[i])).collect();
    let min = sampled.iter().copied().fold(f64::INFINITY, f64::min);
    let max = sampled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Heatmap { resolution, bbox, values, min, max })
}

impl Heatmap {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.resolution + col]
    }

    /// Centre of the cell holding the largest value.
    pub fn argmax(&self) -> Option<[f64; 2]> {
        let (i, _) = self
            .values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        Some(cell_center(self.bbox, self.resolution, i / self.resolution, i % self.resolution))
    }

    /// Fill colour of a value: white at the minimum, dark red at the maximum.
    /// A constant field is drawn entirely in the minimum colour.
    pub fn colour(&self, v: f64) -> [u8; 3] {
        let t = if self.max > self.min { ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0) } else { 0.0 };
        let lerp = |a: f64, b: f64| (a + t * (b - a)).round() as u8;
        [lerp(255.0, 128.0), lerp(255.0, 0.0), lerp(255.0, 0.0)]
    }

    /// SVG with 4-pixel cells, runs of equal colour merged into one rect, and
    /// the min/max annotated below. Masked cells are left transparent.
    pub fn to_svg(&self, title: &str) -> String {
        const CELL: usize = 4;
        let side = self.resolution * CELL;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{side}" height="{}" viewBox="0 0 {side} {}">"#,
            side + 48,
            side + 48
        );
        let _ = writeln!(s, "<title>{}</title>", escape(title));
        for row in 0..self.resolution {
            let mut col = 0;
            while col < self.resolution {
                let Some(v) = self.get(row, col) else {
                    col += 1;
                    continue;
                };
                let c = self.colour(v);
                let start = col;
                while col < self.resolution && self.get(row, col).map(|w| self.colour(w)) == Some(c) {
                    col += 1;
                }
                let _ = writeln!(
                    s,
                    r##"<rect x="{}" y="{}" width="{}" height="{CELL}" fill="#{:02x}{:02x}{:02x}"/>"##,
                    start * CELL,
                    row * CELL,
                    (col - start) * CELL,
                    c[0],
                    c[1],
                    c[2]
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="4" y="{}" font-family="monospace" font-size="14">min = {:.6e}</text>"#,
            side + 18,
            self.min
        );
        let _ = writeln!(
            s,
            r#"<text x="4" y="{}" font-family="monospace" font-size="14">max = {:.6e}</text>"#,
            side + 38,
            self.max
        );
        s.push_str("</svg>\n");
        s
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Sample a field and write its SVG to `path`.
pub fn emit_heatmap(
    sampler: &dyn Fn(&[[f64; 2]]) -> Result<Vec<f64>>,
    domain: DomainTag,
    path: &Path,
    title: &str,
) -> Result<Heatmap> {
    let map = sample_field(sampler, domain, DEFAULT_RESOLUTION)?;
    std::fs::write(path, map.to_svg(title))?;
    Ok(map)
}
