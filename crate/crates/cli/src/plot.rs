//! Standalone SVG figures rebuilt from the files of a finished run.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use shepherd::mapping::OccupancyGrid;
use thiserror::Error;

use crate::output::{MAP_TXT, PATHS_CSV, RUN_CSV, SKELETON_CSV, SUMMARY_JSON};

pub const TRAJECTORY_SVG: &str = "trajectory.svg";
pub const TRACES_SVG: &str = "traces.svg";
pub const MAP_SVG: &str = "map.svg";

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("cannot read `{path}`: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed `{file}`: {reason}")]
    Malformed { file: &'static str, reason: String },
    #[error(transparent)]
    Write(#[from] std::io::Error),
}

fn malformed(file: &'static str, reason: impl ToString) -> PlotError {
    PlotError::Malformed {
        file,
        reason: reason.to_string(),
    }
}

/// Numeric columns of a CSV file keyed by header name; non-numeric cells
/// become NaN.
struct Table {
    columns: HashMap<String, Vec<f64>>,
    rows: usize,
}

impl Table {
    fn read(dir: &Path, file: &'static str) -> Result<Self, PlotError> {
        let path = dir.join(file);
        let text = fs::read_to_string(&path).map_err(|source| PlotError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| malformed(file, e))?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| malformed(file, e))?;
            for (c, v) in cols.iter_mut().zip(rec.iter()) {
                c.push(v.parse().unwrap_or(f64::NAN));
            }
            rows += 1;
        }
        Ok(Self {
            columns: headers.into_iter().zip(cols).collect(),
            rows,
        })
    }

    fn col(&self, name: &str) -> Option<&[f64]> {
        self.columns.get(name).map(Vec::as_slice)
    }

    fn count_prefixed(&self, prefix: &str, suffix: &str) -> usize {
        (0..)
            .take_while(|i| self.columns.contains_key(&format!("{prefix}{i}{suffix}")))
            .count()
    }
}

/// Maps world coordinates into an SVG viewport with `y` pointing up.
#[derive(Clone, Copy)]
struct Frame {
    x0: f64,
    y0: f64,
    scale: f64,
    left: f64,
    top: f64,
    height: f64,
}

impl Frame {
    fn fit(min: (f64, f64), max: (f64, f64), left: f64, top: f64, width: f64, height: f64) -> Self {
        let sx = width / (max.0 - min.0).max(1e-9);
        let sy = height / (max.1 - min.1).max(1e-9);
        let scale = sx.min(sy);
        Self {
            x0: min.0,
            y0: min.1,
            scale,
            left,
            top,
            height: (max.1 - min.1) * scale,
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.left + (x - self.x0) * self.scale,
            self.top + self.height - (y - self.y0) * self.scale,
        )
    }
}

/// Axis-aligned chart panel with independent x and y scales.
struct Panel {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Panel {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let fx = (x - self.x.0) / (self.x.1 - self.x.0).max(1e-12);
        let fy = (y - self.y.0) / (self.y.1 - self.y.0).max(1e-12);
        (self.left + fx * self.width, self.top + (1.0 - fy) * self.height)
    }

    fn frame(&self, svg: &mut Svg, title: &str) {
        let _ = write!(
            svg.body,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##,
            self.left, self.top, self.width, self.height
        );
        svg.text(self.left, self.top - 6.0, title, 13.0);
        svg.text(
            self.left,
            self.top + self.height + 14.0,
            &format!("{:.3}", self.x.0),
            10.0,
        );
        svg.text(
            self.left + self.width - 30.0,
            self.top + self.height + 14.0,
            &format!("{:.3}", self.x.1),
            10.0,
        );
        svg.text_end(
            self.left - 4.0,
            self.top + self.height,
            &format!("{:.3}", self.y.0),
            10.0,
        );
        svg.text_end(self.left - 4.0, self.top + 10.0, &format!("{:.3}", self.y.1), 10.0);
    }
}

struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    fn polyline(&mut self, pts: impl IntoIterator<Item = (f64, f64)>, stroke: &str, width: f64, extra: &str) {
        let mut d = String::new();
        for (x, y) in pts {
            if x.is_finite() && y.is_finite() {
                let _ = write!(d, "{x:.2},{y:.2} ");
            }
        }
        if !d.is_empty() {
            let _ = write!(
                self.body,
                r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}" {extra}/>"#,
                d.trim_end()
            );
        }
    }

    fn polygon(&mut self, pts: impl IntoIterator<Item = (f64, f64)>, fill: &str, stroke: &str) {
        let d: String = pts.into_iter().map(|(x, y)| format!("{x:.2},{y:.2} ")).collect();
        let _ = write!(
            self.body,
            r#"<polygon points="{}" fill="{fill}" stroke="{stroke}"/>"#,
            d.trim_end()
        );
    }

    fn circle(&mut self, (cx, cy): (f64, f64), r: f64, fill: &str, stroke: &str) {
        let _ = write!(
            self.body,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" fill="{fill}" stroke="{stroke}"/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = write!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, s: &str, size: f64) {
        let _ = write!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="{size}">{s}</text>"#
        );
    }

    fn text_end(&mut self, x: f64, y: f64, s: &str, size: f64) {
        let _ = write!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="{size}" text-anchor="end">{s}</text>"#
        );
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}\n</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Upper bound on points per drawn time series.
const MAX_POINTS: usize = 2000;

fn decimate<T: Copy>(v: impl IntoIterator<Item = T>) -> Vec<T> {
    let all: Vec<T> = v.into_iter().collect();
    let k = all.len().div_ceil(MAX_POINTS).max(1);
    let mut out: Vec<T> = all.iter().copied().step_by(k).collect();
    if all.len() > 1 && !(all.len() - 1).is_multiple_of(k) {
        out.push(all[all.len() - 1]);
    }
    out
}

const SHEEP: &str = "#1f77b4";
const DOG: &str = "#d62728";
const REFERENCE: &str = "#222";
const PATH: &str = "#ff7f0e";
const SKELETON: &str = "#2ca02c";

/// Parameters the figures need from `summary.json`.
struct Meta {
    bounds: [(f64, f64); 2],
    obstacles: Vec<Vec<(f64, f64)>>,
    goal: (f64, f64),
    r_d: f64,
    success_radius: f64,
}

fn point(v: &serde_json::Value) -> Option<(f64, f64)> {
    Some((v.get(0)?.as_f64()?, v.get(1)?.as_f64()?))
}

impl Meta {
    fn read(dir: &Path) -> Result<Self, PlotError> {
        let path = dir.join(SUMMARY_JSON);
        let text = fs::read_to_string(&path).map_err(|source| PlotError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| malformed(SUMMARY_JSON, e))?;
        let p = &v["parameters"];
        let miss = |what: &str| malformed(SUMMARY_JSON, format!("missing {what}"));
        let bounds = [
            point(&p["world"]["bounds"][0]).ok_or_else(|| miss("world bounds"))?,
            point(&p["world"]["bounds"][1]).ok_or_else(|| miss("world bounds"))?,
        ];
        let obstacles = p["world"]["obstacles"]
            .as_array()
            .map(|a| {
                a.iter()
                    .map(|o| {
                        o["vertices"]
                            .as_array()
                            .map(|vs| vs.iter().filter_map(point).collect())
                            .unwrap_or_default()
                    })
                    .collect()
            })
            .unwrap_or_default();
        Ok(Self {
            bounds,
            obstacles,
            goal: point(&p["goal"]).ok_or_else(|| miss("goal"))?,
            r_d: v["r_d"].as_f64().ok_or_else(|| miss("r_d"))?,
            success_radius: p["sim"]["success_radius"].as_f64().unwrap_or(0.5),
        })
    }
}

fn trajectory_svg(run: &Table, meta: &Meta) -> Result<String, PlotError> {
    let mut svg = Svg::new(900.0, 620.0);
    let f = Frame::fit(meta.bounds[0], meta.bounds[1], 30.0, 40.0, 840.0, 550.0);
    svg.text(30.0, 24.0, "Herd, dogs and reference", 15.0);
    let (a, b) = (
        f.px(meta.bounds[0].0, meta.bounds[1].1),
        f.px(meta.bounds[1].0, meta.bounds[0].1),
    );
    let _ = write!(
        svg.body,
        r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#999"/>"##,
        a.0,
        a.1,
        b.0 - a.0,
        b.1 - a.1
    );
    for o in &meta.obstacles {
        svg.polygon(o.iter().map(|&(x, y)| f.px(x, y)), "#bbb", "#666");
    }
    svg.circle(
        f.px(meta.goal.0, meta.goal.1),
        meta.success_radius * f.scale,
        "none",
        "#2ca02c",
    );

    let col = |name: &str| {
        run.col(name)
            .ok_or_else(|| malformed(RUN_CSV, format!("missing column `{name}`")))
    };
    let series = |xs: &[f64], ys: &[f64]| decimate(xs.iter().zip(ys).map(|(&x, &y)| f.px(x, y)));
    let n = run.count_prefixed("sheep", "_x");
    let m = run.count_prefixed("dog", "_x");
    for i in 0..n {
        let (xs, ys) = (col(&format!("sheep{i}_x"))?, col(&format!("sheep{i}_y"))?);
        svg.polyline(series(xs, ys), SHEEP, 0.8, r#"opacity="0.7""#);
        if let (Some(&x), Some(&y)) = (xs.last(), ys.last()) {
            svg.circle(f.px(x, y), 3.0, SHEEP, "none");
        }
    }
    for j in 0..m {
        let (xs, ys) = (col(&format!("dog{j}_x"))?, col(&format!("dog{j}_y"))?);
        svg.polyline(series(xs, ys), DOG, 0.8, r#"opacity="0.7""#);
        if let (Some(&x), Some(&y)) = (xs.last(), ys.last()) {
            svg.circle(f.px(x, y), 3.5, DOG, "none");
        }
    }
    let (rx, ry) = (col("ref_x")?, col("ref_y")?);
    svg.polyline(series(rx, ry), REFERENCE, 1.5, r#"stroke-dasharray="6 4""#);
    // Protected region at evenly spaced instants.
    if run.rows > 0 {
        for k in (0..run.rows)
            .step_by((run.rows / 8).max(1))
            .chain(std::iter::once(run.rows - 1))
        {
            svg.circle(f.px(rx[k], ry[k]), meta.r_d * f.scale, "none", "#9467bd");
        }
    }
    svg.text(
        40.0,
        606.0,
        "sheep (blue), dogs (red), reference (dashed), protected region (purple), goal (green)",
        11.0,
    );
    Ok(svg.finish())
}

fn bounds_of(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo.is_finite() {
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    } else {
        (0.0, 1.0)
    }
}

fn traces_svg(run: &Table, meta: &Meta) -> Result<String, PlotError> {
    let col = |name: &str| {
        run.col(name)
            .ok_or_else(|| malformed(RUN_CSV, format!("missing column `{name}`")))
    };
    let t = col("t")?;
    let tx = bounds_of(t.iter().copied());
    let mut svg = Svg::new(900.0, 640.0);

    let spread = col("spread")?;
    let p = Panel {
        left: 70.0,
        top: 40.0,
        width: 800.0,
        height: 150.0,
        x: tx,
        y: (0.0, bounds_of(spread.iter().copied().chain([meta.r_d])).1 * 1.05),
    };
    p.frame(
        &mut svg,
        "R(t) = max distance of a sheep to the reference (m); R_d dashed",
    );
    svg.polyline(
        decimate(t.iter().zip(spread).map(|(&a, &b)| p.px(a, b))),
        SHEEP,
        1.0,
        "",
    );
    svg.polyline(
        [p.px(tx.0, meta.r_d), p.px(tx.1, meta.r_d)],
        "#9467bd",
        1.0,
        r#"stroke-dasharray="5 3""#,
    );

    let (vx, vy) = (col("ref_vx")?, col("ref_vy")?);
    let heading: Vec<f64> = vx
        .iter()
        .zip(vy)
        .map(|(&a, &b)| {
            if a.hypot(b) > 1e-6 {
                b.atan2(a).to_degrees()
            } else {
                f64::NAN
            }
        })
        .collect();
    let p = Panel {
        left: 70.0,
        top: 240.0,
        width: 800.0,
        height: 150.0,
        x: tx,
        y: (-180.0, 180.0),
    };
    p.frame(&mut svg, "reference heading (deg)");
    svg.polyline(
        decimate(t.iter().zip(&heading).map(|(&a, &b)| p.px(a, b))),
        REFERENCE,
        1.0,
        "",
    );

    let h = col("h_herd_min")?;
    let p = Panel {
        left: 70.0,
        top: 440.0,
        width: 800.0,
        height: 150.0,
        x: tx,
        y: bounds_of(h.iter().copied().chain([0.0])),
    };
    p.frame(&mut svg, "smallest herding barrier value");
    svg.polyline([p.px(tx.0, 0.0), p.px(tx.1, 0.0)], "#999", 0.8, "");
    svg.polyline(decimate(t.iter().zip(h).map(|(&a, &b)| p.px(a, b))), DOG, 1.0, "");
    svg.text(70.0, 625.0, "time (s)", 11.0);
    Ok(svg.finish())
}

fn map_svg(dir: &Path, meta: &Meta) -> Result<String, PlotError> {
    let path = dir.join(MAP_TXT);
    let text = fs::read_to_string(&path).map_err(|source| PlotError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let grid: OccupancyGrid<f64> = OccupancyGrid::from_snapshot(&text).map_err(|e| malformed(MAP_TXT, e))?;
    let res = grid.resolution;
    let (ox, oy) = (grid.origin.x, grid.origin.y);
    let max = (ox + grid.cols as f64 * res, oy + grid.rows as f64 * res);
    let mut svg = Svg::new(900.0, 620.0);
    let f = Frame::fit((ox, oy), max, 30.0, 40.0, 840.0, 550.0);
    svg.text(30.0, 24.0, "Map, skeleton and planned paths", 15.0);
    let cell = res * f.scale;
    // One rectangle per horizontal run of equal cells.
    for (i, line) in text.lines().skip(4).enumerate() {
        let r = grid.rows - 1 - i;
        let chars: Vec<char> = line.chars().collect();
        let mut c = 0;
        while c < chars.len() {
            let ch = chars[c];
            let start = c;
            while c < chars.len() && chars[c] == ch {
                c += 1;
            }
            let fill = match ch {
                'O' => "#333",
                'I' => "#f4c7c3",
                'F' => "#ffffff",
                _ => "#d9d9d9",
            };
            let (x, y) = f.px(ox + start as f64 * res, oy + (r + 1) as f64 * res);
            svg.rect(x, y, (c - start) as f64 * cell, cell, fill);
        }
    }
    for o in &meta.obstacles {
        svg.polygon(o.iter().map(|&(x, y)| f.px(x, y)), "none", "#000");
    }
    let skel = Table::read(dir, SKELETON_CSV)?;
    if let (Some(rows), Some(cols)) = (skel.col("row"), skel.col("col")) {
        for (&r, &c) in rows.iter().zip(cols) {
            let (x, y) = f.px(ox + c * res, oy + (r + 1.0) * res);
            svg.rect(x, y, cell, cell, SKELETON);
        }
    }
    let paths = Table::read(dir, PATHS_CSV)?;
    if let (Some(plan), Some(xs), Some(ys)) = (paths.col("plan"), paths.col("x"), paths.col("y")) {
        let last = plan.iter().copied().fold(f64::NAN, f64::max);
        let mut k = 0;
        while k < plan.len() {
            let id = plan[k];
            let start = k;
            while k < plan.len() && plan[k] == id {
                k += 1;
            }
            let pts = (start..k).map(|i| f.px(xs[i], ys[i]));
            if id == last {
                svg.polyline(pts, PATH, 2.0, "");
            } else {
                svg.polyline(pts, PATH, 0.6, r#"opacity="0.35""#);
            }
        }
    }
    svg.circle(f.px(meta.goal.0, meta.goal.1), 4.0, "#2ca02c", "none");
    svg.text(
        40.0,
        606.0,
        "unknown (grey), free (white), occupied (black), inflated (pink), skeleton (green), paths (orange, last bold)",
        11.0,
    );
    Ok(svg.finish())
}

/// Renders all figures of the run in `dir` next to its data files.
/// Returns the written file names.
pub fn plot_dir(dir: &Path) -> Result<Vec<&'static str>, PlotError> {
    let meta = Meta::read(dir)?;
    let run = Table::read(dir, RUN_CSV)?;
    fs::write(dir.join(TRAJECTORY_SVG), trajectory_svg(&run, &meta)?)?;
    fs::write(dir.join(TRACES_SVG), traces_svg(&run, &meta)?)?;
    fs::write(dir.join(MAP_SVG), map_svg(dir, &meta)?)?;
    Ok(vec![TRAJECTORY_SVG, TRACES_SVG, MAP_SVG])
}
