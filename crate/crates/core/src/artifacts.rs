//! On-disk formats: surface and observation CSVs, JSON reports and SVG heatmaps.
//!
//! Reals are written in Rust's shortest round-trip form, so reading a file back
//! reproduces every value bit for bit. All text is UTF-8 with `\n` line endings.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::analysis::SurfaceGrid;
use crate::error::{Error, Result};
use crate::problem::GridSpec;
use crate::surrogate::LossObservation;

pub const SURFACE_HEADER: &str = "w1,w2,value";
pub const OBSERVATIONS_HEADER: &str = "w1,w2,b,loss,g1,g2";

/// Shortest decimal that parses back to the same `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v:?}")
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn surface_csv(surface: &SurfaceGrid) -> String {
    let mut out = String::with_capacity(32 * surface.values.len());
    out.push_str(SURFACE_HEADER);
    out.push('\n');
    for (w, v) in surface.grid.nodes().iter().zip(&surface.values) {
        let _ = writeln!(out, "{},{},{}", format_real(w[0]), format_real(w[1]), format_real(*v));
    }
    out
}

pub fn write_surface_csv(surface: &SurfaceGrid, path: &Path) -> Result<()> {
    write_text(path, &surface_csv(surface))
}

fn parse_error(path: &Path, line: usize, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    }
}

fn data_rows<'a>(path: &'a Path, text: &'a str, header: &str) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)> + 'a> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        other => {
            return Err(parse_error(
                path,
                1,
                format!("expected header `{header}`, found `{}`", other.unwrap_or("")),
            ))
        }
    }
    Ok(lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 2, l.split(',').map(str::trim).collect())))
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, field: &str, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    field
        .parse()
        .map_err(|e| parse_error(path, line, format!("bad {name} `{field}`: {e}")))
}

/// Infer the grid from a square row-major node list: lower corner first, upper corner last.
fn infer_grid(path: &Path, points: &[[f64; 2]]) -> Result<GridSpec> {
    let res = (points.len() as f64).sqrt().round() as usize;
    if res < 2 || res * res != points.len() {
        return Err(parse_error(
            path,
            1,
            format!("{} rows do not form a square grid", points.len()),
        ));
    }
    let grid = GridSpec::new(points[0], points[points.len() - 1], res)
        .map_err(|e| parse_error(path, 2, e))?;
    let tol = 1e-9 * grid.step()[0].max(grid.step()[1]);
    for (k, (p, node)) in points.iter().zip(grid.nodes()).enumerate() {
        if (p[0] - node[0]).abs() > tol || (p[1] - node[1]).abs() > tol {
            return Err(parse_error(
                path,
                k + 2,
                format!("({}, {}) is not grid node ({}, {})", p[0], p[1], node[0], node[1]),
            ));
        }
    }
    Ok(grid)
}

/// Read a surface CSV, recovering its grid from the node coordinates.
pub fn read_surface_csv(path: &Path) -> Result<SurfaceGrid> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (line, fields) in data_rows(path, &text, SURFACE_HEADER)? {
        if fields.len() != 3 {
            return Err(parse_error(path, line, format!("expected 3 fields, found {}", fields.len())));
        }
        points.push([
            parse_field(path, line, fields[0], "w1")?,
            parse_field(path, line, fields[1], "w2")?,
        ]);
        values.push(parse_field(path, line, fields[2], "value")?);
    }
    let grid = infer_grid(path, &points)?;
    SurfaceGrid::new(grid, values)
}

pub fn observations_csv(observations: &[LossObservation]) -> String {
    let mut out = String::with_capacity(64 * observations.len());
    out.push_str(OBSERVATIONS_HEADER);
    out.push('\n');
    for o in observations {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            format_real(o.w[0]),
            format_real(o.w[1]),
            o.batch_size,
            format_real(o.value),
            format_real(o.gradient[0]),
            format_real(o.gradient[1]),
        );
    }
    out
}

pub fn write_observations_csv(observations: &[LossObservation], path: &Path) -> Result<()> {
    write_text(path, &observations_csv(observations))
}

pub fn read_observations_csv(path: &Path) -> Result<Vec<LossObservation>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (line, f) in data_rows(path, &text, OBSERVATIONS_HEADER)? {
        if f.len() != 6 {
            return Err(parse_error(path, line, format!("expected 6 fields, found {}", f.len())));
        }
        let o = LossObservation {
            w: [parse_field(path, line, f[0], "w1")?, parse_field(path, line, f[1], "w2")?],
            batch_size: parse_field(path, line, f[2], "b")?,
            value: parse_field(path, line, f[3], "loss")?,
            gradient: [parse_field(path, line, f[4], "g1")?, parse_field(path, line, f[5], "g2")?],
        };
        let finite = o.w.iter().chain(&o.gradient).all(|v| v.is_finite()) && o.value.is_finite();
        if !finite || o.batch_size == 0 || o.value < 0.0 {
            return Err(parse_error(path, line, "observation must be finite with b >= 1 and loss >= 0"));
        }
        out.push(o);
    }
    if out.is_empty() {
        return Err(parse_error(path, 2, "no observations"));
    }
    Ok(out)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Colour at the low end of the heatmap ramp.
pub const COLOUR_LOW: [u8; 3] = [68, 1, 84];
/// Colour at the high end of the heatmap ramp.
pub const COLOUR_HIGH: [u8; 3] = [253, 231, 37];

const SVG_SIZE: f64 = 600.0;

/// Linear RGB interpolation from [`COLOUR_LOW`] at `min` to [`COLOUR_HIGH`] at `max`.
/// A constant surface maps entirely to the low colour.
pub fn colour_for(v: f64, min: f64, max: f64) -> [u8; 3] {
    let t = if max > min { ((v - min) / (max - min)).clamp(0.0, 1.0) } else { 0.0 };
    let mut c = [0u8; 3];
    for k in 0..3 {
        let lo = COLOUR_LOW[k] as f64;
        let hi = COLOUR_HIGH[k] as f64;
        c[k] = (lo + t * (hi - lo)).round() as u8;
    }
    c
}

/// One `<rect class="cell">` per node, `w1` to the right and `w2` upward, plus an
/// optional red square around the node nearest `marker`.
pub fn heatmap_svg(surface: &SurfaceGrid, marker: Option<[f64; 2]>) -> String {
    let res = surface.grid.resolution;
    let cell = SVG_SIZE / res as f64;
    let (min, max) = surface.min_max();
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}" shape-rendering="crispEdges">"#,
        s = SVG_SIZE
    );
    let _ = writeln!(out, "<desc>min {} max {}</desc>", format_real(min), format_real(max));
    for j in 0..res {
        for i in 0..res {
            let [r, g, b] = colour_for(surface.at(i, j), min, max);
            let x = i as f64 * cell;
            let y = (res - 1 - j) as f64 * cell;
            let _ = writeln!(
                out,
                r##"<rect class="cell" x="{x:.3}" y="{y:.3}" width="{cell:.3}" height="{cell:.3}" fill="#{r:02x}{g:02x}{b:02x}"/>"##
            );
        }
    }
    if let Some(w) = marker {
        let step = surface.grid.step();
        let i = (((w[0] - surface.grid.lower[0]) / step[0]).round().max(0.0) as usize).min(res - 1);
        let j = (((w[1] - surface.grid.lower[1]) / step[1]).round().max(0.0) as usize).min(res - 1);
        let x = i as f64 * cell;
        let y = (res - 1 - j) as f64 * cell;
        let stroke = (cell / 4.0).max(1.0);
        let _ = writeln!(
            out,
            r#"<rect class="marker" x="{x:.3}" y="{y:.3}" width="{cell:.3}" height="{cell:.3}" fill="none" stroke="red" stroke-width="{stroke:.3}"/>"#
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn render_heatmap_svg(surface: &SurfaceGrid, path: &Path, marker: Option<[f64; 2]>) -> Result<()> {
    write_text(path, &heatmap_svg(surface, marker))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::locate_min;

    fn surface(res: usize, f: impl Fn([f64; 2]) -> f64) -> SurfaceGrid {
        let g = GridSpec::square(res).unwrap();
        SurfaceGrid::new(g, g.nodes().into_iter().map(f).collect()).unwrap()
    }

    #[test]
    fn two_by_two_csv_layout() {
        let s = surface(2, |w| w[0] + 10.0 * w[1]);
        let text = surface_csv(&s);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "w1,w2,value");
        assert_eq!(lines[1], "-2.0,-2.0,-22.0");
        assert_eq!(lines[2], "2.0,-2.0,-18.0");
        assert!(text.ends_with('\n') && !text.contains('\r'));
    }

    #[test]
    fn surface_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let s = surface(7, |w| (w[0] * 1.234_567_891).sin() / 3.0 + w[1].exp() * 1e-9);
        write_surface_csv(&s, &path).unwrap();
        let back = read_surface_csv(&path).unwrap();
        assert_eq!(back.grid, s.grid);
        for (a, b) in back.values.iter().zip(&s.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn observations_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("o.csv");
        let obs = vec![
            LossObservation { w: [-2.0, 0.1], value: 0.3, gradient: [-1.5, 2.0 / 3.0], batch_size: 3 },
            LossObservation { w: [1.0, 2.0], value: 0.0, gradient: [0.0, -0.0], batch_size: 1 },
        ];
        write_observations_csv(&obs, &path).unwrap();
        assert!(fs::read_to_string(&path).unwrap().starts_with("w1,w2,b,loss,g1,g2\n"));
        assert_eq!(read_observations_csv(&path).unwrap(), obs);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "x,y\n1,2\n").unwrap();
        assert!(matches!(read_surface_csv(&path), Err(Error::Parse { .. })));
        fs::write(&path, "w1,w2,value\n0,0,1\n1,0,1\n0,1,1\n").unwrap();
        assert!(matches!(read_surface_csv(&path), Err(Error::Parse { .. })));
        fs::write(&path, "w1,w2,b,loss,g1,g2\n0,0,0,1,0,0\n").unwrap();
        assert!(matches!(read_observations_csv(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn heatmap_rect_counts_and_colours() {
        let s = surface(25, |w| w[0] * w[0] + w[1] * w[1]);
        let svg = heatmap_svg(&s, Some(locate_min(&s).0));
        assert_eq!(svg.matches(r#"<rect class="cell""#).count(), 625);
        assert_eq!(svg.matches(r#"<rect class="marker""#).count(), 1);
        assert!(svg.contains(r#"stroke="red""#));
        assert!(svg.trim_end().ends_with("</svg>"));

        let flat = surface(5, |_| 2.0);
        let svg = heatmap_svg(&flat, None);
        let fills: std::collections::BTreeSet<&str> =
            svg.match_indices("fill=\"#").map(|(i, _)| &svg[i + 6..i + 13]).collect();
        assert_eq!(fills.len(), 1);
        assert_eq!(svg.matches("<rect").count(), 25);
    }

    #[test]
    fn marker_lands_on_lowest_node() {
        // Lowest node is (i, j) = (3, 1) on a 5x5 grid; SVG y is flipped.
        let mut s = surface(5, |_| 1.0);
        s.values[5 + 3] = -1.0;
        let svg = heatmap_svg(&s, Some(locate_min(&s).0));
        let cell = 600.0 / 5.0;
        assert!(svg.contains(&format!(
            r#"<rect class="marker" x="{:.3}" y="{:.3}""#,
            3.0 * cell,
            3.0 * cell
        )));
    }

    #[test]
    fn colour_ramp_endpoints() {
        assert_eq!(colour_for(0.0, 0.0, 1.0), COLOUR_LOW);
        assert_eq!(colour_for(1.0, 0.0, 1.0), COLOUR_HIGH);
        assert_eq!(colour_for(5.0, 5.0, 5.0), COLOUR_LOW);
    }
}
