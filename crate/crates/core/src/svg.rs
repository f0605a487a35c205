//! Overhead SVG plots: obstacles, planned paths and swept footprints.
//! East points right and north up.

use std::fmt::Write as _;

use crate::formulations::Obstacle;
use crate::geom::{ConvexPolygon, Point2};
use crate::nlp::problem::FlatTrajectory;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One trajectory to draw.
pub struct Track<'a> {
    pub label: &'a str,
    pub trajectory: &'a FlatTrajectory,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotOptions {
    /// Pixels per metre.
    pub scale: f64,
    /// Spacing of footprint copies along each track, s.
    pub footprint_step: f64,
    /// Also draw each obstacle's enclosing ellipse.
    pub ellipses: bool,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self { scale: 40.0, footprint_step: 0.25, ellipses: true }
    }
}

struct Frame {
    min_e: f64,
    max_n: f64,
    scale: f64,
}

impl Frame {
    fn map(&self, p: Point2) -> (f64, f64) {
        ((p.y - self.min_e) * self.scale, (self.max_n - p.x) * self.scale)
    }

    fn points(&self, pts: impl IntoIterator<Item = Point2>) -> String {
        pts.into_iter()
            .map(|p| {
                let (x, y) = self.map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn track_points(t: &FlatTrajectory, step: f64) -> Vec<f64> {
    let (t0, t1) = t.horizon();
    let n = ((t1 - t0) / step).ceil().max(1.0) as usize;
    (0..=n).map(|k| (t0 + k as f64 * step).min(t1)).collect()
}

/// Render obstacles and tracks with the vessel footprint swept along each.
pub fn render(
    obstacles: &[Obstacle],
    footprint: &ConvexPolygon,
    tracks: &[Track<'_>],
    options: &PlotOptions,
) -> String {
    let mut pts: Vec<Point2> = obstacles.iter().flat_map(|o| o.polygon.vertices().to_vec()).collect();
    if options.ellipses {
        pts.extend(obstacles.iter().filter_map(|o| o.ellipse.as_ref()).flat_map(|e| e.outline(96)));
    }
    let reach = footprint.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max);
    for tr in tracks {
        for t in track_points(tr.trajectory, options.footprint_step) {
            let p = tr.trajectory.pose(t).position;
            pts.extend([p + Point2::new(reach, reach), p - Point2::new(reach, reach)]);
        }
    }
    let pad = 1.0;
    let min_n = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min) - pad;
    let max_n = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max) + pad;
    let min_e = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min) - pad;
    let max_e = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max) + pad;
    let frame = Frame { min_e, max_n, scale: options.scale };
    let legend = 16.0 * tracks.len() as f64 + 8.0;
    let (w, h) = ((max_e - min_e) * options.scale, (max_n - min_n) * options.scale + legend);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for o in obstacles {
        let _ = writeln!(
            out,
            r##"<polygon points="{}" fill="#bbbbbb" stroke="black" stroke-width="1"><title>{}</title></polygon>"##,
            frame.points(o.polygon.vertices().iter().copied()),
            o.name
        );
        if let (true, Some(e)) = (options.ellipses, &o.ellipse) {
            let outline = e.outline(96);
            let _ = writeln!(
                out,
                r#"<polygon points="{}" fill="none" stroke="gray" stroke-dasharray="4 3" stroke-width="1"/>"#,
                frame.points(outline)
            );
        }
    }
    for (i, tr) in tracks.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let _ = writeln!(out, r#"<g fill="{colour}" fill-opacity="0.08" stroke="none"><title>{}</title>"#, tr.label);
        for t in track_points(tr.trajectory, options.footprint_step) {
            let pose = tr.trajectory.pose(t);
            let _ = writeln!(
                out,
                r#"<polygon points="{}"/>"#,
                frame.points(footprint.vertices().iter().map(|v| pose.apply(*v)))
            );
        }
        let _ = writeln!(out, "</g>");
        let path = track_points(tr.trajectory, options.footprint_step / 4.0)
            .into_iter()
            .map(|t| tr.trajectory.pose(t).position);
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"><title>{}</title></polyline>"#,
            frame.points(path),
            tr.label
        );
    }
    for (i, tr) in tracks.iter().enumerate() {
        let y = (max_n - min_n) * options.scale + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            out,
            r#"<text x="8" y="{y:.0}" font-family="monospace" font-size="12" fill="{}">{}</text>"#,
            PALETTE[i % PALETTE.len()],
            tr.label
        );
    }
    let _ = writeln!(out, "</svg>");
    out
}
