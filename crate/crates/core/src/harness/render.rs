//! SVG rendering of an executed run: strip frames along the continuation
//! and the task target.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harness::config::RunConfig;
use crate::harness::run::{read_trace, RunTrace, CONFIG_FILE};
use crate::strip::{positions_of, StripModel};
use crate::tasks::{TaskSpec, TaskTarget};

pub const RENDER_FILE: &str = "render.svg";

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 520.0;
const MARGIN: f64 = 30.0;
const FRAMES: usize = 6;

struct Frame {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Frame {
    fn new<'a>(points: impl Iterator<Item = &'a [f64; 2]>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for c in 0..2 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        let pad = 0.05 * (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-6);
        Self {
            lo: [lo[0] - pad, lo[1] - pad],
            hi: [hi[0] + pad, hi[1] + pad],
        }
    }

    fn scale(&self) -> f64 {
        ((WIDTH - 2.0 * MARGIN) / (self.hi[0] - self.lo[0])).min((HEIGHT - 2.0 * MARGIN) / (self.hi[1] - self.lo[1]))
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        let s = self.scale();
        (MARGIN + (p[0] - self.lo[0]) * s, HEIGHT - MARGIN - (p[1] - self.lo[1]) * s)
    }

    fn polyline(&self, pts: &[[f64; 2]]) -> String {
        let mut s = String::new();
        for (i, p) in pts.iter().enumerate() {
            let (x, y) = self.map(*p);
            if i > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{x:.2},{y:.2}");
        }
        s
    }
}

/// Centerline with the given curvature profile, starting from the left
/// clamp of `anchor`.
fn shape_from_curvature(model: &StripModel, anchor: &[[f64; 2]], profile: &[f64]) -> Vec<[f64; 2]> {
    let dl = model.rest_edge_length();
    let mut pts = vec![anchor[0], anchor[1]];
    let mut angle = (anchor[1][1] - anchor[0][1]).atan2(anchor[1][0] - anchor[0][0]);
    for k in profile {
        angle += 2.0 * (0.5 * k * dl).atan();
        let last = *pts.last().expect("nonempty");
        pts.push([last[0] + dl * angle.cos(), last[1] + dl * angle.sin()]);
    }
    pts
}

/// SVG document for a run trace.
pub fn render_svg(model: &StripModel, spec: &TaskSpec, trace: &RunTrace) -> String {
    let shapes: Vec<Vec<[f64; 2]>> = trace.z.iter().zip(&trace.x).map(|(z, x)| positions_of(model, z, x)).collect();
    let k = shapes.len() - 1;
    let picks: Vec<usize> = (0..FRAMES).map(|f| f * k / (FRAMES - 1).max(1)).collect();

    let mut extra: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut marker = None;
    let mut path = None;
    match &spec.target {
        TaskTarget::Point { point, .. } => marker = Some(*point),
        TaskTarget::Trajectory { node, anchor, reference } => {
            extra.push((0..=200).map(|i| reference.point(*anchor, i as f64 / 200.0)).collect());
            path = Some(shapes.iter().map(|s| s[*node]).collect::<Vec<_>>());
        }
        TaskTarget::Curvature { profile } => extra.push(shape_from_curvature(model, &shapes[k], profile)),
    }
    let frame = Frame::new(
        picks
            .iter()
            .flat_map(|&i| shapes[i].iter())
            .chain(extra.iter().flatten())
            .chain(marker.iter()),
    );

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(svg, "<text x=\"{MARGIN}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{}</text>", spec.name);
    for (j, &i) in picks.iter().enumerate() {
        let opacity = 0.25 + 0.75 * j as f64 / (picks.len() - 1).max(1) as f64;
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"2\" stroke-opacity=\"{opacity:.2}\" points=\"{}\"><title>lambda = {:.4}</title></polyline>",
            frame.polyline(&shapes[i]),
            trace.lambdas[i]
        );
    }
    for e in &extra {
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\" points=\"{}\"/>",
            frame.polyline(e)
        );
    }
    if let Some(p) = path {
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"#27ae60\" stroke-width=\"1.5\" points=\"{}\"/>",
            frame.polyline(&p)
        );
    }
    if let Some(p) = marker {
        let (x, y) = frame.map(p);
        let _ = writeln!(svg, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"5\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\"/>");
    }
    svg.push_str("</svg>\n");
    svg
}

/// Render the run in `run_dir` to `out` (default `run_dir/render.svg`).
pub fn render(run_dir: &Path, out: Option<&Path>) -> Result<PathBuf> {
    let config = RunConfig::load(&run_dir.join(CONFIG_FILE))?;
    let model = config.model()?;
    let spec = config.task_spec(&model)?;
    let trace = read_trace(run_dir)?;
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| run_dir.join(RENDER_FILE));
    fs::write(&target, render_svg(&model, &spec, &trace))?;
    Ok(target)
}
