//! Deterministic SVG rendering of plans and shapes: solid polylines for
//! planned shapes, dashed for fitted/observed overlays, a horizontal
//! surface line at y0, and per-curve color cycling. Polyline vertices
//! are written in world coordinates; a single affine group transform
//! maps the world viewport to screen space, so rendered coordinates can
//! be parsed back and compared to shape samples exactly.

use std::fmt::Write as _;

use crate::elastica::{DloShape, StiffnessSpec};
use crate::error::Result;
use crate::planner::{node_shape, PlanPath};

/// Line style of one rendered polyline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stroke {
    Solid,
    Dashed,
}

/// One polyline to draw, in world coordinates (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub points: Vec<(f64, f64)>,
    pub stroke: Stroke,
}

/// Matplotlib "tab10" cycle; familiar and distinguishable.
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
    "#7f7f7f", "#bcbd22", "#17becf",
];

const IMAGE_WIDTH: f64 = 800.0;

/// Render layers over a surface line at `y0`. With no layers, the
/// output still shows the surface line over a default viewport.
pub fn render_document(layers: &[Layer], y0: f64) -> String {
    // world bounding box
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (y0, y0);
    for layer in layers {
        for &(x, y) in &layer.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() {
        x_min = -0.1;
        x_max = 0.4;
    }
    let pad = 0.05 * ((x_max - x_min).max(y_max - y_min)).max(0.1);
    x_min -= pad;
    x_max += pad;
    y_min -= pad;
    y_max += pad;

    let scale = IMAGE_WIDTH / (x_max - x_min);
    let height = scale * (y_max - y_min);
    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{IMAGE_WIDTH}\" height=\"{height}\" \
         viewBox=\"0 0 {IMAGE_WIDTH} {height}\">"
    )
    .expect("string write");
    // world -> screen: x' = scale (x - x_min), y' = scale (y_max - y)
    writeln!(
        svg,
        "  <g transform=\"matrix({scale} 0 0 {} {} {})\" fill=\"none\" \
         stroke-linecap=\"round\" stroke-linejoin=\"round\">",
        -scale,
        -scale * x_min,
        scale * y_max
    )
    .expect("string write");
    writeln!(
        svg,
        "    <line x1=\"{x_min}\" y1=\"{y0}\" x2=\"{x_max}\" y2=\"{y0}\" stroke=\"#444444\" \
         stroke-width=\"1.5\" vector-effect=\"non-scaling-stroke\"/>"
    )
    .expect("string write");
    for (i, layer) in layers.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = match layer.stroke {
            Stroke::Solid => String::new(),
            Stroke::Dashed => " stroke-dasharray=\"6 4\"".to_string(),
        };
        let mut pts = String::new();
        for (j, &(x, y)) in layer.points.iter().enumerate() {
            if j > 0 {
                pts.push(' ');
            }
            write!(pts, "{x},{y}").expect("string write");
        }
        writeln!(
            svg,
            "    <polyline points=\"{pts}\" stroke=\"{color}\" stroke-width=\"1.5\" \
             vector-effect=\"non-scaling-stroke\"{dash}/>"
        )
        .expect("string write");
    }
    svg.push_str("  </g>\n</svg>\n");
    svg
}

pub fn shape_layer(shape: &DloShape, stroke: Stroke) -> Layer {
    Layer {
        points: shape.samples().iter().map(|st| (st.x, st.y)).collect(),
        stroke,
    }
}

/// Render every node of a plan as a solid polyline, with optional
/// dashed overlays (fitted/observed shapes).
pub fn render_plan(
    plan: &PlanPath,
    stiffness: &StiffnessSpec,
    samples: usize,
    overlays: &[DloShape],
) -> Result<String> {
    let mut layers = Vec::new();
    for node in &plan.nodes {
        layers.push(shape_layer(&node_shape(node, stiffness, samples)?, Stroke::Solid));
    }
    for shape in overlays {
        layers.push(shape_layer(shape, Stroke::Dashed));
    }
    Ok(render_document(&layers, plan.surface.y0))
}
