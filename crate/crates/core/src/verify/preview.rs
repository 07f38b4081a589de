//! Schematic renderer used when no TeX toolchain is available.
//!
//! Draws what the node graph knows: nodes as boxes or circles at their
//! declared (or laid out) positions, path segments as lines with arrow tips.
//! Labels are drawn as stroke placeholders, one per word. The output is a
//! stand-in for judging and dataset images, not a faithful render.

use std::collections::HashMap;
use std::sync::LazyLock;

use image::{Rgb, RgbImage};
use imageproc::drawing::{
    draw_filled_circle_mut, draw_filled_rect_mut, draw_hollow_circle_mut, draw_hollow_rect_mut,
    draw_line_segment_mut, draw_polygon_mut,
};
use imageproc::point::Point;
use imageproc::rect::Rect;
use regex::Regex;

use crate::code::{node_declaration, parse_lenient, walk_path, DiagramCode, Endpoint, NodeKind, PathEvent};

pub const PREVIEW_WIDTH: u32 = 640;
pub const PREVIEW_HEIGHT: u32 = 480;
const MARGIN: f64 = 100.0;
const MAX_SCALE: f64 = 80.0;
/// Spacing for nodes placed relative to another node, in TikZ units.
const NODE_DISTANCE: f64 = 1.5;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);

static RELATIVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(above|below)?\s*(left|right)?\s*(?:=\s*(?:[\d.]+\s*\w*\s+)?of\s+|\s+of\s*=\s*)([A-Za-z0-9_@.\-]+)")
        .unwrap()
});

struct Shape {
    id: Option<String>,
    label: String,
    style: String,
    pos: Option<(f64, f64)>,
    relative: Option<(String, (f64, f64))>,
}

struct Stroke {
    from: Endpoint,
    to: Endpoint,
    op: String,
    style: String,
}

pub fn render_preview(code: &DiagramCode) -> RgbImage {
    let (tree, _) = parse_lenient(code);
    let mut shapes: Vec<Shape> = Vec::new();
    let mut strokes: Vec<Stroke> = Vec::new();

    for stmt in tree.statements() {
        let toks = tree.node_tokens(stmt);
        match stmt.kind {
            NodeKind::NodeDecl => {
                if let Some(v) = node_declaration(toks) {
                    let relative = relative_placement(&v.style);
                    shapes.push(Shape {
                        id: Some(v.id),
                        label: v.label,
                        style: v.style,
                        pos: v.position,
                        relative,
                    });
                } else if let Some(label) = toks.iter().find_map(|t| t.block_inner()) {
                    shapes.push(Shape {
                        id: None,
                        label: label.trim().to_string(),
                        style: String::new(),
                        pos: None,
                        relative: None,
                    });
                }
            }
            NodeKind::EdgeDecl if toks.len() > 1 => {
                let mut here: Option<(f64, f64)> = None;
                for ev in walk_path(&toks[1..]) {
                    match ev {
                        PathEvent::MoveTo(e) => {
                            if let Endpoint::Point(p) = e {
                                here = p;
                            }
                        }
                        PathEvent::Segment { op, from, to, style } => {
                            if let Endpoint::Point(p) = &to {
                                here = *p;
                            }
                            strokes.push(Stroke { from, to, op, style });
                        }
                        PathEvent::InlineNode { id, label, style } => shapes.push(Shape {
                            id,
                            label,
                            style,
                            pos: here,
                            relative: None,
                        }),
                    }
                }
            }
            _ => {}
        }
    }

    let centers = layout(&mut shapes);
    let mut points: Vec<(f64, f64)> = centers.clone();
    let index: HashMap<&str, usize> = shapes
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.id.as_deref().map(|id| (id, i)))
        .collect();
    let resolve = |e: &Endpoint| -> Option<((f64, f64), Option<usize>)> {
        match e {
            Endpoint::Node(id) => index.get(id.as_str()).map(|&i| (centers[i], Some(i))),
            Endpoint::Point(p) => p.map(|p| (p, None)),
        }
    };
    for s in &strokes {
        for e in [&s.from, &s.to] {
            if let Some((p, None)) = resolve(e) {
                points.push(p);
            }
        }
    }

    let mut img = RgbImage::from_pixel(PREVIEW_WIDTH, PREVIEW_HEIGHT, WHITE);
    if points.is_empty() {
        return img;
    }
    let view = Viewport::fit(&points);
    let sizes: Vec<(f64, f64)> = shapes.iter().map(box_size).collect();

    for s in &strokes {
        let (Some((a, ai)), Some((b, bi))) = (resolve(&s.from), resolve(&s.to)) else {
            continue;
        };
        let mut pa = view.map(a);
        let mut pb = view.map(b);
        if let Some(i) = ai {
            pa = clip_to_box(pa, pb, sizes[i]);
        }
        if let Some(i) = bi {
            pb = clip_to_box(pb, pa, sizes[i]);
        }
        let color = color_of(&s.style).unwrap_or(BLACK);
        draw_thick_line(&mut img, pa, pb, color);
        let tips = if s.style.contains("<->") || s.op == "<->" {
            (true, true)
        } else {
            let end = s.style.contains("->") || s.style.contains("-latex") || s.style.contains("-stealth")
                || s.style.contains("-Stealth") || s.style.contains("-Latex") || s.op == "->";
            let start = s.style.contains("<-") || s.op == "<-";
            (start, end)
        };
        if tips.1 {
            draw_arrow_tip(&mut img, pa, pb, color);
        }
        if tips.0 {
            draw_arrow_tip(&mut img, pb, pa, color);
        }
    }

    for (i, s) in shapes.iter().enumerate() {
        draw_shape(&mut img, s, view.map(centers[i]), sizes[i]);
    }
    img
}

fn relative_placement(style: &str) -> Option<(String, (f64, f64))> {
    let c = RELATIVE.captures(style)?;
    let dy = match c.get(1).map(|m| m.as_str()) {
        Some("above") => 1.0,
        Some("below") => -1.0,
        _ => 0.0,
    };
    let dx = match c.get(2).map(|m| m.as_str()) {
        Some("left") => -1.0,
        Some("right") => 1.0,
        _ => 0.0,
    };
    if dx == 0.0 && dy == 0.0 {
        return None;
    }
    Some((c[3].to_string(), (dx * NODE_DISTANCE, dy * NODE_DISTANCE)))
}

/// Resolves every shape to a position in TikZ units. Relative placements are
/// chased through their anchors. When nothing more resolves, the first
/// unplaced shape goes to the next free grid cell below the placed ones (the
/// origin if nothing is placed yet) and chasing resumes.
fn layout(shapes: &mut [Shape]) -> Vec<(f64, f64)> {
    let ids: HashMap<String, usize> = shapes
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.id.clone().map(|id| (id, i)))
        .collect();
    let mut pos: Vec<Option<(f64, f64)>> = shapes.iter().map(|s| s.pos).collect();
    let mut grid: Option<(f64, f64, usize)> = None;
    loop {
        // bounded fixpoint: each pass places at least one shape or stops
        for _ in 0..shapes.len() {
            let mut changed = false;
            for i in 0..shapes.len() {
                if pos[i].is_some() {
                    continue;
                }
                if let Some((anchor, (dx, dy))) = &shapes[i].relative {
                    if let Some(&(ax, ay)) = ids.get(anchor).and_then(|&j| pos[j].as_ref()) {
                        pos[i] = Some((ax + dx, ay + dy));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let Some(next) = (0..shapes.len()).find(|&i| pos[i].is_none()) else {
            break;
        };
        let (gx, gy, k) = *grid.get_or_insert_with(|| {
            let placed: Vec<(f64, f64)> = pos.iter().flatten().copied().collect();
            if placed.is_empty() {
                (0.0, 0.0, 0)
            } else {
                let x0 = placed.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
                let y0 = placed.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                (x0, y0 - 2.0, 0)
            }
        });
        let cols = 4;
        pos[next] = Some((gx + 2.0 * (k % cols) as f64, gy - 2.0 * (k / cols) as f64));
        grid = Some((gx, gy, k + 1));
    }
    pos.into_iter().map(|p| p.unwrap_or((0.0, 0.0))).collect()
}

struct Viewport {
    scale: f64,
    cx: f64,
    cy: f64,
}

impl Viewport {
    fn fit(points: &[(f64, f64)]) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let sx = (PREVIEW_WIDTH as f64 - 2.0 * MARGIN) / (x1 - x0).max(1e-9);
        let sy = (PREVIEW_HEIGHT as f64 - 2.0 * MARGIN) / (y1 - y0).max(1e-9);
        Viewport {
            scale: sx.min(sy).min(MAX_SCALE),
            cx: (x0 + x1) / 2.0,
            cy: (y0 + y1) / 2.0,
        }
    }

    fn map(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (
            PREVIEW_WIDTH as f64 / 2.0 + (x - self.cx) * self.scale,
            PREVIEW_HEIGHT as f64 / 2.0 - (y - self.cy) * self.scale,
        )
    }
}

fn words(label: &str) -> Vec<usize> {
    label
        .split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).count().max(1))
        .collect()
}

/// Half extents of a shape in pixels.
fn box_size(s: &Shape) -> (f64, f64) {
    let chars: usize = words(&s.label).iter().sum::<usize>() + words(&s.label).len().saturating_sub(1);
    if chars == 0 {
        return (4.0, 4.0);
    }
    let w = (8.0 + 3.5 * chars as f64).min(90.0);
    if s.style.contains("circle") {
        let r = w.max(14.0);
        (r, r)
    } else {
        (w, 14.0)
    }
}

fn clip_to_box(p: (f64, f64), toward: (f64, f64), (hw, hh): (f64, f64)) -> (f64, f64) {
    let (dx, dy) = (toward.0 - p.0, toward.1 - p.1);
    let t = [hw / dx.abs(), hh / dy.abs()]
        .into_iter()
        .filter(|t| t.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !t.is_finite() || t >= 1.0 {
        return p;
    }
    (p.0 + dx * t, p.1 + dy * t)
}

fn draw_thick_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy).max(1e-9);
    let (nx, ny) = (-dy / len * 0.5, dx / len * 0.5);
    for k in [-1.0, 0.0, 1.0] {
        draw_line_segment_mut(
            img,
            ((a.0 + nx * k) as f32, (a.1 + ny * k) as f32),
            ((b.0 + nx * k) as f32, (b.1 + ny * k) as f32),
            color,
        );
    }
}

fn draw_arrow_tip(img: &mut RgbImage, from: (f64, f64), tip: (f64, f64), color: Rgb<u8>) {
    let (dx, dy) = (tip.0 - from.0, tip.1 - from.1);
    let len = dx.hypot(dy);
    if len < 1.0 {
        return;
    }
    let (ux, uy) = (dx / len, dy / len);
    let base = (tip.0 - ux * 10.0, tip.1 - uy * 10.0);
    let pts = [
        Point::new(tip.0.round() as i32, tip.1.round() as i32),
        Point::new((base.0 - uy * 5.0).round() as i32, (base.1 + ux * 5.0).round() as i32),
        Point::new((base.0 + uy * 5.0).round() as i32, (base.1 - ux * 5.0).round() as i32),
    ];
    if pts[0] != pts[1] && pts[0] != pts[2] && pts[1] != pts[2] {
        draw_polygon_mut(img, &pts, color);
    }
}

fn draw_shape(img: &mut RgbImage, s: &Shape, (x, y): (f64, f64), (hw, hh): (f64, f64)) {
    let cx = x.round() as i32;
    let cy = y.round() as i32;
    let stroke = color_of(&s.style).unwrap_or(BLACK);
    let fill = fill_of(&s.style);
    let outlined = s.style.split(',').any(|o| o.trim() == "draw" || o.trim().starts_with("draw="));

    if s.label.trim().is_empty() && fill.is_none() && !outlined {
        draw_filled_circle_mut(img, (cx, cy), 2, stroke);
        return;
    }
    if s.style.contains("circle") {
        let r = hw.round() as i32;
        if let Some(f) = fill {
            draw_filled_circle_mut(img, (cx, cy), r, f);
        }
        if outlined || fill.is_none() {
            draw_hollow_circle_mut(img, (cx, cy), r, stroke);
            draw_hollow_circle_mut(img, (cx, cy), r - 1, stroke);
        }
    } else {
        let rect = Rect::at(cx - hw as i32, cy - hh as i32).of_size((2.0 * hw) as u32, (2.0 * hh) as u32);
        if let Some(f) = fill {
            draw_filled_rect_mut(img, rect, f);
        }
        if outlined {
            draw_hollow_rect_mut(img, rect, stroke);
            let inner = Rect::at(rect.left() + 1, rect.top() + 1)
                .of_size(rect.width().saturating_sub(2).max(1), rect.height().saturating_sub(2).max(1));
            draw_hollow_rect_mut(img, inner, stroke);
        }
    }

    let ws = words(&s.label);
    if ws.is_empty() {
        return;
    }
    let total: f64 = ws.iter().map(|&n| 3.5 * n as f64).sum::<f64>() + 4.0 * (ws.len() - 1) as f64;
    let mut x0 = x - total / 2.0;
    let text = color_of_text(&s.style).unwrap_or(BLACK);
    for n in ws {
        let w = 3.5 * n as f64;
        let r = Rect::at(x0.round() as i32, cy - 2).of_size(w.max(1.0) as u32, 4);
        draw_filled_rect_mut(img, r, text);
        x0 += w + 4.0;
    }
}

fn base_color(name: &str) -> Option<[f64; 3]> {
    let c: [u8; 3] = match name.trim() {
        "black" => [0, 0, 0],
        "red" => [220, 30, 30],
        "green" => [30, 160, 60],
        "blue" => [30, 60, 220],
        "cyan" => [0, 170, 200],
        "magenta" => [200, 0, 160],
        "yellow" => [230, 200, 0],
        "orange" => [240, 140, 20],
        "purple" => [130, 40, 160],
        "violet" => [130, 40, 200],
        "brown" => [140, 80, 30],
        "gray" | "grey" => [128, 128, 128],
        "lightgray" | "lightgrey" => [200, 200, 200],
        "darkgray" | "darkgrey" => [64, 64, 64],
        "teal" => [0, 128, 128],
        "white" => [255, 255, 255],
        _ => return None,
    };
    Some(c.map(f64::from))
}

/// xcolor expressions: `c!p` tints toward white, `c!p!d` mixes `p`% of `c`
/// with `d`, and chains fold left.
fn named_color(expr: &str) -> Option<Rgb<u8>> {
    let mut parts = expr.trim().split('!');
    let mut acc = base_color(parts.next()?)?;
    while let Some(p) = parts.next() {
        let pct = p.trim().parse::<f64>().ok()?.clamp(0.0, 100.0) / 100.0;
        let other = match parts.next() {
            Some(c) => base_color(c)?,
            None => [255.0; 3],
        };
        for (a, o) in acc.iter_mut().zip(other) {
            *a = pct * *a + (1.0 - pct) * o;
        }
    }
    Some(Rgb(acc.map(|v| v.round().clamp(0.0, 255.0) as u8)))
}

fn keyed_color(style: &str, key: &str) -> Option<Rgb<u8>> {
    style
        .split(',')
        .find_map(|o| o.trim().strip_prefix(key).and_then(|v| v.trim().strip_prefix('=')))
        .and_then(named_color)
}

/// Stroke color: `draw=<c>`, `color=<c>` or a bare color name.
fn color_of(style: &str) -> Option<Rgb<u8>> {
    keyed_color(style, "draw")
        .or_else(|| keyed_color(style, "color"))
        .or_else(|| style.split(',').find_map(named_color))
}

fn fill_of(style: &str) -> Option<Rgb<u8>> {
    keyed_color(style, "fill")
}

fn color_of_text(style: &str) -> Option<Rgb<u8>> {
    keyed_color(style, "text")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dark_pixels(img: &RgbImage) -> usize {
        img.pixels().filter(|p| p.0.iter().any(|&c| c < 128)).count()
    }

    #[test]
    fn empty_picture_is_blank() {
        let img = render_preview(&DiagramCode::new("\\begin{tikzpicture}\\end{tikzpicture}"));
        assert_eq!(img.dimensions(), (PREVIEW_WIDTH, PREVIEW_HEIGHT));
        assert_eq!(dark_pixels(&img), 0);
    }

    #[test]
    fn nodes_and_edges_leave_ink() {
        let src = "\\begin{tikzpicture}\n\\node[draw] (a) at (0,0) {Input};\n\\node[draw] (b) at (3,0) {Output};\n\\draw[->] (a) -- (b);\n\\end{tikzpicture}";
        let img = render_preview(&DiagramCode::new(src));
        assert!(dark_pixels(&img) > 200);
        // the connecting line crosses the vertical midline
        let mid = PREVIEW_WIDTH / 2;
        assert!((0..PREVIEW_HEIGHT).any(|y| img.get_pixel(mid, y).0[0] < 128));
    }

    #[test]
    fn deterministic() {
        let src = "\\node (a) {A}; \\node[right=of a] (b) {B}; \\draw (a) -- (b);";
        let a = render_preview(&DiagramCode::new(src));
        let b = render_preview(&DiagramCode::new(src));
        assert_eq!(a.as_raw(), b.as_raw());
    }

    #[test]
    fn relative_placement_parses() {
        assert_eq!(relative_placement("draw, right=of a"), Some(("a".into(), (NODE_DISTANCE, 0.0))));
        assert_eq!(
            relative_placement("below left=1cm of x1"),
            Some(("x1".into(), (-NODE_DISTANCE, -NODE_DISTANCE)))
        );
        assert_eq!(relative_placement("draw"), None);
    }

    #[test]
    fn relative_chain_from_unplaced_anchor() {
        let shape = |id: &str, style: &str| Shape {
            id: Some(id.into()),
            label: String::new(),
            style: style.into(),
            pos: None,
            relative: relative_placement(style),
        };
        let mut shapes = vec![shape("a", "draw"), shape("b", "below=of a"), shape("c", "right=of b")];
        let p = layout(&mut shapes);
        assert_eq!(p, vec![(0.0, 0.0), (0.0, -NODE_DISTANCE), (NODE_DISTANCE, -NODE_DISTANCE)]);
    }

    #[test]
    fn colors() {
        assert_eq!(color_of("draw=red"), Some(Rgb([220, 30, 30])));
        assert_eq!(fill_of("draw, fill=blue!20"), Some(Rgb([210, 216, 248])));
        assert_eq!(named_color("green!50!black"), Some(Rgb([15, 80, 30])));
        assert_eq!(named_color("red!x"), None);
        assert_eq!(color_of("thick"), None);
    }
}
