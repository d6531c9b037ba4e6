//! Plain-text and SVG pictures of a route on the board.

use std::fmt::Write;

use crate::board::{GridCoord, HoldRole, Problem, COLS, ROWS};

#[derive(Debug, Clone, PartialEq)]
pub struct RenderStyle {
    pub cell_size: f64,
    pub start_color: String,
    pub mid_color: String,
    pub finish_color: String,
    pub labels: bool,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            cell_size: 32.0,
            start_color: "#2e9e44".into(),
            mid_color: "#2f6fd6".into(),
            finish_color: "#d63a2f".into(),
            labels: true,
        }
    }
}

impl RenderStyle {
    fn color(&self, role: HoldRole) -> &str {
        match role {
            HoldRole::Start => &self.start_color,
            HoldRole::Mid => &self.mid_color,
            HoldRole::Finish => &self.finish_color,
        }
    }
}

fn role_at(p: &Problem, col: usize, row: usize) -> Option<HoldRole> {
    p.holds()
        .iter()
        .find(|h| usize::from(h.pos.col()) == col && usize::from(h.pos.row()) == row)
        .map(|h| h.role)
}

/// A column header followed by 18 board rows, top row first. Holds show as
/// `S`, `M` or `F`; empty cells as `.`.
pub fn render_ascii(p: &Problem) -> String {
    let mut out = String::from("   ");
    for c in 0..COLS {
        out.push(' ');
        out.push(char::from(b'A' + c as u8));
    }
    out.push('\n');
    for row in (0..ROWS).rev() {
        write!(out, "{:>3}", row + 1).unwrap();
        for col in 0..COLS {
            out.push(' ');
            out.push(role_at(p, col, row).map_or('.', HoldRole::glyph));
        }
        out.push('\n');
    }
    out
}

/// An SVG 1.1 drawing: the grid as rectangles, one circle per hold.
pub fn render_svg(p: &Problem, style: &RenderStyle) -> String {
    assert!(style.cell_size > 0.0, "cell size must be positive");
    let s = style.cell_size;
    let margin = if style.labels { s } else { 0.0 };
    let width = margin + COLS as f64 * s;
    let height = margin + ROWS as f64 * s;
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )
    .unwrap();
    writeln!(out, r#"  <title>{}</title>"#, escape(p.name())).unwrap();
    writeln!(out, r##"  <rect x="0" y="0" width="{width}" height="{height}" fill="#f4f1ea"/>"##).unwrap();
    for row in 0..ROWS {
        for col in 0..COLS {
            let (x, y) = cell_origin(col, row, s, margin);
            writeln!(
                out,
                r##"  <rect x="{x}" y="{y}" width="{s}" height="{s}" fill="none" stroke="#c8c2b4" stroke-width="1"/>"##
            )
            .unwrap();
        }
    }
    if style.labels {
        let font = s * 0.4;
        for col in 0..COLS {
            let (x, _) = cell_origin(col, 0, s, margin);
            writeln!(
                out,
                r#"  <text x="{}" y="{}" font-size="{font}" text-anchor="middle">{}</text>"#,
                x + s / 2.0,
                s * 0.65,
                char::from(b'A' + col as u8)
            )
            .unwrap();
        }
        for row in 0..ROWS {
            let (_, y) = cell_origin(0, row, s, margin);
            writeln!(
                out,
                r#"  <text x="{}" y="{}" font-size="{font}" text-anchor="middle">{}</text>"#,
                s / 2.0,
                y + s * 0.65,
                row + 1
            )
            .unwrap();
        }
    }
    for hold in p.holds() {
        let (cx, cy) = hold_center(hold.pos, s, margin);
        writeln!(
            out,
            r#"  <circle cx="{cx}" cy="{cy}" r="{}" fill="none" stroke="{}" stroke-width="{}"><title>{} {:?}</title></circle>"#,
            s * 0.4,
            escape(style.color(hold.role)),
            s * 0.1,
            hold.pos,
            hold.role
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn cell_origin(col: usize, row: usize, s: f64, margin: f64) -> (f64, f64) {
    (margin + col as f64 * s, margin + (ROWS - 1 - row) as f64 * s)
}

fn hold_center(c: GridCoord, s: f64, margin: f64) -> (f64, f64) {
    let (x, y) = cell_origin(usize::from(c.col()), usize::from(c.row()), s, margin);
    (x + s / 2.0, y + s / 2.0)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
