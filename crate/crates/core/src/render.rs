//! Timeline rendering of segment profiles and schedules.
//!
//! The text form is a scaled bar per row: each column shows the largest
//! `max_access` among the segments it covers (`9` caps larger values, `.` is
//! zero, a blank is idle time). The SVG form draws one rectangle per segment,
//! shaded by access count.

use std::fmt::Write as _;

use crate::scheduler::Schedule;
use crate::segments::SegmentSequence;
use crate::Cycles;

pub const TEXT_WIDTH: usize = 64;

/// (start, end, max_access) spans drawn on one row.
type Row = Vec<(Cycles, Cycles, u64)>;

fn bar(row: &Row, horizon: Cycles, width: usize) -> String {
    let mut out = String::with_capacity(width);
    for col in 0..width as u64 {
        let lo = col * horizon / width as u64;
        let hi = ((col + 1) * horizon / width as u64).max(lo + 1);
        let cell = row
            .iter()
            .filter(|&&(s, e, _)| s < hi && lo < e)
            .map(|&(_, _, a)| a)
            .max();
        out.push(match cell {
            None => ' ',
            Some(0) => '.',
            Some(a) => char::from_digit(a.min(9) as u32, 10).unwrap(),
        });
    }
    out
}

fn seq_row(seq: &SegmentSequence) -> Row {
    seq.segments
        .iter()
        .map(|s| (s.start, s.end(), s.max_access()))
        .collect()
}

pub fn segments_text(name: &str, seq: &SegmentSequence) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{name} |{}| {}",
        bar(&seq_row(seq), seq.d_max, TEXT_WIDTH),
        seq.d_max
    );
    for (k, s) in seq.segments.iter().enumerate() {
        let _ = writeln!(
            out,
            "  seg {k}: [{}, {}) max_access {}",
            s.start,
            s.end(),
            s.max_access()
        );
    }
    out
}

pub fn schedule_text(sch: &Schedule) -> String {
    let mut out = String::new();
    let horizon = sch.makespan.max(1);
    for (c, segs) in sch.cores.iter().enumerate() {
        let row: Row = segs
            .iter()
            .map(|s| (s.start, s.end(), s.max_access))
            .collect();
        let _ = writeln!(out, "core {c} |{}|", bar(&row, horizon, TEXT_WIDTH));
    }
    let _ = writeln!(out, "makespan {}", sch.makespan);
    out
}

const ROW_H: u64 = 24;
const LABEL_W: u64 = 90;
const PLOT_W: u64 = 720;

fn shade(a: u64, max: u64) -> String {
    if a == 0 {
        return "#e8e8e8".into();
    }
    let f = a as f64 / max.max(1) as f64;
    let v = (200.0 - 160.0 * f) as u8;
    format!("#{v:02x}{v:02x}ff")
}

fn svg(rows: &[(String, Row)], horizon: Cycles) -> String {
    let horizon = horizon.max(1);
    let max = rows
        .iter()
        .flat_map(|(_, r)| r.iter().map(|x| x.2))
        .max()
        .unwrap_or(0);
    let h = ROW_H * rows.len() as u64 + 30;
    let w = LABEL_W + PLOT_W + 20;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="monospace" font-size="12">"#
    );
    for (k, (label, row)) in rows.iter().enumerate() {
        let y = k as u64 * ROW_H + 4;
        let _ = writeln!(
            out,
            r#"  <text x="4" y="{}">{}</text>"#,
            y + 15,
            escape(label)
        );
        for &(s, e, a) in row {
            let x = LABEL_W + s * PLOT_W / horizon;
            let rw = ((e - s) * PLOT_W / horizon).max(1);
            let _ = writeln!(
                out,
                r##"  <rect x="{x}" y="{y}" width="{rw}" height="{}" fill="{}" stroke="#444" stroke-width="0.5"><title>[{s}, {e}) max_access {a}</title></rect>"##,
                ROW_H - 6,
                shade(a, max)
            );
        }
    }
    let axis_y = rows.len() as u64 * ROW_H + 18;
    let _ = writeln!(out, r#"  <text x="{LABEL_W}" y="{axis_y}">0</text>"#);
    let _ = writeln!(
        out,
        r#"  <text x="{}" y="{axis_y}" text-anchor="end">{horizon}</text>"#,
        LABEL_W + PLOT_W
    );
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn segments_svg(profiles: &[(&str, &SegmentSequence)]) -> String {
    let rows: Vec<(String, Row)> = profiles
        .iter()
        .map(|(n, s)| (n.to_string(), seq_row(s)))
        .collect();
    let horizon = profiles.iter().map(|(_, s)| s.d_max).max().unwrap_or(0);
    svg(&rows, horizon)
}

pub fn schedule_svg(sch: &Schedule) -> String {
    let rows: Vec<(String, Row)> = sch
        .cores
        .iter()
        .enumerate()
        .map(|(c, segs)| {
            (
                format!("core {c}"),
                segs.iter()
                    .map(|s| (s.start, s.end(), s.max_access))
                    .collect(),
            )
        })
        .collect();
    svg(&rows, sch.makespan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segments::{Segment, TraceId};

    fn seq() -> SegmentSequence {
        let s = |start, dur, a| Segment::new(start, dur, [(TraceId(0), a)].into());
        SegmentSequence {
            segments: vec![s(0, 32, 0), s(32, 16, 2), s(48, 16, 0)],
            d_max: 64,
        }
    }

    #[test]
    fn text_bar_is_scaled() {
        let t = segments_text("x", &seq());
        let first = t.lines().next().unwrap();
        assert_eq!(
            first,
            format!(
                "x |{}{}{}| 64",
                ".".repeat(32),
                "2".repeat(16),
                ".".repeat(16)
            )
        );
        assert!(t.contains("seg 1: [32, 48) max_access 2"));
    }

    #[test]
    fn svg_has_one_rect_per_segment() {
        let s = seq();
        let out = segments_svg(&[("x", &s)]);
        assert!(out.starts_with("<svg"));
        assert_eq!(out.matches("<rect").count(), 3);
    }
}
