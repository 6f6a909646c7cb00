//! SVG overlay of detections, optionally coloured by ground-truth matches.

use std::fmt::Write;

use crate::geometry::Quad;
use crate::labelgen::{ImageSize, TextInstance};
use crate::nms::QuadBox;
use crate::pipeline::evaluate;

/// IoU at which a detection counts as matched in the overlay.
pub const SVG_MATCH_IOU: f64 = 0.5;

pub const COLOR_MATCHED: &str = "#1a9850";
pub const COLOR_UNMATCHED: &str = "#d73027";
pub const COLOR_PLAIN: &str = "#4575b4";
pub const COLOR_GT: &str = "#7f7f7f";

fn points_attr(q: &Quad) -> String {
    q.points
        .iter()
        .map(|p| format!("{:.2},{:.2}", p.x, p.y))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders `detections` on a `size` canvas. With ground truth, the GT outlines
/// are drawn dashed and each detection is green when matched at IoU 0.5 and
/// red otherwise.
pub fn render_svg(size: ImageSize, detections: &[QuadBox], ground_truth: Option<&[TextInstance]>) -> String {
    let mut matched = vec![false; detections.len()];
    if let Some(gts) = ground_truth {
        if let Some(r) = evaluate(detections, gts, &[SVG_MATCH_IOU]).first() {
            for m in &r.matches {
                matched[m.detection] = true;
            }
        }
    }
    let (w, h) = (size.width, size.height);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect class="canvas" x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    if let Some(gts) = ground_truth {
        for g in gts {
            let class = if g.dont_care { "gt dont-care" } else { "gt" };
            let _ = writeln!(
                s,
                r#"<polygon class="{class}" points="{}" fill="none" stroke="{COLOR_GT}" stroke-dasharray="4 2"/>"#,
                points_attr(&g.quad)
            );
        }
    }
    for (d, b) in detections.iter().enumerate() {
        let (class, color) = match ground_truth {
            None => ("det", COLOR_PLAIN),
            Some(_) if matched[d] => ("det matched", COLOR_MATCHED),
            Some(_) => ("det unmatched", COLOR_UNMATCHED),
        };
        let _ = writeln!(
            s,
            r#"<polygon class="{class}" points="{}" fill="none" stroke="{color}" stroke-width="2"><title>{:.4}</title></polygon>"#,
            points_attr(&b.quad),
            b.score
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colours_follow_matches() {
        let gt = vec![TextInstance::new(Quad::axis_aligned(0.0, 0.0, 100.0, 20.0))];
        let dets = vec![
            QuadBox::new(Quad::axis_aligned(1.0, 0.0, 101.0, 20.0), 0.9, [1.0; 4]),
            QuadBox::new(Quad::axis_aligned(200.0, 200.0, 250.0, 220.0), 0.8, [1.0; 4]),
        ];
        let svg = render_svg(ImageSize::new(300, 300), &dets, Some(&gt));
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches(COLOR_MATCHED).count(), 1);
        assert_eq!(svg.matches(COLOR_UNMATCHED).count(), 1);
        assert_eq!(svg.matches(r#"class="gt""#).count(), 1);
        assert!(svg.contains(r#"points="1.00,0.00 101.00,0.00 101.00,20.00 1.00,20.00""#));
    }

    #[test]
    fn deterministic_without_gt() {
        let dets = vec![QuadBox::new(Quad::axis_aligned(0.0, 0.0, 4.0, 4.0), 1.0, [1.0; 4])];
        let a = render_svg(ImageSize::new(8, 8), &dets, None);
        assert_eq!(a, render_svg(ImageSize::new(8, 8), &dets, None));
        assert!(a.contains(COLOR_PLAIN));
        assert!(a.trim_end().ends_with("</svg>"));
    }
}
