//! ICDAR 2015 style ground truth: one `x1,y1,x2,y2,x3,y3,x4,y4,transcription`
//! per line; a `###` transcription marks a don't-care region.

use crate::error::{Error, Result};
use crate::geometry::{Point2, Quad};
use crate::labelgen::TextInstance;

pub const DONT_CARE_TEXT: &str = "###";

/// Decodes bytes as UTF-8 (a leading byte-order mark is allowed) and parses them.
pub fn parse_icdar_gt_bytes(bytes: &[u8]) -> Result<Vec<TextInstance>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        message: "invalid UTF-8".into(),
    })?;
    parse_icdar_gt(text)
}

pub fn parse_icdar_gt(text: &str) -> Result<Vec<TextInstance>> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_line(line, i + 1)?);
    }
    Ok(out)
}

fn parse_line(line: &str, number: usize) -> Result<TextInstance> {
    let err = |message: String| Error::Parse { line: number, message };
    let fields: Vec<&str> = line.splitn(9, ',').collect();
    if fields.len() < 9 {
        return Err(err(format!("expected 8 coordinates and a transcription, found {} fields", fields.len())));
    }
    let mut coords = [0.0f64; 8];
    for (k, field) in fields[..8].iter().enumerate() {
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| err(format!("coordinate {} is not a number: `{}`", k + 1, field.trim())))?;
        if !v.is_finite() {
            return Err(err(format!("coordinate {} is not finite", k + 1)));
        }
        coords[k] = v;
    }
    let points = std::array::from_fn(|k| Point2::new(coords[2 * k], coords[2 * k + 1]));
    let quad = Quad::canonical(points);
    let transcription = fields[8].trim();
    Ok(TextInstance {
        quad,
        dont_care: transcription == DONT_CARE_TEXT,
    })
}
