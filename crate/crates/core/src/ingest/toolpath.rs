// SPDX-License-Identifier: Apache-2.0

//! Minimal G-code dialect for prescribed toolpath programs.
//!
//! One command per line, whitespace-separated words, case-insensitive.
//! `G0`/`G1` move the tool in absolute millimetres; absent axis words keep
//! their previous (modal) value. `;` and `//` start a comment. A comment of
//! the form `;LAYER:<n>` tags the following segments with a layer hint.
//! Feed rates (`F`) are in mm/s.

use std::fmt::Write as _;

use super::IngestError;
use crate::Point3;

/// Feed rate assumed until the first `F` word is seen.
pub const DEFAULT_FEED_MM_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Motion {
    /// `G0`
    Rapid,
    /// `G1`
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: Point3,
    pub end: Point3,
    pub feed_rate: f64,
    pub motion: Motion,
    pub layer_hint: Option<u32>,
    /// 1-based line number in the source program.
    pub source_line: usize,
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }
}

/// A commanded toolpath. Segments are contiguous in program order and all
/// coordinates are millimetres.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PrescribedToolpath {
    pub segments: Vec<Segment>,
}

impl PrescribedToolpath {
    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkipReason {
    Blank,
    Comment,
    /// A recognised `;LAYER:<n>` marker.
    LayerMarker(u32),
    /// A command outside the supported dialect, e.g. `M104` or `G28`.
    Unsupported(String),
    /// A move that leaves the position unchanged (feed-only updates included).
    NoMotion,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkipRecord {
    pub line: usize,
    pub reason: SkipReason,
}

/// Result of parsing a program: the toolpath plus a record of every line that
/// did not produce a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramParse {
    pub toolpath: PrescribedToolpath,
    pub skips: Vec<SkipRecord>,
    /// Words on move lines that were ignored (`E`, `N`, ...), as (line, word).
    pub ignored_words: Vec<(usize, String)>,
    pub line_count: usize,
}

pub fn parse_toolpath_program(text: &str) -> Result<ProgramParse, IngestError> {
    let mut position = Point3::origin();
    let mut feed = DEFAULT_FEED_MM_S;
    let mut layer_hint = None;
    let mut segments = Vec::new();
    let mut skips = Vec::new();
    let mut ignored_words = Vec::new();
    let mut line_count = 0;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        line_count = line_no;
        let (code, comment) = split_comment(raw_line);
        let code = code.trim();

        if code.is_empty() {
            let reason = match comment.and_then(layer_marker) {
                Some(layer) => {
                    layer_hint = Some(layer);
                    SkipReason::LayerMarker(layer)
                }
                None if comment.is_some() => SkipReason::Comment,
                None => SkipReason::Blank,
            };
            skips.push(SkipRecord { line: line_no, reason });
            continue;
        }

        let mut words = code.split_whitespace().peekable();
        // Leading block numbers are allowed and ignored.
        while let Some(w) = words.peek() {
            if w.len() > 1 && w.as_bytes()[0].eq_ignore_ascii_case(&b'N') {
                words.next();
            } else {
                break;
            }
        }
        let Some(command) = words.next() else {
            skips.push(SkipRecord {
                line: line_no,
                reason: SkipReason::Blank,
            });
            continue;
        };
        let motion = match parse_command(command, line_no)? {
            Some(m) => m,
            None => {
                skips.push(SkipRecord {
                    line: line_no,
                    reason: SkipReason::Unsupported(command.to_ascii_uppercase()),
                });
                continue;
            }
        };

        let mut target = position;
        for word in words {
            let letter = word.as_bytes()[0].to_ascii_uppercase();
            match letter {
                b'X' | b'Y' | b'Z' | b'F' => {
                    let value = parse_number(&word[1..], line_no)?;
                    match letter {
                        b'X' => target.x = value,
                        b'Y' => target.y = value,
                        b'Z' => target.z = value,
                        _ => {
                            if value <= 0.0 {
                                return Err(IngestError::MalformedLine(line_no));
                            }
                            feed = value;
                        }
                    }
                }
                _ => ignored_words.push((line_no, word.to_string())),
            }
        }

        if target == position {
            skips.push(SkipRecord {
                line: line_no,
                reason: SkipReason::NoMotion,
            });
            continue;
        }
        segments.push(Segment {
            start: position,
            end: target,
            feed_rate: feed,
            motion,
            layer_hint,
            source_line: line_no,
        });
        position = target;
    }

    Ok(ProgramParse {
        toolpath: PrescribedToolpath { segments },
        skips,
        ignored_words,
        line_count,
    })
}

/// Serialises a toolpath back to the dialect. Parsing the output reproduces
/// the segments exactly for any toolpath that starts at the origin.
pub fn write_toolpath_program(toolpath: &PrescribedToolpath) -> String {
    let mut out = String::new();
    let mut hint = None;
    for seg in &toolpath.segments {
        if seg.layer_hint != hint {
            if let Some(layer) = seg.layer_hint {
                let _ = writeln!(out, ";LAYER:{layer}");
            }
            hint = seg.layer_hint;
        }
        let cmd = match seg.motion {
            Motion::Rapid => "G0",
            Motion::Linear => "G1",
        };
        let _ = writeln!(
            out,
            "{cmd} X{} Y{} Z{} F{}",
            seg.end.x, seg.end.y, seg.end.z, seg.feed_rate
        );
    }
    out
}

fn split_comment(line: &str) -> (&str, Option<&str>) {
    let semi = line.find(';');
    let slashes = line.find("//");
    match (semi, slashes) {
        (Some(a), Some(b)) if b < a => (&line[..b], Some(&line[b + 2..])),
        (Some(a), _) => (&line[..a], Some(&line[a + 1..])),
        (None, Some(b)) => (&line[..b], Some(&line[b + 2..])),
        (None, None) => (line, None),
    }
}

fn layer_marker(comment: &str) -> Option<u32> {
    let c = comment.trim();
    if !c.get(..6)?.eq_ignore_ascii_case("LAYER:") {
        return None;
    }
    c[6..].trim().parse().ok()
}

/// `Ok(Some(motion))` for G0/G1, `Ok(None)` for any other well-formed command.
fn parse_command(word: &str, line_no: usize) -> Result<Option<Motion>, IngestError> {
    let letter = word.as_bytes()[0].to_ascii_uppercase();
    if !letter.is_ascii_alphabetic() {
        return Err(IngestError::MalformedLine(line_no));
    }
    if letter != b'G' {
        return Ok(None);
    }
    let code: f64 = word[1..].parse().map_err(|_| IngestError::MalformedLine(line_no))?;
    Ok(if code == 0.0 {
        Some(Motion::Rapid)
    } else if code == 1.0 {
        Some(Motion::Linear)
    } else {
        None
    })
}

fn parse_number(text: &str, line_no: usize) -> Result<f64, IngestError> {
    let value: f64 = text.parse().map_err(|_| IngestError::MalformedLine(line_no))?;
    if !value.is_finite() {
        return Err(IngestError::NonFiniteCoordinate(line_no));
    }
    Ok(value)
}
