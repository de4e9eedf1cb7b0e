// SPDX-License-Identifier: Apache-2.0

//! Machine log CSV: header `t,x,y,z`, seconds and millimetres, one sample per
//! row. This is the converter output for native machine-data containers.

use std::fmt::Write as _;

use super::IngestError;
use crate::Point3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineSample {
    pub t: f64,
    pub position: Point3,
}

/// Executed toolpath as logged by the machine. Timestamps strictly increase.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MachineToolpath {
    pub samples: Vec<MachineSample>,
}

impl MachineToolpath {
    /// Mean sampling rate; `None` with fewer than two samples.
    pub fn sample_rate_hz(&self) -> Option<f64> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        if self.samples.len() < 2 {
            return None;
        }
        Some((self.samples.len() - 1) as f64 / (last.t - first.t))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,z\n");
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{},{}", s.t, s.position.x, s.position.y, s.position.z);
        }
        out
    }
}

/// Rows are numbered by physical line, so the header is row 1.
pub fn parse_machine_log(stream: &[u8]) -> Result<MachineToolpath, IngestError> {
    let text = std::str::from_utf8(stream).map_err(|_| IngestError::InvalidUtf8)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end_matches('\r') == "t,x,y,z" => {}
        _ => return Err(IngestError::BadHeader),
    }

    let mut samples: Vec<MachineSample> = Vec::new();
    let mut rows = lines.enumerate().map(|(i, l)| (i + 2, l.trim_end_matches('\r')));
    while let Some((row, line)) = rows.next() {
        if line.is_empty() {
            // Blank lines are only tolerated at the end of the file.
            if rows.all(|(_, l)| l.is_empty()) {
                break;
            }
            return Err(IngestError::BadFieldCount(row));
        }
        let mut fields = [0.0f64; 4];
        let mut count = 0;
        for field in line.split(',') {
            if count == 4 {
                return Err(IngestError::BadFieldCount(row));
            }
            fields[count] = field.trim().parse().map_err(|_| IngestError::MalformedField(row))?;
            count += 1;
        }
        if count != 4 {
            return Err(IngestError::BadFieldCount(row));
        }
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(IngestError::NonFiniteCoordinate(row));
        }
        let [t, x, y, z] = fields;
        if samples.last().is_some_and(|prev| t <= prev.t) {
            return Err(IngestError::NonMonotoneTime(row));
        }
        samples.push(MachineSample {
            t,
            position: Point3::new(x, y, z),
        });
    }
    Ok(MachineToolpath { samples })
}
