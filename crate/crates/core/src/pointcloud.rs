//! Hits to space points.
//!
//! Pad geometry is a CSV file with header `pad_id,x,y` (millimetres). A
//! cloud point keeps the drift time in buckets; converting to millimetres is
//! left to the consumer.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Hit, TRACE_LEN};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PadPlane {
    pads: HashMap<u32, (f64, f64)>,
}

impl PadPlane {
    pub fn from_pads(pads: impl IntoIterator<Item = (u32, f64, f64)>) -> Result<Self> {
        let mut map = HashMap::new();
        for (id, x, y) in pads {
            if !(x.is_finite() && y.is_finite()) {
                return Err(Error::NonFinite(format!("coordinates of pad {id}")));
            }
            if map.insert(id, (x, y)).is_some() {
                return Err(Error::DuplicatePad(id));
            }
        }
        Ok(Self { pads: map })
    }

    /// A `cols` x `rows` rectangular grid with `pitch` mm spacing, centred
    /// on the origin, numbered row by row.
    pub fn grid(cols: u32, rows: u32, pitch: f64) -> Self {
        let x0 = -0.5 * pitch * (cols.max(1) - 1) as f64;
        let y0 = -0.5 * pitch * (rows.max(1) - 1) as f64;
        let pads = (0..rows).flat_map(|r| {
            (0..cols).map(move |c| (r * cols + c, x0 + pitch * c as f64, y0 + pitch * r as f64))
        });
        Self::from_pads(pads).expect("grid ids are unique")
    }

    pub fn len(&self) -> usize {
        self.pads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pads.is_empty()
    }

    pub fn position(&self, pad_id: u32) -> Result<(f64, f64)> {
        self.pads.get(&pad_id).copied().ok_or(Error::UnknownPad(pad_id))
    }

    /// Pads sorted by id.
    pub fn pads(&self) -> Vec<(u32, f64, f64)> {
        let mut v: Vec<_> = self.pads.iter().map(|(&id, &(x, y))| (id, x, y)).collect();
        v.sort_unstable_by_key(|p| p.0);
        v
    }

    pub fn read_csv(reader: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "pad_id,x,y" {
            return Err(Error::Format(format!("pad plane header {:?}", header.trim())));
        }
        let mut pads = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Format(format!("pad plane line {}: {line:?}", n + 2));
            let mut f = line.split(',').map(str::trim);
            let (Some(id), Some(x), Some(y), None) = (f.next(), f.next(), f.next(), f.next()) else {
                return Err(bad());
            };
            pads.push((
                id.parse().map_err(|_| bad())?,
                x.parse().map_err(|_| bad())?,
                y.parse().map_err(|_| bad())?,
            ));
        }
        Self::from_pads(pads)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_csv(f)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "pad_id,x,y")?;
        for (id, x, y) in self.pads() {
            writeln!(w, "{id},{},{}", sig6(x), sig6(y))?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)?;
        w.flush().map_err(|e| Error::file(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub event_id: u32,
    pub pad_id: u32,
    pub x: f64,
    pub y: f64,
    /// Drift time in buckets.
    pub t: f64,
    /// Integrated charge, ADC x bucket.
    pub q: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloudEvent {
    pub event_id: u32,
    pub points: Vec<CloudPoint>,
}

impl PointCloudEvent {
    pub fn total_charge(&self) -> f64 {
        self.points.iter().map(|p| p.q).sum()
    }
}

/// One point per hit, in hit order.
pub fn assemble(event_id: u32, hits: &[Hit], plane: &PadPlane) -> Result<PointCloudEvent> {
    let points = hits
        .iter()
        .map(|h| {
            let (x, y) = plane.position(h.pad_id)?;
            if !(h.charge > 0.0) {
                return Err(Error::Param(format!("hit on pad {} has charge {}", h.pad_id, h.charge)));
            }
            if !(0.0..=(TRACE_LEN - 1) as f64).contains(&h.time) {
                return Err(Error::Param(format!("hit on pad {} at time {}", h.pad_id, h.time)));
            }
            Ok(CloudPoint {
                event_id,
                pad_id: h.pad_id,
                x,
                y,
                t: h.time,
                q: h.charge,
            })
        })
        .collect::<Result<_>>()?;
    Ok(PointCloudEvent { event_id, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Csv,
    Json,
}

impl CloudFormat {
    /// `.json` selects JSON, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Self::Json,
            _ => Self::Csv,
        }
    }
}

/// Shortest decimal form with 6 significant digits.
pub fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{}", if v == 0.0 { 0.0 } else { v });
    }
    let r: f64 = format!("{v:.5e}").parse().expect("formatted float parses");
    format!("{r}")
}

fn rounded(p: &CloudPoint) -> CloudPoint {
    let r = |v: f64| sig6(v).parse::<f64>().expect("formatted float parses");
    CloudPoint {
        x: r(p.x),
        y: r(p.y),
        t: r(p.t),
        q: r(p.q),
        ..*p
    }
}

pub const CLOUD_HEADER: &str = "event_id,pad_id,x,y,t,q";

pub fn write_cloud_csv(events: &[PointCloudEvent], mut w: impl Write) -> Result<()> {
    writeln!(w, "{CLOUD_HEADER}")?;
    for p in events.iter().flat_map(|e| &e.points) {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            p.event_id,
            p.pad_id,
            sig6(p.x),
            sig6(p.y),
            sig6(p.t),
            sig6(p.q)
        )?;
    }
    Ok(())
}

pub fn write_cloud_json(events: &[PointCloudEvent], w: impl Write) -> Result<()> {
    let events: Vec<PointCloudEvent> = events
        .iter()
        .map(|e| PointCloudEvent {
            event_id: e.event_id,
            points: e.points.iter().map(rounded).collect(),
        })
        .collect();
    serde_json::to_writer(w, &events)?;
    Ok(())
}

/// Reads a cloud CSV back, grouping consecutive rows of one event.
pub fn read_cloud_csv(reader: impl Read) -> Result<Vec<PointCloudEvent>> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != CLOUD_HEADER {
        return Err(Error::Format(format!("cloud header {:?}", header.trim())));
    }
    let mut events: Vec<PointCloudEvent> = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("cloud line {}: {line:?}", n + 2));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
        let p = CloudPoint {
            event_id: f[0].parse().map_err(|_| bad())?,
            pad_id: f[1].parse().map_err(|_| bad())?,
            x: num(2)?,
            y: num(3)?,
            t: num(4)?,
            q: num(5)?,
        };
        match events.last_mut() {
            Some(e) if e.event_id == p.event_id => e.points.push(p),
            _ => events.push(PointCloudEvent {
                event_id: p.event_id,
                points: vec![p],
            }),
        }
    }
    Ok(events)
}

pub fn read_cloud_json(reader: impl Read) -> Result<Vec<PointCloudEvent>> {
    Ok(serde_json::from_reader(BufReader::new(reader))?)
}

pub fn export_cloud(events: &[PointCloudEvent], path: impl AsRef<Path>, format: CloudFormat) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    match format {
        CloudFormat::Csv => write_cloud_csv(events, &mut w)?,
        CloudFormat::Json => write_cloud_json(events, &mut w)?,
    }
    w.flush().map_err(|e| Error::file(path, e))
}

pub fn import_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<Vec<PointCloudEvent>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    match format {
        CloudFormat::Csv => read_cloud_csv(f),
        CloudFormat::Json => read_cloud_json(f),
    }
}
