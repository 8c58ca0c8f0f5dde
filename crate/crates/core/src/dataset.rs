//! Trace dataset files.
//!
//! ```text
//! "TPCD" | version u32 | record count u64 | flags u32 (bit 0 truth, bit 1 labels)
//! per record:
//!   event_id u32 | pad_id u32 | 512 samples u16
//!   truth:  baseline 512 f32 | hit count u32 | per hit time, charge, width_sigma f32
//!   labels: baseline 512 f32 | deconvolved 512 f32 | score map 512 u8 (score x 255)
//! CRC32 of all preceding bytes
//! ```
//! Little-endian throughout. Samples are rounded to whole ADC channels on
//! write.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use crate::dsp::TeacherLabels;
use crate::error::{Error, Result};
use crate::models::StageLabels;
use crate::signal::{Trace, ADC_MAX, TRACE_LEN};
use crate::synth::{HitTruth, TruthRecord};

pub const DATASET_MAGIC: &[u8; 4] = b"TPCD";
pub const DATASET_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;
const MAX_HITS: u32 = TRACE_LEN as u32;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Flags {
    pub truth: bool,
    pub labels: bool,
}

impl Flags {
    fn bits(self) -> u32 {
        self.truth as u32 | (self.labels as u32) << 1
    }

    fn from_bits(bits: u32) -> Result<Self> {
        if bits & !3 != 0 {
            return Err(Error::Format(format!("dataset: unknown flag bits {bits:#x}")));
        }
        Ok(Self {
            truth: bits & 1 != 0,
            labels: bits & 2 != 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub count: u64,
    pub flags: Flags,
}

/// Teacher labels as stored: single precision, scores quantised to 1/255.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordLabels {
    pub baseline: Vec<f64>,
    pub deconvolved: Vec<f64>,
    pub scores: Vec<u8>,
}

impl From<&TeacherLabels> for RecordLabels {
    fn from(t: &TeacherLabels) -> Self {
        let q = |v: &[f64]| v.iter().map(|&x| x as f32 as f64).collect();
        Self {
            baseline: q(t.baseline.samples()),
            deconvolved: q(t.deconvolved.samples()),
            scores: t
                .score_map
                .scores()
                .iter()
                .map(|&s| (s * 255.0).round() as u8)
                .collect(),
        }
    }
}

impl From<&RecordLabels> for StageLabels {
    fn from(l: &RecordLabels) -> Self {
        StageLabels {
            baseline: l.baseline.clone(),
            deconvolved: l.deconvolved.clone(),
            scores: l.scores.iter().map(|&s| s as f64 / 255.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub trace: Trace,
    pub truth: Option<TruthRecord>,
    pub labels: Option<RecordLabels>,
}

impl Record {
    pub fn new(trace: Trace) -> Self {
        Self {
            trace,
            truth: None,
            labels: None,
        }
    }

    fn flags(&self) -> Flags {
        Flags {
            truth: self.truth.is_some(),
            labels: self.labels.is_some(),
        }
    }
}

/// Rounds to the stored ADC value.
pub fn quantize(v: f64) -> u16 {
    v.round().clamp(0.0, ADC_MAX) as u16
}

struct Hashing<T> {
    inner: T,
    crc: crc32fast::Hasher,
}

impl<W: Write> Hashing<W> {
    fn put(&mut self, b: &[u8]) -> Result<()> {
        self.crc.update(b);
        self.inner.write_all(b)?;
        Ok(())
    }
}

impl<R: Read> Hashing<R> {
    fn get<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.fill(&mut b)?;
        Ok(b)
    }

    fn fill(&mut self, b: &mut [u8]) -> Result<()> {
        read_exact(&mut self.inner, b)?;
        self.crc.update(b);
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.get()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut b = vec![0u8; n * 4];
        self.fill(&mut b)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }
}

fn read_exact(r: &mut impl Read, b: &mut [u8]) -> Result<()> {
    r.read_exact(b).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => Error::Format("dataset: truncated".into()),
        _ => Error::Io(e),
    })
}

pub struct DatasetWriter<W: Write> {
    out: Hashing<W>,
    header: Header,
    written: u64,
    buf: Vec<u8>,
}

impl<W: Write> DatasetWriter<W> {
    /// Writes the header for exactly `count` records.
    pub fn new(inner: W, count: u64, flags: Flags) -> Result<Self> {
        let mut out = Hashing {
            inner,
            crc: crc32fast::Hasher::new(),
        };
        out.put(DATASET_MAGIC)?;
        out.put(&DATASET_VERSION.to_le_bytes())?;
        out.put(&count.to_le_bytes())?;
        out.put(&flags.bits().to_le_bytes())?;
        Ok(Self {
            out,
            header: Header { count, flags },
            written: 0,
            buf: Vec::with_capacity(TRACE_LEN * 14),
        })
    }

    pub fn push(&mut self, rec: &Record) -> Result<()> {
        if rec.flags() != self.header.flags {
            return Err(Error::Format(format!(
                "dataset: record blocks {:?} differ from header {:?}",
                rec.flags(),
                self.header.flags
            )));
        }
        if self.written == self.header.count {
            return Err(Error::Format(format!(
                "dataset: more than the {} records declared",
                self.header.count
            )));
        }
        let b = &mut self.buf;
        b.clear();
        b.extend_from_slice(&rec.trace.event_id().to_le_bytes());
        b.extend_from_slice(&rec.trace.pad_id().to_le_bytes());
        for &v in rec.trace.samples() {
            b.extend_from_slice(&quantize(v).to_le_bytes());
        }
        let f32s = |b: &mut Vec<u8>, v: &[f64]| -> Result<()> {
            if v.len() != TRACE_LEN {
                return Err(Error::Length {
                    expected: TRACE_LEN,
                    found: v.len(),
                });
            }
            for &x in v {
                b.extend_from_slice(&(x as f32).to_le_bytes());
            }
            Ok(())
        };
        if let Some(t) = &rec.truth {
            f32s(b, &t.baseline)?;
            if t.hits.len() > MAX_HITS as usize {
                return Err(Error::Format(format!("dataset: {} hits in one trace", t.hits.len())));
            }
            b.extend_from_slice(&(t.hits.len() as u32).to_le_bytes());
            for h in &t.hits {
                for v in [h.time, h.charge, h.width_sigma] {
                    b.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
        }
        if let Some(l) = &rec.labels {
            f32s(b, &l.baseline)?;
            f32s(b, &l.deconvolved)?;
            if l.scores.len() != TRACE_LEN {
                return Err(Error::Length {
                    expected: TRACE_LEN,
                    found: l.scores.len(),
                });
            }
            b.extend_from_slice(&l.scores);
        }
        let buf = std::mem::take(&mut self.buf);
        let r = self.out.put(&buf);
        self.buf = buf;
        r?;
        self.written += 1;
        Ok(())
    }

    /// Appends the CRC after checking the declared count was reached.
    pub fn finish(mut self) -> Result<W> {
        if self.written != self.header.count {
            return Err(Error::Format(format!(
                "dataset: {} of {} declared records written",
                self.written, self.header.count
            )));
        }
        let crc = self.out.crc.clone().finalize();
        self.out.inner.write_all(&crc.to_le_bytes())?;
        self.out.inner.flush()?;
        Ok(self.out.inner)
    }
}

pub struct DatasetReader<R: Read> {
    input: Hashing<R>,
    header: Header,
    read: u64,
    finished: bool,
}

fn read_header(r: &mut impl Read) -> Result<([u8; HEADER_LEN], Header)> {
    let mut b = [0u8; HEADER_LEN];
    read_exact(r, &mut b)?;
    if &b[..4] != DATASET_MAGIC {
        return Err(Error::Format(format!(
            "dataset: bad magic {:?}",
            String::from_utf8_lossy(&b[..4])
        )));
    }
    let version = u32::from_le_bytes(b[4..8].try_into().expect("4 bytes"));
    if version != DATASET_VERSION {
        return Err(Error::Version {
            what: "dataset",
            found: version,
            supported: DATASET_VERSION,
        });
    }
    let count = u64::from_le_bytes(b[8..16].try_into().expect("8 bytes"));
    let flags = Flags::from_bits(u32::from_le_bytes(b[16..20].try_into().expect("4 bytes")))?;
    Ok((b, Header { count, flags }))
}

impl<R: Read> DatasetReader<R> {
    /// Reads the header. The CRC is checked once the last record has been
    /// read; use [`open_dataset`] or [`decode_dataset`] to check it first.
    pub fn new(mut inner: R) -> Result<Self> {
        let (bytes, header) = read_header(&mut inner)?;
        let mut crc = crc32fast::Hasher::new();
        crc.update(&bytes);
        Ok(Self {
            input: Hashing { inner, crc },
            header,
            read: 0,
            finished: false,
        })
    }

    pub fn header(&self) -> Header {
        self.header
    }

    fn record(&mut self) -> Result<Record> {
        let r = &mut self.input;
        let event_id = r.u32()?;
        let pad_id = r.u32()?;
        let mut raw = vec![0u8; TRACE_LEN * 2];
        r.fill(&mut raw)?;
        let samples = raw
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64)
            .collect();
        let trace = Trace::new(event_id, pad_id, samples)?;
        let truth = if self.header.flags.truth {
            let baseline = r.f32s(TRACE_LEN)?;
            let n = r.u32()?;
            if n > MAX_HITS {
                return Err(Error::Format(format!("dataset: {n} hits in one trace")));
            }
            let v = r.f32s(3 * n as usize)?;
            let hits = v
                .chunks_exact(3)
                .map(|h| HitTruth {
                    time: h[0],
                    charge: h[1],
                    width_sigma: h[2],
                })
                .collect();
            Some(TruthRecord { baseline, hits })
        } else {
            None
        };
        let labels = if self.header.flags.labels {
            let baseline = r.f32s(TRACE_LEN)?;
            let deconvolved = r.f32s(TRACE_LEN)?;
            let mut scores = vec![0u8; TRACE_LEN];
            r.fill(&mut scores)?;
            Some(RecordLabels {
                baseline,
                deconvolved,
                scores,
            })
        } else {
            None
        };
        Ok(Record {
            trace,
            truth,
            labels,
        })
    }

    fn finish(&mut self) -> Result<()> {
        let computed = self.input.crc.clone().finalize();
        let mut tail = [0u8; 4];
        read_exact(&mut self.input.inner, &mut tail)?;
        let stored = u32::from_le_bytes(tail);
        if stored != computed {
            return Err(Error::Crc { stored, computed });
        }
        let mut extra = [0u8; 1];
        if self.input.inner.read(&mut extra)? != 0 {
            return Err(Error::Format("dataset: trailing bytes after CRC".into()));
        }
        Ok(())
    }
}

impl<R: Read> Iterator for DatasetReader<R> {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        if self.read == self.header.count {
            self.finished = true;
            return self.finish().err().map(Err);
        }
        let rec = self.record();
        if rec.is_err() {
            self.finished = true;
        }
        self.read += 1;
        Some(rec)
    }
}

/// Checks magic, version and CRC of the file at `path`, then returns a
/// streaming reader over its records.
pub fn open_dataset(path: impl AsRef<Path>) -> Result<DatasetReader<BufReader<File>>> {
    let path = path.as_ref();
    let open = || File::open(path).map_err(|e| Error::file(path, e));
    let mut f = BufReader::new(open()?);
    read_header(&mut f)?;
    verify_crc(BufReader::new(open()?))?;
    DatasetReader::new(BufReader::with_capacity(1 << 16, open()?))
}

fn verify_crc(mut r: impl Read) -> Result<()> {
    let mut crc = crc32fast::Hasher::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut last4 = [0u8; 4];
    let mut have = 0usize;
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        // Hold back the last four bytes seen so far: they may be the CRC.
        let mut joined = Vec::with_capacity(have + n);
        joined.extend_from_slice(&last4[..have]);
        joined.extend_from_slice(&buf[..n]);
        let keep = joined.len().min(4);
        let (body, tail) = joined.split_at(joined.len() - keep);
        crc.update(body);
        last4[..keep].copy_from_slice(tail);
        have = keep;
    }
    if have < 4 {
        return Err(Error::Format("dataset: truncated".into()));
    }
    let stored = u32::from_le_bytes(last4);
    let computed = crc.finalize();
    if stored != computed {
        return Err(Error::Crc { stored, computed });
    }
    Ok(())
}

/// Creates the file at `path` for `count` records.
pub fn create_dataset(
    path: impl AsRef<Path>,
    count: u64,
    flags: Flags,
) -> Result<DatasetWriter<BufWriter<File>>> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::file(path, e))?;
    DatasetWriter::new(BufWriter::with_capacity(1 << 16, f), count, flags)
}

fn flags_of(records: &[Record]) -> Flags {
    records.first().map(Record::flags).unwrap_or_default()
}

pub fn encode_dataset(records: &[Record]) -> Result<Vec<u8>> {
    let mut w = DatasetWriter::new(Vec::new(), records.len() as u64, flags_of(records))?;
    for r in records {
        w.push(r)?;
    }
    w.finish()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<(Header, Vec<Record>)> {
    if bytes.len() >= HEADER_LEN {
        read_header(&mut &bytes[..])?;
    }
    crate::codec::open_container(bytes, DATASET_MAGIC, "dataset", DATASET_VERSION)?;
    let reader = DatasetReader::new(bytes)?;
    let header = reader.header();
    let records = reader.collect::<Result<_>>()?;
    Ok((header, records))
}

pub fn write_dataset(path: impl AsRef<Path>, records: &[Record]) -> Result<()> {
    let mut w = create_dataset(path, records.len() as u64, flags_of(records))?;
    for r in records {
        w.push(r)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<(Header, Vec<Record>)> {
    let path: PathBuf = path.as_ref().into();
    let reader = open_dataset(&path)?;
    let header = reader.header();
    let records = reader.collect::<Result<_>>()?;
    Ok((header, records))
}
