//! Event streams, per-pixel last-event timestamps and time-surface rendering.
//!
//! A time surface holds, per pixel, an exponential decay of the age of the
//! most recent event there, rescaled to `[0, 255]`. Edges of a moving scene
//! show up bright; the 255-complement ("negative") turns edge alignment into
//! a minimization.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("line {line}: malformed event record: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: event ({x}, {y}) outside {width}x{height} sensor")]
    OutOfBounds {
        line: usize,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("line {line}: timestamp {t} decreases below {prev}")]
    OutOfOrder { line: usize, t: f64, prev: f64 },
    #[error("decay rate eta must be positive, got {0}")]
    NonPositiveEta(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which camera of the stereo pair a stream belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CameraSide {
    Left,
    Right,
}

/// A single brightness-change event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Time in seconds.
    pub t: f64,
    pub x: u16,
    pub y: u16,
    /// Sign of the brightness change, -1 or +1.
    pub polarity: i8,
}

/// What to do with records whose timestamps go backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutOfOrderPolicy {
    /// Reject the stream with an error naming the offending line.
    #[default]
    Reject,
    /// Stably sort records by timestamp.
    StableSort,
}

/// Optional polarity restriction when feeding events into a timestamp map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PolarityFilter {
    #[default]
    Both,
    PositiveOnly,
    NegativeOnly,
}

impl PolarityFilter {
    pub fn accepts(&self, polarity: i8) -> bool {
        match self {
            PolarityFilter::Both => true,
            PolarityFilter::PositiveOnly => polarity > 0,
            PolarityFilter::NegativeOnly => polarity < 0,
        }
    }
}

/// Time-ordered sequence of events from one camera.
#[derive(Debug, Clone)]
pub struct EventStream {
    pub width: u32,
    pub height: u32,
    pub side: CameraSide,
    events: Vec<Event>,
}

impl EventStream {
    /// Validate raw `(t, x, y, polarity)` records into a stream.
    ///
    /// Polarities 0 and -1 map to -1, 1 maps to +1; anything else is
    /// malformed. Non-decreasing timestamps are enforced according to
    /// `policy`.
    pub fn from_records(
        records: impl IntoIterator<Item = (f64, u32, u32, i8)>,
        width: u32,
        height: u32,
        side: CameraSide,
        policy: OutOfOrderPolicy,
    ) -> Result<Self, EventError> {
        let mut events = Vec::new();
        let mut prev_t = f64::NEG_INFINITY;
        let mut sorted = true;
        for (i, (t, x, y, p)) in records.into_iter().enumerate() {
            let line = i + 1;
            if !t.is_finite() || t < 0.0 {
                return Err(EventError::Malformed {
                    line,
                    msg: format!("bad timestamp {t}"),
                });
            }
            if x >= width || y >= height {
                return Err(EventError::OutOfBounds {
                    line,
                    x,
                    y,
                    width,
                    height,
                });
            }
            let polarity = match p {
                0 | -1 => -1,
                1 => 1,
                other => {
                    return Err(EventError::Malformed {
                        line,
                        msg: format!("polarity {other} not in {{-1, 0, 1}}"),
                    })
                }
            };
            if t < prev_t {
                if policy == OutOfOrderPolicy::Reject {
                    return Err(EventError::OutOfOrder {
                        line,
                        t,
                        prev: prev_t,
                    });
                }
                sorted = false;
            }
            prev_t = prev_t.max(t);
            events.push(Event {
                t,
                x: x as u16,
                y: y as u16,
                polarity,
            });
        }
        if !sorted {
            events.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
        }
        Ok(Self {
            width,
            height,
            side,
            events,
        })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// Per-pixel timestamp of the most recent event; pixels that never fired hold
/// a negative-infinity sentinel.
#[derive(Debug, Clone)]
pub struct LastTimestampMap {
    pub width: u32,
    pub height: u32,
    t_last: Vec<f64>,
    max_t: f64,
}

impl LastTimestampMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            t_last: vec![f64::NEG_INFINITY; (width as usize) * (height as usize)],
            max_t: f64::NEG_INFINITY,
        }
    }

    /// Record an event; only the event's own pixel changes.
    pub fn advance(&mut self, e: &Event) {
        debug_assert!((e.x as u32) < self.width && (e.y as u32) < self.height);
        let idx = e.y as usize * self.width as usize + e.x as usize;
        self.t_last[idx] = e.t;
        if e.t > self.max_t {
            self.max_t = e.t;
        }
    }

    /// Timestamp of the last event at the pixel; `None` if it never fired.
    pub fn last_at(&self, x: u32, y: u32) -> Option<f64> {
        let v = self.t_last[y as usize * self.width as usize + x as usize];
        if v == f64::NEG_INFINITY {
            None
        } else {
            Some(v)
        }
    }

    pub fn latest_time(&self) -> Option<f64> {
        if self.max_t == f64::NEG_INFINITY {
            None
        } else {
            Some(self.max_t)
        }
    }

    /// Render the exponential-decay time surface at time `t` with decay rate
    /// `eta` (seconds). Pixels that never fired render to 0; a pixel whose
    /// last event is at `t` renders to 255. Rounding is half-away-from-zero.
    pub fn render(&self, t: f64, eta: f64) -> Result<TimeSurface, EventError> {
        if eta <= 0.0 {
            return Err(EventError::NonPositiveEta(eta));
        }
        debug_assert!(
            self.max_t == f64::NEG_INFINITY || t >= self.max_t,
            "render time {t} precedes newest event {}",
            self.max_t
        );
        let values = self
            .t_last
            .iter()
            .map(|&tl| {
                if tl == f64::NEG_INFINITY {
                    0
                } else {
                    let v = (255.0 * (-(t - tl) / eta).exp()).round();
                    v.clamp(0.0, 255.0) as u8
                }
            })
            .collect();
        Ok(TimeSurface {
            width: self.width,
            height: self.height,
            t,
            eta,
            values,
        })
    }
}

/// Rendered time surface (or its negative): `u8` image plus render metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSurface {
    pub width: u32,
    pub height: u32,
    /// Render time in seconds.
    pub t: f64,
    /// Decay rate in seconds.
    pub eta: f64,
    values: Vec<u8>,
}

impl TimeSurface {
    pub fn from_values(width: u32, height: u32, t: f64, eta: f64, values: Vec<u8>) -> Self {
        assert_eq!(values.len(), (width as usize) * (height as usize));
        Self {
            width,
            height,
            t,
            eta,
            values,
        }
    }

    pub fn value(&self, x: u32, y: u32) -> u8 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    /// 255-complement, an exact involution on the integer range.
    pub fn negate(&self) -> TimeSurface {
        TimeSurface {
            width: self.width,
            height: self.height,
            t: self.t,
            eta: self.eta,
            values: self.values.iter().map(|v| 255 - v).collect(),
        }
    }

    fn value_clamped(&self, ix: i64, iy: i64) -> f64 {
        let x = ix.clamp(0, self.width as i64 - 1) as usize;
        let y = iy.clamp(0, self.height as i64 - 1) as usize;
        self.values[y * self.width as usize + x] as f64
    }

    /// Bilinear sample at a continuous pixel, with border replication outside
    /// the image.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        self.sample_with_grad(u, v).0
    }

    /// Bilinear sample plus the exact partial derivatives of the interpolated
    /// surface with respect to `u` and `v`.
    pub fn sample_with_grad(&self, u: f64, v: f64) -> (f64, f64, f64) {
        let iu = u.floor();
        let iv = v.floor();
        let fu = u - iu;
        let fv = v - iv;
        let ix = iu as i64;
        let iy = iv as i64;
        let f00 = self.value_clamped(ix, iy);
        let f10 = self.value_clamped(ix + 1, iy);
        let f01 = self.value_clamped(ix, iy + 1);
        let f11 = self.value_clamped(ix + 1, iy + 1);
        let value = f00 * (1.0 - fu) * (1.0 - fv)
            + f10 * fu * (1.0 - fv)
            + f01 * (1.0 - fu) * fv
            + f11 * fu * fv;
        let du = (f10 - f00) * (1.0 - fv) + (f11 - f01) * fv;
        let dv = (f01 - f00) * (1.0 - fu) + (f11 - f10) * fu;
        (value, du, dv)
    }
}

fn parse_csv_fields<const N: usize>(
    text: &str,
    line: usize,
) -> Result<[f64; N], EventError> {
    let mut out = [0.0; N];
    let mut parts = text.split(',');
    for (i, slot) in out.iter_mut().enumerate() {
        let field = parts.next().ok_or_else(|| EventError::Malformed {
            line,
            msg: format!("expected {N} comma-separated fields"),
        })?;
        *slot = field
            .trim()
            .parse::<f64>()
            .map_err(|e| EventError::Malformed {
                line,
                msg: format!("field {}: {e}", i + 1),
            })?;
    }
    if parts.next().is_some() {
        return Err(EventError::Malformed {
            line,
            msg: format!("expected exactly {N} fields"),
        });
    }
    Ok(out)
}

/// Read events from plain-text CSV: one `t,x,y,p` record per line with `t` in
/// seconds and `p` in `{0, 1}` (mapped to -1/+1). An optional single header
/// line is skipped.
pub fn read_events_csv(
    reader: impl Read,
    width: u32,
    height: u32,
    side: CameraSide,
    policy: OutOfOrderPolicy,
) -> Result<EventStream, EventError> {
    let reader = BufReader::new(reader);
    let mut records = Vec::new();
    let mut source_lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        let trimmed = text.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_csv_fields::<4>(trimmed, line_no) {
            Ok([t, x, y, p]) => {
                if x < 0.0 || y < 0.0 || x.fract() != 0.0 || y.fract() != 0.0 {
                    return Err(EventError::Malformed {
                        line: line_no,
                        msg: format!("non-integer pixel coordinates ({x}, {y})"),
                    });
                }
                if p != -1.0 && p != 0.0 && p != 1.0 {
                    return Err(EventError::Malformed {
                        line: line_no,
                        msg: format!("polarity {p} not in {{-1, 0, 1}}"),
                    });
                }
                records.push((t, x as u32, y as u32, p as i8));
                source_lines.push(line_no);
            }
            Err(e) => {
                // Tolerate a single header line at the top of the file.
                if line_no == 1 && records.is_empty() {
                    continue;
                }
                return Err(e);
            }
        }
    }
    // Map record-index "line" numbers from the validator back to file lines.
    EventStream::from_records(records, width, height, side, policy).map_err(|e| match e {
        EventError::OutOfBounds {
            line,
            x,
            y,
            width,
            height,
        } => EventError::OutOfBounds {
            line: source_lines.get(line - 1).copied().unwrap_or(line),
            x,
            y,
            width,
            height,
        },
        EventError::OutOfOrder { line, t, prev } => EventError::OutOfOrder {
            line: source_lines.get(line - 1).copied().unwrap_or(line),
            t,
            prev,
        },
        EventError::Malformed { line, msg } => EventError::Malformed {
            line: source_lines.get(line - 1).copied().unwrap_or(line),
            msg,
        },
        other => other,
    })
}

pub fn read_events_csv_path(
    path: impl AsRef<Path>,
    width: u32,
    height: u32,
    side: CameraSide,
    policy: OutOfOrderPolicy,
) -> Result<EventStream, EventError> {
    read_events_csv(std::fs::File::open(path)?, width, height, side, policy)
}

pub fn write_events_csv(writer: impl Write, stream: &EventStream) -> Result<(), EventError> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "# t,x,y,p")?;
    for e in stream.events() {
        writeln!(
            w,
            "{:.9},{},{},{}",
            e.t,
            e.x,
            e.y,
            if e.polarity > 0 { 1 } else { 0 }
        )?;
    }
    w.flush()?;
    Ok(())
}

const BIN_RECORD_LEN: usize = 13; // f64 t + u16 x + u16 y + i8 p, little endian

/// Read the binary event format: packed little-endian records of
/// `f64 t, u16 x, u16 y, i8 p`.
pub fn read_events_bin(
    mut reader: impl Read,
    width: u32,
    height: u32,
    side: CameraSide,
    policy: OutOfOrderPolicy,
) -> Result<EventStream, EventError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() % BIN_RECORD_LEN != 0 {
        return Err(EventError::Malformed {
            line: bytes.len() / BIN_RECORD_LEN + 1,
            msg: format!(
                "binary stream length {} is not a multiple of the {}-byte record",
                bytes.len(),
                BIN_RECORD_LEN
            ),
        });
    }
    let records = bytes.chunks_exact(BIN_RECORD_LEN).map(|c| {
        let t = f64::from_le_bytes(c[0..8].try_into().unwrap());
        let x = u16::from_le_bytes(c[8..10].try_into().unwrap()) as u32;
        let y = u16::from_le_bytes(c[10..12].try_into().unwrap()) as u32;
        let p = c[12] as i8;
        (t, x, y, p)
    });
    EventStream::from_records(records.collect::<Vec<_>>(), width, height, side, policy)
}

pub fn write_events_bin(writer: impl Write, stream: &EventStream) -> Result<(), EventError> {
    let mut w = BufWriter::new(writer);
    for e in stream.events() {
        w.write_all(&e.t.to_le_bytes())?;
        w.write_all(&e.x.to_le_bytes())?;
        w.write_all(&e.y.to_le_bytes())?;
        w.write_all(&[e.polarity as u8])?;
    }
    w.flush()?;
    Ok(())
}
