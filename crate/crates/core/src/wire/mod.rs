//! Inline CMR Streaming Protocol (ICSP).
//!
//! Every message is one frame (see [`frame`]). Headers are fixed-order,
//! little-endian and unpadded. Message ids:
//!
//! | id | message        | payload                                  |
//! |----|----------------|------------------------------------------|
//! | 1  | CONFIG_NAME    | UTF-8 chain name                         |
//! | 2  | CONFIG_INLINE  | UTF-8 chain config document              |
//! | 3  | SESSION_HEADER | `key=value` lines                        |
//! | 4  | CLOSE          | empty                                    |
//! | 5  | TEXT           | UTF-8 log line                           |
//! | 10 | ACQUISITION    | readout header + complex samples         |
//! | 11 | IMAGE          | image header + meta + pixels             |
//! | 12 | WAVEFORM       | waveform header + f32 samples            |
//! | 13 | REPORT         | UTF-8 JSON report document               |

pub mod frame;
pub mod meta;
pub mod stream;

use num_complex::Complex32;
use thiserror::Error;

use frame::{ByteReader, FrameError, PutLe, Truncated};
pub use meta::Meta;
pub use stream::{stream_session, FrameReader, SessionError, SessionSummary};

/// Default TCP port of the server.
pub const DEFAULT_PORT: u16 = 9122;

/// Environment variable overriding [`DEFAULT_PORT`].
pub const PORT_ENV: &str = "ICSP_PORT";

pub const HEADER_VERSION: u16 = 1;

/// Readout flag bits.
pub mod flags {
    pub const CALIBRATION: u64 = 1 << 0;
    pub const LAST_IN_SLICE: u64 = 1 << 1;
    pub const LAST_IN_SCAN: u64 = 1 << 2;
}

const UNIT_NORM_TOL: f32 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u16)]
pub enum MessageId {
    ConfigName = 1,
    ConfigInline = 2,
    SessionHeader = 3,
    Close = 4,
    Text = 5,
    Acquisition = 10,
    Image = 11,
    Waveform = 12,
    Report = 13,
}

impl MessageId {
    pub const ALL: [MessageId; 9] = [
        MessageId::ConfigName,
        MessageId::ConfigInline,
        MessageId::SessionHeader,
        MessageId::Close,
        MessageId::Text,
        MessageId::Acquisition,
        MessageId::Image,
        MessageId::Waveform,
        MessageId::Report,
    ];
}

impl TryFrom<u16> for MessageId {
    type Error = WireError;

    fn try_from(id: u16) -> Result<Self, WireError> {
        MessageId::ALL
            .into_iter()
            .find(|m| *m as u16 == id)
            .ok_or(WireError::UnknownMessageId(id))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WireError {
    #[error("unknown message id {0}")]
    UnknownMessageId(u16),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("payload truncated while reading `{0}`")]
    Truncated(&'static str),
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("invalid UTF-8 in `{0}`")]
    Utf8(&'static str),
}

impl WireError {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        WireError::Invalid { field, reason: reason.into() }
    }
}

impl From<Truncated> for WireError {
    fn from(t: Truncated) -> Self {
        WireError::Truncated(t.field)
    }
}

fn check_unit(field: &'static str, v: &[f32; 3]) -> Result<(), WireError> {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if (n - 1.0).abs() > UNIT_NORM_TOL || !n.is_finite() {
        return Err(WireError::invalid(field, format!("norm {n} is not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutHeader {
    pub version: u16,
    pub flags: u64,
    pub scan_counter: u32,
    pub num_samples: u16,
    pub num_coils: u16,
    pub kline_idx: u16,
    pub slice_idx: u16,
    /// Cardiac phase.
    pub phase_idx: u16,
    pub repetition_idx: u16,
    pub set_idx: u16,
    pub average_idx: u16,
    pub sample_time_ns: u32,
    pub position_mm: [f32; 3],
    pub read_dir: [f32; 3],
    pub phase_dir: [f32; 3],
    pub slice_dir: [f32; 3],
}

impl ReadoutHeader {
    pub const SIZE: usize = 82;

    pub fn has_flag(&self, flag: u64) -> bool {
        self.flags & flag != 0
    }

    fn validate(&self) -> Result<(), WireError> {
        if self.num_samples == 0 {
            return Err(WireError::invalid("num_samples", "must be > 0"));
        }
        if self.num_coils == 0 {
            return Err(WireError::invalid("num_coils", "must be > 0"));
        }
        check_unit("read_dir", &self.read_dir)?;
        check_unit("phase_dir", &self.phase_dir)?;
        check_unit("slice_dir", &self.slice_dir)
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.put_u16(self.version);
        out.put_u64(self.flags);
        out.put_u32(self.scan_counter);
        out.put_u16(self.num_samples);
        out.put_u16(self.num_coils);
        out.put_u16(self.kline_idx);
        out.put_u16(self.slice_idx);
        out.put_u16(self.phase_idx);
        out.put_u16(self.repetition_idx);
        out.put_u16(self.set_idx);
        out.put_u16(self.average_idx);
        out.put_u32(self.sample_time_ns);
        out.put_vec3(&self.position_mm);
        out.put_vec3(&self.read_dir);
        out.put_vec3(&self.phase_dir);
        out.put_vec3(&self.slice_dir);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<Self, WireError> {
        Ok(Self {
            version: r.u16("version")?,
            flags: r.u64("flags")?,
            scan_counter: r.u32("scan_counter")?,
            num_samples: r.u16("num_samples")?,
            num_coils: r.u16("num_coils")?,
            kline_idx: r.u16("kline_idx")?,
            slice_idx: r.u16("slice_idx")?,
            phase_idx: r.u16("phase_idx")?,
            repetition_idx: r.u16("repetition_idx")?,
            set_idx: r.u16("set_idx")?,
            average_idx: r.u16("average_idx")?,
            sample_time_ns: r.u32("sample_time_ns")?,
            position_mm: r.vec3("position_mm")?,
            read_dir: r.vec3("read_dir")?,
            phase_dir: r.vec3("phase_dir")?,
            slice_dir: r.vec3("slice_dir")?,
        })
    }
}

/// One k-space line. Samples are coil-major: `samples[c * num_samples + s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpaceReadout {
    pub header: ReadoutHeader,
    pub samples: Vec<Complex32>,
}

impl KSpaceReadout {
    pub fn coil(&self, c: usize) -> &[Complex32] {
        let n = self.header.num_samples as usize;
        &self.samples[c * n..(c + 1) * n]
    }
}

/// Pixel data type codes carried in the image header.
pub mod data_type {
    pub const MAGNITUDE_F32: u16 = 1;
    pub const COMPLEX_F32: u16 = 2;
    pub const LABEL_U16: u16 = 3;
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pixels {
    Magnitude(Vec<f32>),
    Complex(Vec<Complex32>),
    Label(Vec<u16>),
}

impl Pixels {
    pub fn data_type(&self) -> u16 {
        match self {
            Pixels::Magnitude(_) => data_type::MAGNITUDE_F32,
            Pixels::Complex(_) => data_type::COMPLEX_F32,
            Pixels::Label(_) => data_type::LABEL_U16,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Pixels::Magnitude(p) => p.len(),
            Pixels::Complex(p) => p.len(),
            Pixels::Label(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixel values as `f32` (magnitude for complex data).
    pub fn to_f32(&self) -> Vec<f32> {
        match self {
            Pixels::Magnitude(p) => p.clone(),
            Pixels::Complex(p) => p.iter().map(|c| c.norm()).collect(),
            Pixels::Label(p) => p.iter().map(|&v| v as f32).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageHeader {
    pub version: u16,
    pub flags: u64,
    pub series_idx: u16,
    pub slice_idx: u16,
    pub phase_idx: u16,
    pub rows: u16,
    pub cols: u16,
    /// (row, col) spacing.
    pub pixel_spacing_mm: [f32; 2],
    pub slice_thickness_mm: f32,
    /// Center-to-center distance of neighbouring slices.
    pub slice_spacing_mm: f32,
    pub trigger_time_ms: f32,
    /// Patient position of pixel (0, 0).
    pub position_mm: [f32; 3],
    pub row_dir: [f32; 3],
    pub col_dir: [f32; 3],
}

impl ImageHeader {
    /// Size on the wire, including the data type code.
    pub const SIZE: usize = 78;

    pub fn pixel_count(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    fn validate(&self) -> Result<(), WireError> {
        if self.pixel_count() == 0 {
            return Err(WireError::invalid("rows", "rows*cols must be > 0"));
        }
        if !(self.pixel_spacing_mm[0] > 0.0 && self.pixel_spacing_mm[1] > 0.0) {
            return Err(WireError::invalid("pixel_spacing_mm", "must be > 0"));
        }
        if !(self.slice_thickness_mm > 0.0) {
            return Err(WireError::invalid("slice_thickness_mm", "must be > 0"));
        }
        if !(self.slice_spacing_mm >= self.slice_thickness_mm) {
            return Err(WireError::invalid(
                "slice_spacing_mm",
                "must be >= slice_thickness_mm",
            ));
        }
        Ok(())
    }

    fn write(&self, dtype: u16, out: &mut Vec<u8>) {
        out.put_u16(self.version);
        out.put_u64(self.flags);
        out.put_u16(self.series_idx);
        out.put_u16(self.slice_idx);
        out.put_u16(self.phase_idx);
        out.put_u16(self.rows);
        out.put_u16(self.cols);
        out.put_u16(dtype);
        out.put_f32(self.pixel_spacing_mm[0]);
        out.put_f32(self.pixel_spacing_mm[1]);
        out.put_f32(self.slice_thickness_mm);
        out.put_f32(self.slice_spacing_mm);
        out.put_f32(self.trigger_time_ms);
        out.put_vec3(&self.position_mm);
        out.put_vec3(&self.row_dir);
        out.put_vec3(&self.col_dir);
    }

    fn read(r: &mut ByteReader<'_>) -> Result<(Self, u16), WireError> {
        let version = r.u16("version")?;
        let flags = r.u64("flags")?;
        let series_idx = r.u16("series_idx")?;
        let slice_idx = r.u16("slice_idx")?;
        let phase_idx = r.u16("phase_idx")?;
        let rows = r.u16("rows")?;
        let cols = r.u16("cols")?;
        let dtype = r.u16("data_type")?;
        let h = Self {
            version,
            flags,
            series_idx,
            slice_idx,
            phase_idx,
            rows,
            cols,
            pixel_spacing_mm: [r.f32("pixel_spacing_mm")?, r.f32("pixel_spacing_mm")?],
            slice_thickness_mm: r.f32("slice_thickness_mm")?,
            slice_spacing_mm: r.f32("slice_spacing_mm")?,
            trigger_time_ms: r.f32("trigger_time_ms")?,
            position_mm: r.vec3("position_mm")?,
            row_dir: r.vec3("row_dir")?,
            col_dir: r.vec3("col_dir")?,
        };
        Ok((h, dtype))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageFrame {
    pub header: ImageHeader,
    pub meta: Meta,
    pub pixels: Pixels,
}

impl ImageFrame {
    pub fn data_type(&self) -> u16 {
        self.pixels.data_type()
    }
}

pub mod waveform_type {
    pub const ECG: u16 = 1;
    pub const RESPIRATORY: u16 = 2;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub wf_type: u16,
    pub sample_period_ms: f32,
    pub samples: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    ConfigName(String),
    ConfigInline(String),
    SessionHeader(Meta),
    Close,
    Text(String),
    Acquisition(KSpaceReadout),
    Image(ImageFrame),
    Waveform(Waveform),
    Report(String),
}

impl Message {
    pub fn id(&self) -> MessageId {
        match self {
            Message::ConfigName(_) => MessageId::ConfigName,
            Message::ConfigInline(_) => MessageId::ConfigInline,
            Message::SessionHeader(_) => MessageId::SessionHeader,
            Message::Close => MessageId::Close,
            Message::Text(_) => MessageId::Text,
            Message::Acquisition(_) => MessageId::Acquisition,
            Message::Image(_) => MessageId::Image,
            Message::Waveform(_) => MessageId::Waveform,
            Message::Report(_) => MessageId::Report,
        }
    }
}

/// Result of [`decode_message`].
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    Message { message: Message, consumed: usize },
    /// The buffer holds only part of a frame.
    NeedMore,
}

fn encode_payload(message: &Message) -> Result<Vec<u8>, WireError> {
    let mut out = Vec::new();
    match message {
        Message::ConfigName(s) | Message::ConfigInline(s) | Message::Text(s) | Message::Report(s) => {
            out.extend_from_slice(s.as_bytes())
        }
        Message::SessionHeader(m) => out = m.to_bytes()?,
        Message::Close => {}
        Message::Acquisition(r) => {
            r.header.validate()?;
            let expected = r.header.num_coils as usize * r.header.num_samples as usize;
            if r.samples.len() != expected {
                return Err(WireError::invalid(
                    "samples",
                    format!("{} samples, header implies {expected}", r.samples.len()),
                ));
            }
            out.reserve(ReadoutHeader::SIZE + 8 * expected);
            r.header.write(&mut out);
            for s in &r.samples {
                out.put_f32(s.re);
                out.put_f32(s.im);
            }
        }
        Message::Image(f) => {
            f.header.validate()?;
            if f.pixels.len() != f.header.pixel_count() {
                return Err(WireError::invalid(
                    "pixels",
                    format!("{} pixels, header implies {}", f.pixels.len(), f.header.pixel_count()),
                ));
            }
            let meta = f.meta.to_bytes()?;
            f.header.write(f.pixels.data_type(), &mut out);
            out.put_u32(meta.len() as u32);
            out.extend_from_slice(&meta);
            match &f.pixels {
                Pixels::Magnitude(p) => p.iter().for_each(|v| out.put_f32(*v)),
                Pixels::Complex(p) => p.iter().for_each(|v| {
                    out.put_f32(v.re);
                    out.put_f32(v.im);
                }),
                Pixels::Label(p) => p.iter().for_each(|v| out.put_u16(*v)),
            }
        }
        Message::Waveform(w) => {
            if !(w.sample_period_ms > 0.0) {
                return Err(WireError::invalid("sample_period_ms", "must be > 0"));
            }
            out.put_u16(w.wf_type);
            out.put_u32(w.samples.len() as u32);
            out.put_f32(w.sample_period_ms);
            w.samples.iter().for_each(|v| out.put_f32(*v));
        }
    }
    Ok(out)
}

/// Encode one message into a complete frame.
pub fn encode_message(message: &Message) -> Result<Vec<u8>, WireError> {
    let payload = encode_payload(message)?;
    Ok(frame::frame_bytes(message.id() as u16, &payload)?)
}

fn utf8(bytes: &[u8], field: &'static str) -> Result<String, WireError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| WireError::Utf8(field))
}

fn decode_payload(id: MessageId, payload: &[u8]) -> Result<Message, WireError> {
    let mut r = ByteReader::new(payload);
    let message = match id {
        MessageId::ConfigName => Message::ConfigName(utf8(payload, "config_name")?),
        MessageId::ConfigInline => Message::ConfigInline(utf8(payload, "config")?),
        MessageId::Text => Message::Text(utf8(payload, "text")?),
        MessageId::Report => Message::Report(utf8(payload, "report")?),
        MessageId::SessionHeader => Message::SessionHeader(Meta::parse(payload)?),
        MessageId::Close => {
            if !payload.is_empty() {
                return Err(WireError::TrailingBytes(payload.len()));
            }
            Message::Close
        }
        MessageId::Acquisition => {
            let header = ReadoutHeader::read(&mut r)?;
            header.validate()?;
            let n = header.num_coils as usize * header.num_samples as usize;
            if r.remaining() != 8 * n {
                return Err(WireError::invalid(
                    "samples",
                    format!("{} bytes, header implies {}", r.remaining(), 8 * n),
                ));
            }
            let mut samples = Vec::with_capacity(n);
            for _ in 0..n {
                let re = r.f32("samples")?;
                let im = r.f32("samples")?;
                samples.push(Complex32::new(re, im));
            }
            Message::Acquisition(KSpaceReadout { header, samples })
        }
        MessageId::Image => {
            let (header, dtype) = ImageHeader::read(&mut r)?;
            header.validate()?;
            let meta_len = r.u32("meta_length")? as usize;
            let meta = Meta::parse(r.take(meta_len, "meta")?)?;
            let n = header.pixel_count();
            let width = match dtype {
                data_type::MAGNITUDE_F32 => 4,
                data_type::COMPLEX_F32 => 8,
                data_type::LABEL_U16 => 2,
                other => return Err(WireError::invalid("data_type", format!("unknown code {other}"))),
            };
            if r.remaining() != width * n {
                return Err(WireError::invalid(
                    "pixels",
                    format!("{} bytes, header implies {}", r.remaining(), width * n),
                ));
            }
            let pixels = match dtype {
                data_type::MAGNITUDE_F32 => {
                    Pixels::Magnitude((0..n).map(|_| r.f32("pixels")).collect::<Result<_, _>>()?)
                }
                data_type::COMPLEX_F32 => Pixels::Complex(
                    (0..n)
                        .map(|_| Ok(Complex32::new(r.f32("pixels")?, r.f32("pixels")?)))
                        .collect::<Result<_, Truncated>>()?,
                ),
                _ => Pixels::Label((0..n).map(|_| r.u16("pixels")).collect::<Result<_, _>>()?),
            };
            Message::Image(ImageFrame { header, meta, pixels })
        }
        MessageId::Waveform => {
            let wf_type = r.u16("wf_type")?;
            let n = r.u32("num_wf_samples")? as usize;
            let sample_period_ms = r.f32("sample_period_ms")?;
            if !(sample_period_ms > 0.0) {
                return Err(WireError::invalid("sample_period_ms", "must be > 0"));
            }
            if r.remaining() != 4 * n {
                return Err(WireError::invalid(
                    "samples",
                    format!("{} bytes, header implies {}", r.remaining(), 4 * n),
                ));
            }
            let samples = (0..n).map(|_| r.f32("samples")).collect::<Result<_, _>>()?;
            Message::Waveform(Waveform { wf_type, sample_period_ms, samples })
        }
    };
    Ok(message)
}

/// Decode the frame at the start of `bytes`.
///
/// An unknown id is reported as soon as the id bytes are available, even if
/// the rest of the frame has not arrived yet.
pub fn decode_message(bytes: &[u8]) -> Result<Decoded, WireError> {
    if let Some(id) = frame::peek_id(bytes) {
        MessageId::try_from(id)?;
    }
    let Some(raw) = frame::split_frame(bytes)? else {
        return Ok(Decoded::NeedMore);
    };
    let id = MessageId::try_from(raw.id)?;
    let message = decode_payload(id, raw.payload)?;
    Ok(Decoded::Message { message, consumed: raw.consumed })
}
