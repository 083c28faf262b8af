//! NPY v1.0 reading and writing.
//!
//! Header layout follows NumPy's writer byte for byte: a dict literal with
//! keys `descr`, `fortran_order`, `shape` in that order, growth padding for
//! the leading axis, then spaces and a newline so the data starts on a
//! 64-byte boundary. Fortran-ordered inputs are rejected.

use half::f16;

use crate::error::FormatError;

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;
/// Digits NumPy reserves so the leading axis can grow in place.
const GROWTH_AXIS_MAX_DIGITS: usize = 21;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dtype {
    F64,
    F32,
    F16,
    I16,
    I8,
    U8,
}

impl Dtype {
    pub const ALL: [Dtype; 6] = [Dtype::F64, Dtype::F32, Dtype::F16, Dtype::I16, Dtype::I8, Dtype::U8];

    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F64 => "<f8",
            Dtype::F32 => "<f4",
            Dtype::F16 => "<f2",
            Dtype::I16 => "<i2",
            Dtype::I8 => "|i1",
            Dtype::U8 => "|u1",
        }
    }

    pub fn from_descr(s: &str) -> Result<Self, FormatError> {
        Ok(match s {
            "<f8" => Dtype::F64,
            "<f4" => Dtype::F32,
            "<f2" => Dtype::F16,
            "<i2" => Dtype::I16,
            "|i1" | "<i1" => Dtype::I8,
            "|u1" | "<u1" => Dtype::U8,
            other => return Err(FormatError::UnsupportedDatatype(other.to_string())),
        })
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
            Dtype::F16 | Dtype::I16 => 2,
            Dtype::I8 | Dtype::U8 => 1,
        }
    }
}

/// A single NPY array: descriptor, shape and raw little-endian payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NpyRecord {
    pub dtype: Dtype,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

/// Element types with a fixed NPY encoding.
pub trait NpyElement: Copy {
    const DTYPE: Dtype;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

macro_rules! npy_element {
    ($t:ty, $d:expr) => {
        impl NpyElement for $t {
            const DTYPE: Dtype = $d;
            fn write_le(self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }
            fn read_le(bytes: &[u8]) -> Self {
                <$t>::from_le_bytes(bytes.try_into().expect("element width"))
            }
        }
    };
}

npy_element!(f64, Dtype::F64);
npy_element!(f32, Dtype::F32);
npy_element!(f16, Dtype::F16);
npy_element!(i16, Dtype::I16);
npy_element!(i8, Dtype::I8);
npy_element!(u8, Dtype::U8);

impl NpyRecord {
    pub fn from_slice<E: NpyElement>(shape: &[usize], values: &[E]) -> Result<Self, FormatError> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(FormatError::LengthMismatch {
                expected,
                found: values.len(),
            });
        }
        let mut data = Vec::with_capacity(values.len() * E::DTYPE.size());
        for &v in values {
            v.write_le(&mut data);
        }
        Ok(Self {
            dtype: E::DTYPE,
            fortran_order: false,
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    /// Decodes the payload; the requested type must match the descriptor.
    pub fn to_vec<E: NpyElement>(&self) -> Result<Vec<E>, FormatError> {
        if self.dtype != E::DTYPE {
            return Err(FormatError::UnsupportedDatatype(format!(
                "record holds {}, requested {}",
                self.dtype.descr(),
                E::DTYPE.descr()
            )));
        }
        Ok(self.data.chunks_exact(E::DTYPE.size()).map(E::read_le).collect())
    }

    /// Payload widened to `f64` regardless of the stored type.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        let sz = self.dtype.size();
        self.data.chunks_exact(sz).map(|b| decode_f64(self.dtype, b)).collect()
    }
}

/// Widens one little-endian element of `dtype` to `f64`.
pub fn decode_f64(dtype: Dtype, b: &[u8]) -> f64 {
    match dtype {
        Dtype::F64 => f64::read_le(b),
        Dtype::F32 => f32::read_le(b) as f64,
        Dtype::F16 => f16::read_le(b).to_f64(),
        Dtype::I16 => i16::read_le(b) as f64,
        Dtype::I8 => i8::read_le(b) as f64,
        Dtype::U8 => b[0] as f64,
    }
}

fn shape_literal(shape: &[usize]) -> String {
    match shape {
        [] => "()".into(),
        [n] => format!("({n},)"),
        _ => {
            let parts: Vec<String> = shape.iter().map(usize::to_string).collect();
            format!("({})", parts.join(", "))
        }
    }
}

/// Header bytes (magic through the terminating newline).
pub fn header_bytes(dtype: Dtype, shape: &[usize]) -> Vec<u8> {
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        shape_literal(shape)
    );
    if let Some(first) = shape.first() {
        let digits = first.to_string().len();
        dict.push_str(&" ".repeat(GROWTH_AXIS_MAX_DIGITS.saturating_sub(digits)));
    }
    // at least one pad byte, exactly as NumPy does
    let hlen = dict.len() + 1;
    let pad = ALIGN - ((MAGIC.len() + 2 + 2 + hlen) % ALIGN);
    let total_header = hlen + pad;

    let mut out = Vec::with_capacity(10 + total_header);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(total_header as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', pad));
    out.push(b'\n');
    out
}

pub fn write_npy(record: &NpyRecord) -> Result<Vec<u8>, FormatError> {
    if record.fortran_order {
        return Err(FormatError::FortranOrder);
    }
    let expected = record.element_count() * record.dtype.size();
    if record.data.len() != expected {
        return Err(FormatError::LengthMismatch {
            expected,
            found: record.data.len(),
        });
    }
    let mut out = header_bytes(record.dtype, &record.shape);
    out.extend_from_slice(&record.data);
    Ok(out)
}

/// Parsed header plus the byte offset where the payload begins.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NpyHeader {
    pub dtype: Dtype,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
    pub data_offset: usize,
}

/// Parses the header at the start of `bytes`. Only the header bytes need
/// to be present.
pub fn parse_header(bytes: &[u8]) -> Result<NpyHeader, FormatError> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(FormatError::BadMagic("missing \\x93NUMPY prefix".into()));
    }
    let (len, start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(FormatError::Truncated {
                    expected: 12,
                    found: bytes.len(),
                });
            }
            (
                u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize,
                12,
            )
        }
        v => return Err(FormatError::BadMagic(format!("unsupported version {v}.{}", bytes[7]))),
    };
    let end = start + len;
    if bytes.len() < end {
        return Err(FormatError::Truncated {
            expected: end,
            found: bytes.len(),
        });
    }
    let text =
        std::str::from_utf8(&bytes[start..end]).map_err(|_| FormatError::Header("header is not valid text".into()))?;
    let dict = HeaderParser::new(text).parse()?;
    Ok(NpyHeader {
        dtype: dict.0,
        fortran_order: dict.1,
        shape: dict.2,
        data_offset: end,
    })
}

pub fn read_npy(bytes: &[u8]) -> Result<NpyRecord, FormatError> {
    let h = parse_header(bytes)?;
    if h.fortran_order {
        return Err(FormatError::FortranOrder);
    }
    let count: usize = h.shape.iter().product();
    let expected = count * h.dtype.size();
    let found = bytes.len() - h.data_offset;
    if found != expected {
        return Err(FormatError::LengthMismatch { expected, found });
    }
    Ok(NpyRecord {
        dtype: h.dtype,
        fortran_order: false,
        shape: h.shape,
        data: bytes[h.data_offset..].to_vec(),
    })
}

/// Minimal parser for the Python dict literal in an NPY header.
struct HeaderParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    fn new(s: &'a str) -> Self {
        Self {
            s: s.as_bytes(),
            pos: 0,
        }
    }

    fn err(&self, what: &str) -> FormatError {
        FormatError::Header(format!("{what} at byte {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), FormatError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn string(&mut self) -> Result<String, FormatError> {
        self.skip_ws();
        let quote = match self.s.get(self.pos) {
            Some(&q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected string")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos == self.s.len() {
            return Err(self.err("unterminated string"));
        }
        let v = String::from_utf8_lossy(&self.s[start..self.pos]).into_owned();
        self.pos += 1;
        Ok(v)
    }

    fn word(&mut self) -> &'a [u8] {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        &self.s[start..self.pos]
    }

    fn shape(&mut self) -> Result<Vec<usize>, FormatError> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            if self.eat(b')') {
                return Ok(dims);
            }
            let w = self.word();
            let dim = std::str::from_utf8(w)
                .ok()
                .and_then(|w| w.trim_end_matches('L').parse().ok())
                .ok_or_else(|| self.err("bad shape entry"))?;
            dims.push(dim);
            if !self.eat(b',') {
                self.expect(b')')?;
                return Ok(dims);
            }
        }
    }

    fn parse(mut self) -> Result<(Dtype, bool, Vec<usize>), FormatError> {
        self.expect(b'{')?;
        let (mut descr, mut fortran, mut shape) = (None, None, None);
        loop {
            if self.eat(b'}') {
                break;
            }
            let key = self.string()?;
            self.expect(b':')?;
            match key.as_str() {
                "descr" => descr = Some(Dtype::from_descr(&self.string()?)?),
                "fortran_order" => {
                    fortran = Some(match self.word() {
                        b"True" => true,
                        b"False" => false,
                        _ => return Err(self.err("fortran_order must be True or False")),
                    })
                }
                "shape" => shape = Some(self.shape()?),
                other => return Err(FormatError::Header(format!("unexpected key `{other}`"))),
            }
            if !self.eat(b',') {
                self.expect(b'}')?;
                break;
            }
        }
        match (descr, fortran, shape) {
            (Some(d), Some(f), Some(s)) => Ok((d, f, s)),
            _ => Err(FormatError::Header("missing descr, fortran_order or shape".into())),
        }
    }
}
