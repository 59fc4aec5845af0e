//! Minimal PLY reader/writer: vertex positions only.
//!
//! Reads `ascii 1.0` and `binary_little_endian 1.0`. Only `x`, `y`, `z` of
//! the `vertex` element are kept; every other property, list and element is
//! parsed past and dropped. Errors report the byte offset where parsing
//! stopped.

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar(String, Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

fn err(offset: usize, message: impl Into<String>) -> Error {
    Error::Ply {
        offset: offset as u64,
        message: message.into(),
    }
}

struct Header {
    encoding: PlyEncoding,
    elements: Vec<Element>,
    /// Byte offset of the payload.
    len: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let next_line = |pos: &mut usize| -> Result<(usize, String)> {
        let start = *pos;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|e| start + e)
            .ok_or_else(|| err(start, "header is not terminated by end_header"))?;
        *pos = end + 1;
        let line = std::str::from_utf8(&bytes[start..end])
            .map_err(|_| err(start, "header is not valid text"))?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };

    let (at, magic) = next_line(&mut pos)?;
    if magic.trim() != "ply" {
        return Err(err(at, "missing 'ply' magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let (at, line) = next_line(&mut pos)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, version] => {
                if *version != "1.0" {
                    return Err(err(at, format!("unsupported PLY version {version}")));
                }
                encoding = Some(match *fmt {
                    "ascii" => PlyEncoding::Ascii,
                    "binary_little_endian" => PlyEncoding::BinaryLittleEndian,
                    other => return Err(err(at, format!("unsupported format {other}"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| err(at, format!("bad element count {count:?}")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count, item, _name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| err(at, "property before any element"))?;
                let count = Scalar::parse(count).ok_or_else(|| err(at, format!("unknown type {count}")))?;
                let item = Scalar::parse(item).ok_or_else(|| err(at, format!("unknown type {item}")))?;
                element.properties.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| err(at, "property before any element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| err(at, format!("unknown type {ty}")))?;
                element.properties.push(Property::Scalar(name.to_string(), ty));
            }
            ["end_header"] => break,
            _ => return Err(err(at, format!("malformed header line {line:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| err(0, "header has no format line"))?;
    Ok(Header {
        encoding,
        elements,
        len: pos,
    })
}

/// Positions of `x`, `y`, `z` among the vertex properties.
fn xyz_slots(vertex: &Element) -> Result<[usize; 3]> {
    let find = |axis: &str| {
        vertex
            .properties
            .iter()
            .position(|p| matches!(p, Property::Scalar(n, Scalar::F32 | Scalar::F64) if n == axis))
            .ok_or_else(|| err(0, format!("vertex has no floating-point '{axis}' property")))
    };
    Ok([find("x")?, find("y")?, find("z")?])
}

pub fn parse_ply(bytes: &[u8]) -> Result<Vec<Vector3<f64>>> {
    let header = parse_header(bytes)?;
    if !header.elements.iter().any(|e| e.name == "vertex") {
        return Err(err(0, "no vertex element"));
    }
    match header.encoding {
        PlyEncoding::Ascii => parse_ascii(bytes, &header),
        PlyEncoding::BinaryLittleEndian => parse_binary(bytes, &header),
    }
}

fn parse_ascii(bytes: &[u8], header: &Header) -> Result<Vec<Vector3<f64>>> {
    let body = std::str::from_utf8(&bytes[header.len..])
        .map_err(|_| err(header.len, "ASCII payload is not valid text"))?;
    // Tokens with their absolute byte offsets.
    let mut tokens = body.split_ascii_whitespace().map(|t| {
        let offset = header.len + (t.as_ptr() as usize - body.as_ptr() as usize);
        (offset, t)
    });
    let end = bytes.len();
    let mut next = |what: &str| tokens.next().ok_or_else(|| err(end, format!("payload truncated: expected {what}")));
    let mut points = Vec::new();
    for element in &header.elements {
        let slots = if element.name == "vertex" { Some(xyz_slots(element)?) } else { None };
        for k in 0..element.count {
            let mut xyz = [0.0; 3];
            for (pi, prop) in element.properties.iter().enumerate() {
                match prop {
                    Property::Scalar(..) => {
                        let (at, tok) = next(&format!("{} {k}", element.name))?;
                        let v: f64 = tok.parse().map_err(|_| err(at, format!("bad number {tok:?}")))?;
                        if let Some(axis) = slots.and_then(|s| s.iter().position(|&x| x == pi)) {
                            xyz[axis] = v;
                        }
                    }
                    Property::List { .. } => {
                        let (at, tok) = next("list length")?;
                        let n: usize = tok.parse().map_err(|_| err(at, format!("bad list length {tok:?}")))?;
                        for _ in 0..n {
                            next("list item")?;
                        }
                    }
                }
            }
            if slots.is_some() {
                points.push(Vector3::from(xyz));
            }
        }
    }
    Ok(points)
}

fn parse_binary(bytes: &[u8], header: &Header) -> Result<Vec<Vector3<f64>>> {
    let mut pos = header.len;
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(err(*pos, format!("payload truncated: expected {what}")));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let mut points = Vec::new();
    for element in &header.elements {
        let slots = if element.name == "vertex" { Some(xyz_slots(element)?) } else { None };
        for k in 0..element.count {
            let what = format!("{} {k}", element.name);
            let mut xyz = [0.0; 3];
            for (pi, prop) in element.properties.iter().enumerate() {
                match prop {
                    Property::Scalar(_, ty) => {
                        let v = ty.read(take(&mut pos, ty.size(), &what)?);
                        if let Some(axis) = slots.and_then(|s| s.iter().position(|&x| x == pi)) {
                            xyz[axis] = v;
                        }
                    }
                    Property::List { count, item } => {
                        let n = count.read(take(&mut pos, count.size(), &what)?);
                        take(&mut pos, n as usize * item.size(), &what)?;
                    }
                }
            }
            if slots.is_some() {
                points.push(Vector3::from(xyz));
            }
        }
    }
    Ok(points)
}

pub fn load_ply(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes)
}

/// Writes vertex positions as `double` properties.
pub fn write_ply(path: &Path, points: &[Vector3<f64>], encoding: PlyEncoding) -> Result<()> {
    let mut out = Vec::new();
    let format = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        out,
        "ply\nformat {format} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        points.len()
    )
    .expect("writing to a Vec cannot fail");
    for p in points {
        match encoding {
            PlyEncoding::Ascii => {
                writeln!(out, "{:?} {:?} {:?}", p.x, p.y, p.z).expect("writing to a Vec cannot fail");
            }
            PlyEncoding::BinaryLittleEndian => {
                for c in p.iter() {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
