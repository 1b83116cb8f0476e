//! Minimal PLY reader/writer: ASCII and binary little-endian, vertex
//! positions as `float`/`double`, optional polygon faces.

use std::path::Path;

use nalgebra::Vector3;

use super::model::ObjectModel;
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

    fn is_float(self) -> bool {
        matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    body_offset: usize,
}

fn err(offset: usize, message: impl Into<String>) -> Error {
    Error::Ply {
        offset,
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut first = true;
    loop {
        let rest = &bytes[offset..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(err(bytes.len(), "header ended without end_header"));
        };
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| err(offset, "header is not UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        let line_offset = offset;
        offset += nl + 1;
        let mut words = line.split_whitespace();
        let Some(keyword) = words.next() else { continue };
        if first {
            if keyword != "ply" {
                return Err(err(0, "missing 'ply' magic"));
            }
            first = false;
            continue;
        }
        match keyword {
            "format" => {
                format = Some(match words.next() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    Some(other) => return Err(err(line_offset, format!("unsupported format '{other}'"))),
                    None => return Err(err(line_offset, "format line without a format")),
                });
            }
            "comment" | "obj_info" => {}
            "element" => {
                let name = words.next().ok_or_else(|| err(line_offset, "element without a name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| err(line_offset, "element without a valid count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| err(line_offset, "property before any element"))?;
                let parts: Vec<&str> = words.collect();
                let bad = || err(line_offset, format!("malformed property line '{line}'"));
                let prop = if parts.first() == Some(&"list") {
                    if parts.len() != 4 {
                        return Err(bad());
                    }
                    Property::List {
                        count: Scalar::parse(parts[1]).ok_or_else(bad)?,
                        item: Scalar::parse(parts[2]).ok_or_else(bad)?,
                        name: parts[3].to_string(),
                    }
                } else {
                    if parts.len() != 2 {
                        return Err(bad());
                    }
                    Property::Scalar {
                        ty: Scalar::parse(parts[0]).ok_or_else(bad)?,
                        name: parts[1].to_string(),
                    }
                };
                el.properties.push(prop);
            }
            "end_header" => break,
            other => return Err(err(line_offset, format!("unknown header keyword '{other}'"))),
        }
    }
    let format = format.ok_or_else(|| err(offset, "missing format line"))?;
    Ok(Header {
        format,
        elements,
        body_offset: offset,
    })
}

/// Sequential reader over the body that knows its byte offset.
trait BodyReader {
    fn read(&mut self, ty: Scalar, what: &dyn Fn() -> String) -> Result<f64>;
    fn end_record(&mut self) -> Result<()> {
        Ok(())
    }
}

struct BinaryReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl BodyReader for BinaryReader<'_> {
    fn read(&mut self, ty: Scalar, what: &dyn Fn() -> String) -> Result<f64> {
        let n = ty.size();
        let Some(b) = self.bytes.get(self.offset..self.offset + n) else {
            return Err(err(self.offset, format!("unexpected end of data reading {}", what())));
        };
        self.offset += n;
        Ok(match ty {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b.try_into().unwrap()),
        })
    }
}

struct AsciiReader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl AsciiReader<'_> {
    fn skip_blank(&mut self, newlines: bool) {
        while let Some(&c) = self.bytes.get(self.offset) {
            if c == b' ' || c == b'\t' || c == b'\r' || (newlines && c == b'\n') {
                self.offset += 1;
            } else {
                break;
            }
        }
    }
}

impl BodyReader for AsciiReader<'_> {
    fn read(&mut self, ty: Scalar, what: &dyn Fn() -> String) -> Result<f64> {
        self.skip_blank(true);
        let start = self.offset;
        while let Some(&c) = self.bytes.get(self.offset) {
            if c.is_ascii_whitespace() {
                break;
            }
            self.offset += 1;
        }
        if start == self.offset {
            return Err(err(start, format!("unexpected end of data reading {}", what())));
        }
        let token = std::str::from_utf8(&self.bytes[start..self.offset]).map_err(|_| err(start, "non-UTF-8 token"))?;
        let value: f64 = token
            .parse()
            .map_err(|_| err(start, format!("cannot parse '{token}' as {ty:?} for {}", what())))?;
        if !ty.is_float() && value.fract() != 0.0 {
            return Err(err(start, format!("expected an integer for {}, got '{token}'", what())));
        }
        Ok(value)
    }

    fn end_record(&mut self) -> Result<()> {
        self.skip_blank(false);
        match self.bytes.get(self.offset) {
            None => Ok(()),
            Some(b'\n') => {
                self.offset += 1;
                Ok(())
            }
            Some(_) => Err(err(self.offset, "trailing values on a record line")),
        }
    }
}

/// Vertex positions and faces read from a PLY file.
pub struct PlyMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub faces: Vec<Vec<usize>>,
}

/// Parses a PLY byte buffer.
pub fn parse_ply(bytes: &[u8]) -> Result<PlyMesh> {
    let header = parse_header(bytes)?;
    let vertex_el = header
        .elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| err(header.body_offset, "no vertex element"))?;
    if vertex_el.count == 0 {
        return Err(Error::Empty("PLY has zero vertices".into()));
    }
    let mut xyz_idx = [usize::MAX; 3];
    for (i, axis) in ["x", "y", "z"].iter().enumerate() {
        let (pos, prop) = vertex_el
            .properties
            .iter()
            .enumerate()
            .find(|(_, p)| p.name() == *axis)
            .ok_or_else(|| err(header.body_offset, format!("vertex element has no '{axis}' property")))?;
        match prop {
            Property::Scalar { ty, .. } if ty.is_float() => xyz_idx[i] = pos,
            _ => {
                return Err(err(
                    header.body_offset,
                    format!("vertex position '{axis}' must be float or double"),
                ))
            }
        }
    }

    let mut reader: Box<dyn BodyReader> = match header.format {
        Format::Ascii => Box::new(AsciiReader {
            bytes,
            offset: header.body_offset,
        }),
        Format::BinaryLe => Box::new(BinaryReader {
            bytes,
            offset: header.body_offset,
        }),
    };

    let mut vertices = Vec::with_capacity(vertex_el.count);
    let mut faces = Vec::new();
    for el in &header.elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        for row in 0..el.count {
            let mut p = [0.0; 3];
            for (pi, prop) in el.properties.iter().enumerate() {
                let what = || format!("{} {} property '{}'", el.name, row, prop.name());
                match prop {
                    Property::Scalar { ty, .. } => {
                        let value = reader.read(*ty, &what)?;
                        if is_vertex {
                            if let Some(axis) = xyz_idx.iter().position(|&x| x == pi) {
                                p[axis] = value;
                            }
                        }
                    }
                    Property::List { count, item, name } => {
                        let n = reader.read(*count, &what)?;
                        if n < 0.0 {
                            return Err(err(0, format!("negative list length in {}", what())));
                        }
                        let mut items = Vec::with_capacity(n as usize);
                        for _ in 0..n as usize {
                            items.push(reader.read(*item, &what)?);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            let idx: Vec<usize> = items.iter().map(|&v| v as usize).collect();
                            if let Some(bad) = items.iter().find(|&&v| v < 0.0 || v as usize >= vertex_el.count) {
                                return Err(err(0, format!("face {row} references vertex {bad} out of range")));
                            }
                            faces.push(idx);
                        }
                    }
                }
            }
            reader.end_record()?;
            if is_vertex {
                vertices.push(Vector3::new(p[0], p[1], p[2]));
            }
        }
    }
    Ok(PlyMesh { vertices, faces })
}

/// Loads a model, scaling coordinates by `unit_scale` (1e-3 for millimeter
/// files). Polygons are fan-triangulated.
pub fn load_model(path: impl AsRef<Path>, unit_scale: f64) -> Result<ObjectModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mesh = parse_ply(&bytes)?;
    let vertices = mesh.vertices.into_iter().map(|v| v * unit_scale).collect();
    let triangles = mesh
        .faces
        .iter()
        .filter(|f| f.len() >= 3)
        .flat_map(|f| (1..f.len() - 1).map(move |k| [f[0], f[k], f[k + 1]]))
        .collect();
    ObjectModel::new(vertices, triangles)
}

/// Reads a symmetry sidecar: a JSON list of row-major 4×4 matrices whose
/// translations are in the same units as the model file.
pub fn load_symmetries(path: impl AsRef<Path>, unit_scale: f64) -> Result<Vec<RigidTransform>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut syms: Vec<RigidTransform> = serde_json::from_str(&text)?;
    for s in &mut syms {
        s.translation *= unit_scale;
    }
    Ok(syms)
}

fn header_text(model: &ObjectModel, format: &str) -> String {
    let mut h = format!(
        "ply\nformat {format} 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n",
        model.vertices.len()
    );
    if !model.triangles.is_empty() {
        h += &format!(
            "element face {}\nproperty list uchar int vertex_indices\n",
            model.triangles.len()
        );
    }
    h += "end_header\n";
    h
}

/// Binary little-endian PLY with `double` positions (lossless).
pub fn write_ply_binary(model: &ObjectModel) -> Vec<u8> {
    let mut out = header_text(model, "binary_little_endian").into_bytes();
    for v in &model.vertices {
        for c in v.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for t in &model.triangles {
        out.push(3);
        for &i in t {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}

/// ASCII PLY; values printed with round-trip precision.
pub fn write_ply_ascii(model: &ObjectModel) -> String {
    let mut out = header_text(model, "ascii");
    for v in &model.vertices {
        out += &format!("{:?} {:?} {:?}\n", v.x, v.y, v.z);
    }
    for t in &model.triangles {
        out += &format!("3 {} {} {}\n", t[0], t[1], t[2]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TETRA: &str = "ply\nformat ascii 1.0\ncomment unit tetrahedron\nelement vertex 4\n\
property float x\nproperty float y\nproperty float z\nelement face 4\n\
property list uchar int vertex_indices\nend_header\n\
1 0 0\n0 1 0\n0 0 1\n0 0 0\n3 0 1 2\n3 0 1 3\n3 0 2 3\n3 1 2 3\n";

    #[test]
    fn ascii_tetrahedron() {
        let mesh = parse_ply(TETRA.as_bytes()).unwrap();
        assert_eq!(mesh.vertices.len(), 4);
        assert_eq!(mesh.faces.len(), 4);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ply");
        std::fs::write(&p, TETRA).unwrap();
        let m = load_model(&p, 1.0).unwrap();
        assert!((m.diameter - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn point_cloud_without_faces() {
        let text = "ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\nproperty double y\n\
property double z\nproperty uchar red\nend_header\n0 0 0 255\n1 1 1 0\n";
        let mesh = parse_ply(text.as_bytes()).unwrap();
        assert_eq!(mesh.vertices[1], Vector3::new(1.0, 1.0, 1.0));
        assert!(mesh.faces.is_empty());
    }

    #[test]
    fn binary_round_trip_and_truncation() {
        let model = ObjectModel::l_block();
        let bytes = write_ply_binary(&model);
        let mesh = parse_ply(&bytes).unwrap();
        assert_eq!(mesh.vertices, model.vertices);
        let cut = &bytes[..bytes.len() - 7];
        match parse_ply(cut) {
            Err(Error::Ply { offset, message }) => {
                assert_eq!(offset, bytes.len() - 8);
                assert!(message.contains("unexpected end"), "{message}");
            }
            other => panic!("expected parse error, got {:?}", other.map(|m| m.vertices.len())),
        }
        let ascii = write_ply_ascii(&model);
        assert_eq!(parse_ply(ascii.as_bytes()).unwrap().vertices, model.vertices);
    }

    #[test]
    fn rejects_bad_inputs() {
        let int_pos = "ply\nformat ascii 1.0\nelement vertex 1\nproperty int x\nproperty int y\nproperty int z\nend_header\n0 0 0\n";
        assert!(matches!(parse_ply(int_pos.as_bytes()), Err(Error::Ply { .. })));
        let empty = "ply\nformat ascii 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        assert!(matches!(parse_ply(empty.as_bytes()), Err(Error::Empty(_))));
        assert!(matches!(parse_ply(b"obj\n"), Err(Error::Ply { offset: 0, .. })));
        let truncated_ascii = &TETRA[..TETRA.len() - 4];
        assert!(matches!(parse_ply(truncated_ascii.as_bytes()), Err(Error::Ply { .. })));
        let big = TETRA.replace("ascii", "binary_big_endian");
        assert!(matches!(parse_ply(big.as_bytes()), Err(Error::Ply { .. })));
    }
}
