//! OBJ and PLY reading/writing.
//!
//! OBJ: only `v` and `f` records are interpreted (polygons are fan
//! triangulated, `v/vt/vn` index forms and negative indices are accepted);
//! everything else is skipped with a warning. PLY: ASCII and binary
//! little-endian, `x/y/z` vertex properties of any scalar type and a
//! `vertex_indices` (or `vertex_index`) face list. Writers emit `double`
//! coordinates so a save/load cycle is lossless.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{GeometryError, Result, TriMesh};
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    /// ASCII PLY.
    Ply,
    /// Binary little-endian PLY.
    PlyBinary,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(Self::Obj),
            "ply" => Some(Self::Ply),
            _ => None,
        }
    }
}

/// Loads an OBJ or PLY file; the format is sniffed from the `ply` magic.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let bytes = fs::read(path.as_ref())?;
    let mesh = if bytes.starts_with(b"ply") {
        let ply = read_ply(&bytes)?;
        let x = ply.column("x")?;
        let y = ply.column("y")?;
        let z = ply.column("z")?;
        let vertices = (0..ply.rows.len()).map(|i| Vec3::new(x[i], y[i], z[i])).collect();
        let faces = triangulate(&ply.faces);
        TriMesh { vertices, faces }
    } else {
        let text = String::from_utf8(bytes).map_err(|e| GeometryError::Parse {
            location: format!("byte {}", e.utf8_error().valid_up_to()),
            message: "OBJ file is not valid UTF-8".into(),
        })?;
        parse_obj(&text)?
    };
    mesh.validate()?;
    Ok(mesh)
}

pub fn save_mesh(mesh: &TriMesh, path: impl AsRef<Path>, format: MeshFormat) -> Result<()> {
    let mut out = Vec::new();
    match format {
        MeshFormat::Obj => write_obj(mesh, &mut out)?,
        MeshFormat::Ply | MeshFormat::PlyBinary => {
            let rows: Vec<Vec<f64>> = mesh.vertices.iter().map(|v| vec![v.x, v.y, v.z]).collect();
            write_ply(&mut out, &["x", "y", "z"], &rows, &mesh.faces, format == MeshFormat::PlyBinary)?;
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn write_obj(mesh: &TriMesh, out: &mut Vec<u8>) -> std::io::Result<()> {
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut polygons: Vec<Vec<usize>> = Vec::new();
    let mut skipped = BTreeSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        let Some(tag) = tok.next() else { continue };
        let err = |message: String| GeometryError::Parse { location: format!("line {}", lineno + 1), message };
        match tag {
            "v" => {
                let coords: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>().map_err(|e| err(format!("bad coordinate {t:?}: {e}"))))
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(err("vertex needs three coordinates".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            "f" => {
                let mut poly = Vec::new();
                for t in tok {
                    let head = t.split('/').next().unwrap_or("");
                    let idx: i64 = head.parse().map_err(|e| err(format!("bad face index {t:?}: {e}")))?;
                    let resolved = match idx {
                        0 => return Err(err("face index 0 is invalid in OBJ".into())),
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = (-i) as usize;
                            if back > vertices.len() {
                                return Err(err(format!("relative index {i} before first vertex")));
                            }
                            vertices.len() - back
                        }
                    };
                    poly.push(resolved);
                }
                if poly.len() < 3 {
                    return Err(err("face needs at least three vertices".into()));
                }
                polygons.push(poly);
            }
            other => {
                skipped.insert(other.to_string());
            }
        }
    }
    if !skipped.is_empty() {
        log::warn!("OBJ records ignored: {}", skipped.into_iter().collect::<Vec<_>>().join(", "));
    }
    Ok(TriMesh { vertices, faces: triangulate(&polygons) })
}

fn triangulate(polys: &[Vec<usize>]) -> Vec<[usize; 3]> {
    polys.iter().flat_map(|p| (1..p.len() - 1).map(move |k| [p[0], p[k], p[k + 1]])).collect()
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
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Vertex table and face lists of a PLY file.
#[derive(Debug, Clone, Default)]
pub(crate) struct PlyData {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub faces: Vec<Vec<usize>>,
}

impl PlyData {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self.names.iter().position(|n| n == name).ok_or_else(|| GeometryError::Parse {
            location: "header".into(),
            message: format!("vertex element has no property {name:?}"),
        })?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub(crate) fn read_ply(bytes: &[u8]) -> Result<PlyData> {
    let header_err = |line: usize, message: String| GeometryError::Parse { location: format!("header line {line}"), message };
    let end_marker = b"end_header";
    let end = bytes
        .windows(end_marker.len())
        .position(|w| w == end_marker)
        .ok_or_else(|| header_err(0, "missing end_header".into()))?;
    let mut body_start = end + end_marker.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| header_err(0, "header is not UTF-8".into()))?;

    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    for (i, line) in header.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["ply"] | [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", f, ..] => return Err(header_err(i + 1, format!("unsupported format {f}"))),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| header_err(i + 1, format!("bad element count {count}")))?,
                props: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let el = elements.last_mut().ok_or_else(|| header_err(i + 1, "property before element".into()))?;
                let count = Scalar::parse(count).ok_or_else(|| header_err(i + 1, format!("bad type {count}")))?;
                let item = Scalar::parse(item).ok_or_else(|| header_err(i + 1, format!("bad type {item}")))?;
                el.props.push(Property::List { name: name.to_string(), count, item });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| header_err(i + 1, "property before element".into()))?;
                let ty = Scalar::parse(ty).ok_or_else(|| header_err(i + 1, format!("bad type {ty}")))?;
                el.props.push(Property::Scalar { name: name.to_string(), ty });
            }
            _ => return Err(header_err(i + 1, format!("unrecognised header line {line:?}"))),
        }
    }
    let binary = binary.ok_or_else(|| header_err(0, "missing format line".into()))?;

    let mut data = PlyData::default();
    let mut reader: Box<dyn ValueReader> = if binary {
        Box::new(BinaryReader { bytes, pos: body_start })
    } else {
        let text = std::str::from_utf8(&bytes[body_start..])
            .map_err(|_| GeometryError::Parse { location: "body".into(), message: "ASCII body is not UTF-8".into() })?;
        Box::new(AsciiReader::new(text, header.lines().count() + 1))
    };

    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        if is_vertex {
            data.names = el
                .props
                .iter()
                .filter_map(|p| match p {
                    Property::Scalar { name, .. } => Some(name.clone()),
                    Property::List { .. } => None,
                })
                .collect();
        }
        for _ in 0..el.count {
            let mut row = Vec::new();
            for p in &el.props {
                match *p {
                    Property::Scalar { ty, .. } => row.push(reader.next(ty)?),
                    Property::List { ref name, count, item } => {
                        let n = reader.next(count)?;
                        if n < 0.0 || n.fract() != 0.0 {
                            return Err(reader.error(format!("bad list length {n}")));
                        }
                        let mut list = Vec::with_capacity(n as usize);
                        for _ in 0..n as usize {
                            let v = reader.next(item)?;
                            if v < 0.0 || v.fract() != 0.0 {
                                return Err(reader.error(format!("bad vertex index {v}")));
                            }
                            list.push(v as usize);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            if list.len() < 3 {
                                return Err(reader.error("face needs at least three vertices".into()));
                            }
                            data.faces.push(list);
                        }
                    }
                }
            }
            if is_vertex {
                data.rows.push(row);
            }
        }
        reader.end_row_group();
    }
    Ok(data)
}

trait ValueReader {
    fn next(&mut self, ty: Scalar) -> Result<f64>;
    fn error(&self, message: String) -> GeometryError;
    fn end_row_group(&mut self) {}
}

struct BinaryReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ValueReader for BinaryReader<'_> {
    fn next(&mut self, ty: Scalar) -> Result<f64> {
        let n = ty.size();
        let chunk = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| self.error("unexpected end of binary body".into()))?;
        self.pos += n;
        Ok(ty.read_le(chunk))
    }

    fn error(&self, message: String) -> GeometryError {
        GeometryError::Parse { location: format!("byte offset {}", self.pos), message }
    }
}

struct AsciiReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    current: std::vec::IntoIter<&'a str>,
    line_offset: usize,
    line: usize,
}

impl<'a> AsciiReader<'a> {
    fn new(text: &'a str, line_offset: usize) -> Self {
        Self { lines: text.lines().enumerate(), current: Vec::new().into_iter(), line_offset, line: line_offset }
    }
}

impl ValueReader for AsciiReader<'_> {
    fn next(&mut self, _ty: Scalar) -> Result<f64> {
        loop {
            if let Some(tok) = self.current.next() {
                return tok.parse::<f64>().map_err(|e| self.error(format!("bad number {tok:?}: {e}")));
            }
            let (i, line) = self.lines.next().ok_or_else(|| self.error("unexpected end of ASCII body".into()))?;
            self.line = self.line_offset + i + 1;
            self.current = line.split_whitespace().collect::<Vec<_>>().into_iter();
        }
    }

    fn error(&self, message: String) -> GeometryError {
        GeometryError::Parse { location: format!("line {}", self.line), message }
    }
}

/// Writes a PLY whose vertex element carries `names` as `double` properties.
pub(crate) fn write_ply(
    out: &mut Vec<u8>,
    names: &[&str],
    rows: &[Vec<f64>],
    faces: &[[usize; 3]],
    binary: bool,
) -> std::io::Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format {} 1.0", if binary { "binary_little_endian" } else { "ascii" })?;
    writeln!(out, "element vertex {}", rows.len())?;
    for n in names {
        writeln!(out, "property double {n}")?;
    }
    writeln!(out, "element face {}", faces.len())?;
    writeln!(out, "property list uchar int vertex_indices")?;
    writeln!(out, "end_header")?;
    if binary {
        for r in rows {
            for v in r {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for f in faces {
            out.push(3);
            for &i in f {
                out.extend_from_slice(&(i as i32).to_le_bytes());
            }
        }
    } else {
        for r in rows {
            let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        for f in faces {
            writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
        }
    }
    Ok(())
}
