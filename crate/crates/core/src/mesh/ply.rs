//! Minimal PLY reader/writer: ASCII and binary little-endian, triangles only.

use std::io::{BufRead, Write};

use nalgebra::Point3;

use super::{Mesh, MeshError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

/// Raw contents of a PLY file before degenerate filtering.
#[derive(Debug, Clone, Default)]
pub struct PlyMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[u32; 3]>,
    pub face_labels: Option<Vec<u8>>,
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

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar {
        name: String,
        ty: Scalar,
    },
    List {
        name: String,
        count: Scalar,
        item: Scalar,
    },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
}

fn header_err(line: usize, msg: impl Into<String>) -> MeshError {
    MeshError::Header {
        line,
        msg: msg.into(),
    }
}

fn read_header<R: BufRead>(r: &mut R) -> Result<Header, MeshError> {
    let mut line = String::new();
    let mut lineno = 0;
    let mut next_line = |r: &mut R, line: &mut String| -> Result<bool, MeshError> {
        line.clear();
        lineno += 1;
        Ok(r.read_line(line)? > 0)
    };

    if !next_line(r, &mut line)? || line.trim() != "ply" {
        return Err(header_err(1, "missing `ply` magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut n = 1;
    loop {
        if !next_line(r, &mut line)? {
            return Err(header_err(n + 1, "unexpected end of file in header"));
        }
        n += 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                format = Some(match *fmt {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => return Err(header_err(n, format!("unsupported format `{other}`"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| header_err(n, format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", cty, ity, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| header_err(n, "property before any element"))?;
                let count = Scalar::parse(cty)
                    .filter(|s| s.is_integer())
                    .ok_or_else(|| header_err(n, format!("bad list count type `{cty}`")))?;
                let item = Scalar::parse(ity)
                    .ok_or_else(|| header_err(n, format!("unknown type `{ity}`")))?;
                el.props.push(Property::List {
                    name: name.to_string(),
                    count,
                    item,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| header_err(n, "property before any element"))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| header_err(n, format!("unknown type `{ty}`")))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            ["end_header"] => break,
            _ => {
                return Err(header_err(
                    n,
                    format!("unrecognized line `{}`", line.trim()),
                ))
            }
        }
    }
    let format = format.ok_or_else(|| header_err(n, "missing format line"))?;
    Ok(Header { format, elements })
}

/// One decoded element instance: scalars in property order, lists separately.
struct Record {
    scalars: Vec<f64>,
    lists: Vec<Vec<f64>>,
}

struct BodyReader<R> {
    inner: R,
    format: PlyFormat,
    line: String,
}

impl<R: BufRead> BodyReader<R> {
    fn record(&mut self, el: &Element, index: usize) -> Result<Record, MeshError> {
        let bad = |msg: String| MeshError::Malformed {
            element: el.name.clone(),
            index,
            msg,
        };
        let mut rec = Record {
            scalars: Vec::new(),
            lists: Vec::new(),
        };
        match self.format {
            PlyFormat::Ascii => {
                self.line.clear();
                if self.inner.read_line(&mut self.line)? == 0 {
                    return Err(bad("unexpected end of file".into()));
                }
                let mut toks = self.line.split_whitespace();
                let mut next = |what: &str| -> Result<f64, MeshError> {
                    let t = toks
                        .next()
                        .ok_or_else(|| bad(format!("missing value for `{what}`")))?;
                    t.parse::<f64>()
                        .map_err(|_| bad(format!("cannot parse `{t}` for `{what}`")))
                };
                for p in &el.props {
                    match p {
                        Property::Scalar { name, .. } => rec.scalars.push(next(name)?),
                        Property::List { name, .. } => {
                            let n = next(name)?;
                            if n < 0.0 || n.fract() != 0.0 {
                                return Err(bad(format!("bad list length {n}")));
                            }
                            let items = (0..n as usize)
                                .map(|_| next(name))
                                .collect::<Result<Vec<_>, _>>()?;
                            rec.lists.push(items);
                        }
                    }
                }
            }
            PlyFormat::BinaryLittleEndian => {
                let mut buf = [0u8; 8];
                let mut read = |ty: Scalar, inner: &mut R| -> Result<f64, MeshError> {
                    inner
                        .read_exact(&mut buf[..ty.size()])
                        .map_err(|e| bad(format!("truncated data: {e}")))?;
                    Ok(ty.read_le(&buf))
                };
                for p in &el.props {
                    match p {
                        Property::Scalar { ty, .. } => {
                            rec.scalars.push(read(*ty, &mut self.inner)?)
                        }
                        Property::List { count, item, .. } => {
                            let n = read(*count, &mut self.inner)?;
                            if n < 0.0 {
                                return Err(bad(format!("bad list length {n}")));
                            }
                            let items = (0..n as usize)
                                .map(|_| read(*item, &mut self.inner))
                                .collect::<Result<Vec<_>, _>>()?;
                            rec.lists.push(items);
                        }
                    }
                }
            }
        }
        Ok(rec)
    }
}

fn scalar_slot(el: &Element, name: &str) -> Option<usize> {
    el.props
        .iter()
        .filter(|p| matches!(p, Property::Scalar { .. }))
        .position(|p| p.name() == name)
}

fn list_slot(el: &Element, names: &[&str]) -> Option<usize> {
    el.props
        .iter()
        .filter(|p| matches!(p, Property::List { .. }))
        .position(|p| names.contains(&p.name()))
}

/// Parses a PLY stream. Needs a `vertex` element with x/y/z and a `face`
/// element with a `vertex_indices` (or `vertex_index`) list; a per-face
/// `label` property is picked up when present. Other elements are skipped.
pub fn read_ply<R: BufRead>(mut r: R) -> Result<PlyMesh, MeshError> {
    let header = read_header(&mut r)?;
    let mut body = BodyReader {
        inner: r,
        format: header.format,
        line: String::new(),
    };
    let mut out = PlyMesh::default();
    let mut saw_vertex = false;
    let mut saw_face = false;

    for el in &header.elements {
        match el.name.as_str() {
            "vertex" => {
                saw_vertex = true;
                let slots = ["x", "y", "z"].map(|c| scalar_slot(el, c));
                let [Some(x), Some(y), Some(z)] = slots else {
                    return Err(header_err(0, "vertex element lacks x/y/z"));
                };
                out.vertices.reserve(el.count);
                for i in 0..el.count {
                    let rec = body.record(el, i)?;
                    out.vertices
                        .push(Point3::new(rec.scalars[x], rec.scalars[y], rec.scalars[z]));
                }
            }
            "face" => {
                saw_face = true;
                let idx = list_slot(el, &["vertex_indices", "vertex_index"])
                    .ok_or_else(|| header_err(0, "face element lacks vertex_indices"))?;
                let label = scalar_slot(el, "label");
                let mut labels = label.map(|_| Vec::with_capacity(el.count));
                out.faces.reserve(el.count);
                for i in 0..el.count {
                    let rec = body.record(el, i)?;
                    let list = &rec.lists[idx];
                    if list.len() != 3 {
                        return Err(MeshError::NonTriangular {
                            face: i,
                            count: list.len(),
                        });
                    }
                    let mut tri = [0u32; 3];
                    for (k, &v) in list.iter().enumerate() {
                        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                            return Err(MeshError::Malformed {
                                element: el.name.clone(),
                                index: i,
                                msg: format!("invalid vertex index {v}"),
                            });
                        }
                        tri[k] = v as u32;
                    }
                    out.faces.push(tri);
                    if let (Some(slot), Some(labels)) = (label, labels.as_mut()) {
                        let l = rec.scalars[slot];
                        if !(0.0..=255.0).contains(&l) || l.fract() != 0.0 {
                            return Err(MeshError::Malformed {
                                element: el.name.clone(),
                                index: i,
                                msg: format!("label {l} is not an 8-bit class index"),
                            });
                        }
                        labels.push(l as u8);
                    }
                }
                out.face_labels = labels;
            }
            _ => {
                for i in 0..el.count {
                    body.record(el, i)?;
                }
            }
        }
    }
    if !saw_vertex || !saw_face {
        return Err(header_err(0, "PLY needs both `vertex` and `face` elements"));
    }
    for (fi, f) in out.faces.iter().enumerate() {
        if let Some(&bad) = f.iter().find(|&&v| v as usize >= out.vertices.len()) {
            return Err(MeshError::IndexOutOfRange {
                face: fi,
                index: bad as u64,
                vertex_count: out.vertices.len(),
            });
        }
    }
    Ok(out)
}

/// Writes vertices and faces as ASCII PLY with shortest round-trip floats.
pub fn write_ply<W: Write>(
    w: W,
    vertices: &[Point3<f64>],
    faces: &[[u32; 3]],
) -> std::io::Result<()> {
    write_ascii(w, vertices, faces, None, None)
}

/// Writes the mesh with a per-face `label` and, when a palette is given,
/// per-face `red`/`green`/`blue`.
pub fn write_labeled_ply<W: Write>(
    w: W,
    mesh: &Mesh,
    labels: &[u8],
    palette: Option<&[[u8; 3]]>,
) -> std::io::Result<()> {
    assert_eq!(labels.len(), mesh.facet_count(), "one label per facet");
    write_ascii(w, mesh.vertices(), mesh.facets(), Some(labels), palette)
}

fn write_ascii<W: Write>(
    mut w: W,
    vertices: &[Point3<f64>],
    faces: &[[u32; 3]],
    labels: Option<&[u8]>,
    palette: Option<&[[u8; 3]]>,
) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", vertices.len())?;
    for c in ["x", "y", "z"] {
        writeln!(w, "property double {c}")?;
    }
    writeln!(w, "element face {}", faces.len())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    if labels.is_some() {
        writeln!(w, "property uchar label")?;
        if palette.is_some() {
            for c in ["red", "green", "blue"] {
                writeln!(w, "property uchar {c}")?;
            }
        }
    }
    writeln!(w, "end_header")?;
    for v in vertices {
        writeln!(w, "{} {} {}", v.x, v.y, v.z)?;
    }
    for (i, f) in faces.iter().enumerate() {
        write!(w, "3 {} {} {}", f[0], f[1], f[2])?;
        if let Some(labels) = labels {
            let l = labels[i];
            write!(w, " {l}")?;
            if let Some(pal) = palette {
                let [r, g, b] = pal.get(l as usize).copied().unwrap_or([0, 0, 0]);
                write!(w, " {r} {g} {b}")?;
            }
        }
        writeln!(w)?;
    }
    w.flush()
}
