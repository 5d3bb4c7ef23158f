//! OBJ (+MTL) and PLY (ascii, binary little/big endian) reading and writing.
//!
//! PLY faces may carry a `label` property (uchar: 0 unknown, 1 structure,
//! 2 furniture), a `plane` property (int, -1 for none) and a `texcoord`
//! list of six floats.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{FaceLabel, FaceUvs, TriMesh, Vec3};
use crate::error::{Error, Result};
use crate::image::ensure_parent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyFormat {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

pub fn load_mesh(path: &Path) -> Result<TriMesh> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mesh = match extension(path).as_str() {
        "obj" => parse_obj(path, &bytes)?,
        "ply" => parse_ply(path, &bytes)?,
        other => return Err(Error::parse(path, format!("unsupported mesh format '{other}'"))),
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Write OBJ or binary PLY depending on the extension.
pub fn save_mesh(mesh: &TriMesh, path: &Path) -> Result<()> {
    save_mesh_with(mesh, path, PlyFormat::default())
}

pub fn save_mesh_with(mesh: &TriMesh, path: &Path, ply: PlyFormat) -> Result<()> {
    let buf = match extension(path).as_str() {
        "obj" => write_obj(mesh, path)?,
        "ply" => write_ply(mesh, ply),
        other => return Err(Error::parse(path, format!("unsupported mesh format '{other}'"))),
    };
    ensure_parent(path)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

// ---------------------------------------------------------------- OBJ

fn parse_obj(path: &Path, bytes: &[u8]) -> Result<TriMesh> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut vertices = Vec::new();
    let mut texcoords: Vec<[f64; 2]> = Vec::new();
    let mut faces = Vec::new();
    let mut face_uv: Vec<Option<[usize; 3]>> = Vec::new();
    let mut mtllib: Option<String> = None;

    let float = |tok: Option<&str>, line: usize| -> Result<f64> {
        tok.ok_or_else(|| Error::parse(path, format!("line {line}: missing coordinate")))?
            .parse::<f64>()
            .map_err(|e| Error::parse(path, format!("line {line}: {e}")))
    };

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let raw = raw.split('#').next().unwrap_or("").trim();
        let mut it = raw.split_whitespace();
        match it.next() {
            Some("v") => {
                let x = float(it.next(), line)?;
                let y = float(it.next(), line)?;
                let z = float(it.next(), line)?;
                vertices.push(Vec3::new(x, y, z));
            }
            Some("vt") => {
                let u = float(it.next(), line)?;
                let v = float(it.next(), line).unwrap_or(0.0);
                texcoords.push([u, v]);
            }
            Some("f") => {
                let mut poly: Vec<(i64, Option<i64>)> = Vec::new();
                for tok in it {
                    let mut parts = tok.split('/');
                    let vi = parts
                        .next()
                        .unwrap_or("")
                        .parse::<i64>()
                        .map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
                    let ti = match parts.next() {
                        Some("") | None => None,
                        Some(s) => Some(
                            s.parse::<i64>()
                                .map_err(|e| Error::parse(path, format!("line {line}: {e}")))?,
                        ),
                    };
                    poly.push((vi, ti));
                }
                if poly.len() < 3 {
                    return Err(Error::parse(path, format!("line {line}: face with < 3 vertices")));
                }
                let resolve = |i: i64, n: usize, what: &str| -> Result<usize> {
                    let idx = if i > 0 { i - 1 } else { n as i64 + i };
                    if i == 0 || idx < 0 || idx as usize >= n {
                        return Err(Error::Validation(format!(
                            "line {line}: {what} index {i} out of range (have {n})"
                        )));
                    }
                    Ok(idx as usize)
                };
                let vs: Vec<usize> = poly
                    .iter()
                    .map(|&(v, _)| resolve(v, vertices.len(), "vertex"))
                    .collect::<Result<_>>()?;
                let ts: Option<Vec<usize>> = poly
                    .iter()
                    .map(|&(_, t)| t.map(|t| resolve(t, texcoords.len(), "texcoord")))
                    .collect::<Option<Result<Vec<_>>>>()
                    .transpose()?;
                for k in 1..vs.len() - 1 {
                    faces.push([vs[0], vs[k], vs[k + 1]]);
                    face_uv.push(ts.as_ref().map(|t| [t[0], t[k], t[k + 1]]));
                }
            }
            Some("mtllib") => mtllib = it.next().map(str::to_string),
            _ => {}
        }
    }

    let texture = if !faces.is_empty() && face_uv.iter().all(Option::is_some) {
        let uvs = face_uv
            .iter()
            .map(|t| t.unwrap().map(|i| texcoords[i]))
            .collect();
        let atlas = mtllib.and_then(|lib| {
            let mtl = path.parent().unwrap_or(Path::new("")).join(lib);
            fs::read_to_string(mtl).ok().and_then(|s| {
                s.lines().find_map(|l| {
                    let l = l.trim();
                    l.strip_prefix("map_Kd").map(|rest| rest.trim().to_string())
                })
            })
        });
        Some(FaceUvs { uvs, atlas })
    } else {
        None
    };

    Ok(TriMesh {
        vertices,
        faces,
        face_labels: None,
        face_plane: None,
        texture,
    })
}

fn write_obj(mesh: &TriMesh, path: &Path) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("mesh")
        .to_string();
    let tex = mesh.texture.as_ref();
    if let Some(FaceUvs { atlas: Some(atlas), .. }) = tex {
        let mtl_name = format!("{stem}.mtl");
        let mtl = format!(
            "newmtl atlas\nKa 1 1 1\nKd 1 1 1\nKs 0 0 0\nillum 1\nmap_Kd {atlas}\n"
        );
        let mtl_path = path.with_file_name(&mtl_name);
        ensure_parent(&mtl_path)?;
        fs::write(&mtl_path, mtl).map_err(|e| Error::io(&mtl_path, e))?;
        writeln!(out, "mtllib {mtl_name}").unwrap();
    }
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    if let Some(t) = tex {
        for uv in t.uvs.iter().flatten() {
            writeln!(out, "vt {} {}", uv[0], uv[1]).unwrap();
        }
        if t.atlas.is_some() {
            writeln!(out, "usemtl atlas").unwrap();
        }
    }
    for (fi, f) in mesh.faces.iter().enumerate() {
        if tex.is_some() {
            let t = 3 * fi + 1;
            writeln!(
                out,
                "f {}/{} {}/{} {}/{}",
                f[0] + 1,
                t,
                f[1] + 1,
                t + 1,
                f[2] + 1,
                t + 2
            )
            .unwrap();
        } else {
            writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- PLY

#[derive(Debug, Clone, Copy, PartialEq)]
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
}

#[derive(Debug, Clone)]
enum PropKind {
    Scalar(Scalar),
    List(Scalar, Scalar),
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<(String, PropKind)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Encoding {
    Ascii,
    Le,
    Be,
}

/// Cursor over PLY body values, hiding the encoding.
struct Body<'a> {
    enc: Encoding,
    bytes: &'a [u8],
    pos: usize,
    tokens: std::str::SplitAsciiWhitespace<'a>,
}

impl<'a> Body<'a> {
    fn read(&mut self, ty: Scalar) -> std::result::Result<f64, String> {
        if self.enc == Encoding::Ascii {
            let tok = self.tokens.next().ok_or("unexpected end of data")?;
            return tok.parse::<f64>().map_err(|e| format!("'{tok}': {e}"));
        }
        let n = ty.size();
        let b = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or("unexpected end of data")?;
        self.pos += n;
        let le = self.enc == Encoding::Le;
        macro_rules! num {
            ($t:ty) => {{
                let arr: [u8; std::mem::size_of::<$t>()] = b.try_into().unwrap();
                (if le { <$t>::from_le_bytes(arr) } else { <$t>::from_be_bytes(arr) }) as f64
            }};
        }
        Ok(match ty {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => num!(i16),
            Scalar::U16 => num!(u16),
            Scalar::I32 => num!(i32),
            Scalar::U32 => num!(u32),
            Scalar::F32 => num!(f32),
            Scalar::F64 => num!(f64),
        })
    }
}

fn parse_ply(path: &Path, bytes: &[u8]) -> Result<TriMesh> {
    const END: &[u8] = b"end_header";
    let header_end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::parse(path, "missing end_header"))?;
    let mut body_start = header_end + END.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|e| Error::parse(path, e.to_string()))?;

    let mut lines = header.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(Error::parse(path, "not a PLY file"));
    }
    let mut enc = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut texture_file = None;
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", f, _] => {
                enc = Some(match *f {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::Le,
                    "binary_big_endian" => Encoding::Be,
                    other => return Err(Error::parse(path, format!("unknown format {other}"))),
                })
            }
            ["comment", "TextureFile", name] => texture_file = Some(name.to_string()),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::parse(path, format!("bad element count '{count}'")))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let (Some(ct), Some(it)) = (Scalar::parse(ct), Scalar::parse(it)) else {
                    return Err(Error::parse(path, format!("bad list property '{line}'")));
                };
                elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, "property before element"))?
                    .props
                    .push((name.to_string(), PropKind::List(ct, it)));
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| Error::parse(path, format!("bad property type '{ty}'")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, "property before element"))?
                    .props
                    .push((name.to_string(), PropKind::Scalar(ty)));
            }
            _ => {}
        }
    }
    let enc = enc.ok_or_else(|| Error::parse(path, "missing format line"))?;
    let body_bytes = &bytes[body_start..];
    let mut body = Body {
        enc,
        bytes: body_bytes,
        pos: 0,
        tokens: if enc == Encoding::Ascii {
            std::str::from_utf8(body_bytes)
                .map_err(|e| Error::parse(path, e.to_string()))?
                .split_ascii_whitespace()
        } else {
            "".split_ascii_whitespace()
        },
    };

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut labels = Vec::new();
    let mut planes = Vec::new();
    let mut uvs = Vec::new();
    let (mut has_label, mut has_plane, mut has_uv) = (false, false, false);
    let err = |m: String| Error::parse(path, m);

    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            let mut poly: Vec<f64> = Vec::new();
            let mut tc: Vec<f64> = Vec::new();
            let mut label = 0.0;
            let mut plane = -1.0;
            for (name, kind) in &el.props {
                match kind {
                    PropKind::Scalar(ty) => {
                        let v = body.read(*ty).map_err(err)?;
                        match (el.name.as_str(), name.as_str()) {
                            ("vertex", "x") => xyz[0] = v,
                            ("vertex", "y") => xyz[1] = v,
                            ("vertex", "z") => xyz[2] = v,
                            ("face", "label") => {
                                has_label = true;
                                label = v
                            }
                            ("face", "plane") => {
                                has_plane = true;
                                plane = v
                            }
                            _ => {}
                        }
                    }
                    PropKind::List(ct, it) => {
                        let n = body.read(*ct).map_err(err)? as usize;
                        let mut vals = Vec::with_capacity(n);
                        for _ in 0..n {
                            vals.push(body.read(*it).map_err(err)?);
                        }
                        match (el.name.as_str(), name.as_str()) {
                            ("face", "vertex_indices" | "vertex_index") => poly = vals,
                            ("face", "texcoord") => tc = vals,
                            _ => {}
                        }
                    }
                }
            }
            match el.name.as_str() {
                "vertex" => vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2])),
                "face" => {
                    if poly.len() < 3 {
                        return Err(Error::parse(path, "face with < 3 vertices"));
                    }
                    if poly.iter().any(|&i| i < 0.0) {
                        return Err(Error::Validation("negative vertex index".into()));
                    }
                    let lab = FaceLabel::from_u8(label as u8).ok_or_else(|| {
                        Error::Validation(format!("unknown face label {label}"))
                    })?;
                    let pl = (plane >= 0.0).then_some(plane as usize);
                    if tc.len() == 2 * poly.len() {
                        has_uv = true;
                    }
                    for k in 1..poly.len() - 1 {
                        faces.push([poly[0] as usize, poly[k] as usize, poly[k + 1] as usize]);
                        labels.push(lab);
                        planes.push(pl);
                        let uv = |i: usize| tc.get(2 * i..2 * i + 2).map_or([0.0, 0.0], |s| [s[0], s[1]]);
                        uvs.push([uv(0), uv(k), uv(k + 1)]);
                    }
                }
                _ => {}
            }
        }
    }

    Ok(TriMesh {
        vertices,
        faces,
        face_labels: has_label.then_some(labels),
        face_plane: has_plane.then_some(planes),
        texture: has_uv.then_some(FaceUvs {
            uvs,
            atlas: texture_file,
        }),
    })
}

fn write_ply(mesh: &TriMesh, format: PlyFormat) -> Vec<u8> {
    let mut out = Vec::new();
    let fmt = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    writeln!(out, "ply\nformat {fmt} 1.0").unwrap();
    if let Some(FaceUvs { atlas: Some(a), .. }) = &mesh.texture {
        writeln!(out, "comment TextureFile {a}").unwrap();
    }
    writeln!(
        out,
        "element vertex {}\nproperty double x\nproperty double y\nproperty double z",
        mesh.vertices.len()
    )
    .unwrap();
    writeln!(
        out,
        "element face {}\nproperty list uchar int vertex_indices",
        mesh.faces.len()
    )
    .unwrap();
    if mesh.face_labels.is_some() {
        writeln!(out, "property uchar label").unwrap();
    }
    if mesh.face_plane.is_some() {
        writeln!(out, "property int plane").unwrap();
    }
    if mesh.texture.is_some() {
        writeln!(out, "property list uchar float texcoord").unwrap();
    }
    writeln!(out, "end_header").unwrap();

    let mut w = BufWriter::new(&mut out);
    let ascii = format == PlyFormat::Ascii;
    for v in &mesh.vertices {
        if ascii {
            writeln!(w, "{} {} {}", v.x, v.y, v.z).unwrap();
        } else {
            for c in [v.x, v.y, v.z] {
                w.write_all(&c.to_le_bytes()).unwrap();
            }
        }
    }
    for (fi, f) in mesh.faces.iter().enumerate() {
        let label = mesh.face_labels.as_ref().map(|l| l[fi].to_u8());
        let plane = mesh
            .face_plane
            .as_ref()
            .map(|p| p[fi].map_or(-1, |v| v as i32));
        let uv = mesh.texture.as_ref().map(|t| t.uvs[fi]);
        if ascii {
            let mut line = format!("3 {} {} {}", f[0], f[1], f[2]);
            if let Some(l) = label {
                line += &format!(" {l}");
            }
            if let Some(p) = plane {
                line += &format!(" {p}");
            }
            if let Some(uv) = uv {
                line += " 6";
                for c in uv.iter().flatten() {
                    line += &format!(" {}", *c as f32);
                }
            }
            writeln!(w, "{line}").unwrap();
        } else {
            w.write_all(&[3u8]).unwrap();
            for &i in f {
                w.write_all(&(i as i32).to_le_bytes()).unwrap();
            }
            if let Some(l) = label {
                w.write_all(&[l]).unwrap();
            }
            if let Some(p) = plane {
                w.write_all(&p.to_le_bytes()).unwrap();
            }
            if let Some(uv) = uv {
                w.write_all(&[6u8]).unwrap();
                for c in uv.iter().flatten() {
                    w.write_all(&(*c as f32).to_le_bytes()).unwrap();
                }
            }
        }
    }
    w.flush().unwrap();
    drop(w);
    out
}
