//! Binary little-endian PLY reader and writer for the standard Gaussian
//! splat attribute schema.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scene::{ExtraAttribute, GaussianScene, SH_BAND_COUNTS};
use crate::selection::Selection3D;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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

    fn read(self, b: &[u8]) -> f32 {
        match self {
            Self::I8 => b[0] as i8 as f32,
            Self::U8 => b[0] as f32,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f32,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f32,
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f32,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f32,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()),
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()) as f32,
        }
    }
}

struct Header {
    vertex_count: usize,
    properties: Vec<(String, ScalarType)>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::format("missing end_header"))?;
    let text =
        std::str::from_utf8(&bytes[..end]).map_err(|_| Error::format("header is not UTF-8"))?;
    let mut lines = text.lines().map(str::trim_end);
    if lines.next() != Some("ply") {
        return Err(Error::format("missing `ply` magic"));
    }
    let mut vertex_count = None;
    let mut properties = Vec::new();
    let mut in_vertex = false;
    let mut seen_vertex = false;
    for line in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "binary_little_endian", _] => {}
            ["format", other, ..] => {
                return Err(Error::format(format!("unsupported PLY format `{other}`")));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                vertex_count = Some(n.parse().map_err(|_| Error::format("bad vertex count"))?);
                in_vertex = true;
                seen_vertex = true;
            }
            ["element", ..] => {
                if !seen_vertex {
                    return Err(Error::format("vertex element must come first"));
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::format(
                    "list properties on vertices are not supported",
                ));
            }
            ["property", ty, name] if in_vertex => {
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| Error::format(format!("unknown property type `{ty}`")))?;
                properties.push((name.to_string(), ty));
            }
            ["property", ..] => {}
            _ => return Err(Error::format(format!("unexpected header line `{line}`"))),
        }
    }
    Ok(Header {
        vertex_count: vertex_count.ok_or_else(|| Error::format("no vertex element"))?,
        properties,
        body_offset: end + END.len(),
    })
}

const REQUIRED: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
];

fn is_core_attribute(name: &str) -> bool {
    REQUIRED.contains(&name) || name.starts_with("f_rest_")
}

/// Parses a scene from PLY bytes. Raw values are stored as read.
pub fn parse_scene(bytes: &[u8]) -> Result<GaussianScene> {
    let header = parse_header(bytes)?;
    let find = |name: &str| header.properties.iter().position(|(n, _)| n == name);
    for name in REQUIRED {
        if find(name).is_none() {
            return Err(Error::format(format!(
                "missing required attribute `{name}`"
            )));
        }
    }
    let rest_count = header
        .properties
        .iter()
        .filter(|(n, _)| n.starts_with("f_rest_"))
        .count();
    for k in 0..rest_count {
        if find(&format!("f_rest_{k}")).is_none() {
            return Err(Error::format(format!("missing attribute `f_rest_{k}`")));
        }
    }
    if rest_count % 3 != 0 || !SH_BAND_COUNTS.contains(&(1 + rest_count / 3)) {
        return Err(Error::format(format!(
            "{rest_count} f_rest attributes do not match an SH degree of 0 to 3"
        )));
    }
    let sh_coeffs = 1 + rest_count / 3;

    let mut offsets = Vec::with_capacity(header.properties.len());
    let mut stride = 0;
    for (_, ty) in &header.properties {
        offsets.push(stride);
        stride += ty.size();
    }
    let n = header.vertex_count;
    let body = &bytes[header.body_offset..];
    let need = n
        .checked_mul(stride)
        .ok_or_else(|| Error::format("vertex count overflows"))?;
    if body.len() < need {
        let complete_rows = body.len() / stride.max(1);
        return Err(Error::Truncated {
            offset: (header.body_offset + complete_rows * stride) as u64,
            source: io::Error::new(
                io::ErrorKind::UnexpectedEof,
                format!("expected {n} vertices, file ends inside vertex {complete_rows}"),
            ),
        });
    }

    let column = |name: &str| -> Vec<f32> {
        let p = find(name).expect("checked above");
        let (off, ty) = (offsets[p], header.properties[p].1);
        (0..n).map(|i| ty.read(&body[i * stride + off..])).collect()
    };

    let (x, y, z) = (column("x"), column("y"), column("z"));
    let scales = [column("scale_0"), column("scale_1"), column("scale_2")];
    let rots = [
        column("rot_0"),
        column("rot_1"),
        column("rot_2"),
        column("rot_3"),
    ];
    let dc = [column("f_dc_0"), column("f_dc_1"), column("f_dc_2")];
    let rest: Vec<Vec<f32>> = (0..rest_count)
        .map(|k| column(&format!("f_rest_{k}")))
        .collect();

    let mut scene = GaussianScene::new(sh_coeffs);
    scene.means = (0..n).map(|i| [x[i], y[i], z[i]]).collect();
    scene.log_scales = (0..n)
        .map(|i| [scales[0][i], scales[1][i], scales[2][i]])
        .collect();
    scene.rotations = (0..n)
        .map(|i| [rots[0][i], rots[1][i], rots[2][i], rots[3][i]])
        .collect();
    scene.opacity_logits = column("opacity");
    let per_channel = sh_coeffs - 1;
    scene.sh = Vec::with_capacity(n * 3 * sh_coeffs);
    for i in 0..n {
        for c in 0..3 {
            scene.sh.push(dc[c][i]);
            for k in 0..per_channel {
                scene.sh.push(rest[c * per_channel + k][i]);
            }
        }
    }
    scene.extras = header
        .properties
        .iter()
        .filter(|(name, _)| !is_core_attribute(name))
        .map(|(name, _)| ExtraAttribute {
            name: name.clone(),
            values: column(name),
        })
        .collect();
    let order: Vec<String> = header.properties.iter().map(|(n, _)| n.clone()).collect();
    // Canonical layouts are not recorded so that freshly built and loaded
    // scenes compare equal.
    if order != canonical_order(&scene) {
        scene.property_order = order;
    }
    Ok(scene)
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<GaussianScene> {
    parse_scene(&fs::read(path)?)
}

fn canonical_order(scene: &GaussianScene) -> Vec<String> {
    let mut names: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    names.extend(scene.extras.iter().map(|e| e.name.clone()));
    names.extend(["f_dc_0", "f_dc_1", "f_dc_2"].iter().map(|s| s.to_string()));
    names.extend((0..3 * (scene.sh_coeffs - 1)).map(|k| format!("f_rest_{k}")));
    names.extend(
        [
            "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    names
}

fn value_of(scene: &GaussianScene, i: usize, name: &str) -> Option<f32> {
    let b = scene.sh_coeffs;
    Some(match name {
        "x" => scene.means[i][0],
        "y" => scene.means[i][1],
        "z" => scene.means[i][2],
        "opacity" => scene.opacity_logits[i],
        "scale_0" => scene.log_scales[i][0],
        "scale_1" => scene.log_scales[i][1],
        "scale_2" => scene.log_scales[i][2],
        "rot_0" => scene.rotations[i][0],
        "rot_1" => scene.rotations[i][1],
        "rot_2" => scene.rotations[i][2],
        "rot_3" => scene.rotations[i][3],
        _ => {
            if let Some(c) = name.strip_prefix("f_dc_") {
                let c: usize = c.parse().ok()?;
                scene.sh_of(i)[c * b]
            } else if let Some(k) = name.strip_prefix("f_rest_") {
                let k: usize = k.parse().ok()?;
                let per = b - 1;
                if per == 0 || k >= 3 * per {
                    return None;
                }
                scene.sh_of(i)[(k / per) * b + 1 + k % per]
            } else {
                scene.extras.iter().find(|e| e.name == name)?.values[i]
            }
        }
    })
}

/// Writes the rows listed in `rows` (in that order) as float properties.
pub fn write_rows(scene: &GaussianScene, rows: &[usize], out: &mut impl Write) -> Result<()> {
    scene.validate()?;
    let order = if scene.property_order.is_empty() {
        canonical_order(scene)
    } else {
        scene.property_order.clone()
    };
    // Reject stale orders, e.g. after an SH degree change.
    for name in &order {
        if scene.is_empty() {
            break;
        }
        if value_of(scene, 0, name).is_none() {
            return Err(Error::format(format!("no value for property `{name}`")));
        }
    }
    writeln!(out, "ply")?;
    writeln!(out, "format binary_little_endian 1.0")?;
    writeln!(out, "element vertex {}", rows.len())?;
    for name in &order {
        writeln!(out, "property float {name}")?;
    }
    writeln!(out, "end_header")?;
    let mut buf = Vec::with_capacity(order.len() * 4);
    for &i in rows {
        buf.clear();
        for name in &order {
            buf.extend_from_slice(&value_of(scene, i, name).unwrap_or(0.0).to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn save_scene(scene: &GaussianScene, path: impl AsRef<Path>) -> Result<()> {
    let rows: Vec<usize> = (0..scene.len()).collect();
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_rows(scene, &rows, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes the selected (or, with `invert`, the unselected) Gaussians and
/// returns how many rows were written.
pub fn export_selection(
    scene: &GaussianScene,
    sel: &Selection3D,
    path: impl AsRef<Path>,
    invert: bool,
) -> Result<usize> {
    if sel.len() != scene.len() {
        return Err(Error::argument(format!(
            "selection length {} does not match scene count {}",
            sel.len(),
            scene.len()
        )));
    }
    let rows: Vec<usize> = (0..scene.len())
        .filter(|&i| sel.bits[i] != invert)
        .collect();
    if rows.is_empty() {
        log::warn!("exporting an empty selection; writing a header-only file");
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_rows(scene, &rows, &mut w)?;
    w.flush()?;
    Ok(rows.len())
}
