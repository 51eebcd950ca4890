//! Triangle mesh ingestion: Wavefront OBJ (with optional MTL albedo and
//! texture) and ASCII PLY. Vertex normals are computed area-weighted when
//! the file omits them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::grid::RgbGrid;
use crate::scene::{raster, SceneIoError};

pub const NORMAL_TOL: f32 = 1e-4;
/// Triangles with area below this are considered degenerate.
const DEGENERATE_AREA: f64 = 1e-12;
/// Fraction of degenerate triangles tolerated before the mesh is rejected.
const DEGENERATE_FRACTION: f64 = 0.01;

/// Lambertian material: constant albedo, optionally modulated by a texture.
#[derive(Debug, Clone)]
pub struct Material {
    pub name: String,
    /// Linear RGB reflectance in [0,1].
    pub albedo: [f32; 3],
    pub texture: Option<RgbGrid>,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            name: "default".to_string(),
            albedo: [0.7, 0.7, 0.7],
            texture: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleIndices {
    pub vertices: [usize; 3],
    pub material: usize,
}

/// Object-frame triangle mesh in meters.
#[derive(Debug, Clone)]
pub struct ObjectMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    /// Texture coordinates per vertex; zeros when the file has none.
    pub uvs: Vec<[f32; 2]>,
    pub triangles: Vec<TriangleIndices>,
    pub materials: Vec<Material>,
}

impl ObjectMesh {
    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            normals: Vec::new(),
            uvs: Vec::new(),
            triangles: Vec::new(),
            materials: vec![Material::default()],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_area(&self, t: &TriangleIndices) -> f64 {
        let [a, b, c] = t.vertices;
        let ab = self.vertices[b] - self.vertices[a];
        let ac = self.vertices[c] - self.vertices[a];
        ab.cross(&ac).norm() * 0.5
    }

    /// Validate index ranges, normal lengths, and degenerate-triangle budget.
    pub fn validate(&self) -> Result<(), SceneIoError> {
        for t in &self.triangles {
            for &v in &t.vertices {
                if v >= self.vertices.len() {
                    return Err(SceneIoError::MeshParse(format!(
                        "triangle index {v} out of range ({} vertices)",
                        self.vertices.len()
                    )));
                }
            }
            if t.material >= self.materials.len() {
                return Err(SceneIoError::MeshParse(format!(
                    "material index {} out of range",
                    t.material
                )));
            }
        }
        if self.normals.len() != self.vertices.len() {
            return Err(SceneIoError::MeshParse(format!(
                "{} normals for {} vertices",
                self.normals.len(),
                self.vertices.len()
            )));
        }
        for n in &self.normals {
            if (n.norm() - 1.0).abs() > NORMAL_TOL as f64 {
                return Err(SceneIoError::MeshParse(format!(
                    "normal is not unit length: |n| = {}",
                    n.norm()
                )));
            }
        }
        if !self.triangles.is_empty() {
            let degenerate = self
                .triangles
                .iter()
                .filter(|t| self.triangle_area(t) < DEGENERATE_AREA)
                .count();
            let fraction = degenerate as f64 / self.triangles.len() as f64;
            if fraction > DEGENERATE_FRACTION {
                return Err(SceneIoError::DegenerateMesh {
                    degenerate,
                    total: self.triangles.len(),
                });
            }
        }
        Ok(())
    }

    /// Area-weighted vertex normals over incident triangles.
    pub fn compute_normals(&mut self) {
        let mut acc = vec![Vector3::<f64>::zeros(); self.vertices.len()];
        for t in &self.triangles {
            let [a, b, c] = t.vertices;
            let ab = self.vertices[b] - self.vertices[a];
            let ac = self.vertices[c] - self.vertices[a];
            let weighted = ab.cross(&ac); // length = 2 * area
            acc[a] += weighted;
            acc[b] += weighted;
            acc[c] += weighted;
        }
        self.normals = acc
            .into_iter()
            .map(|n| {
                let len = n.norm();
                if len > 1e-12 {
                    n / len
                } else {
                    Vector3::z()
                }
            })
            .collect();
    }
}

/// Load OBJ or PLY by extension, computing normals when absent.
pub fn load_mesh(path: &Path) -> Result<ObjectMesh, SceneIoError> {
    if !path.exists() {
        return Err(SceneIoError::MissingAsset(path.display().to_string()));
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|s| s.to_ascii_lowercase());
    let mut mesh = match ext.as_deref() {
        Some("obj") => parse_obj(path)?,
        Some("ply") => parse_ply(path)?,
        _ => return Err(SceneIoError::UnsupportedFormat(path.display().to_string())),
    };
    if mesh.triangles.is_empty() {
        return Err(SceneIoError::MeshParse(format!(
            "{}: no triangles",
            path.display()
        )));
    }
    if mesh.normals.is_empty() {
        mesh.compute_normals();
    }
    mesh.validate()?;
    Ok(mesh)
}

fn parse_obj(path: &Path) -> Result<ObjectMesh, SceneIoError> {
    let text = fs::read_to_string(path)
        .map_err(|e| SceneIoError::Io(path.display().to_string(), e.to_string()))?;
    let parse_err = |line_no: usize, msg: &str| {
        SceneIoError::MeshParse(format!("{}:{}: {}", path.display(), line_no + 1, msg))
    };

    let mut positions: Vec<Vector3<f64>> = Vec::new();
    let mut file_normals: Vec<Vector3<f64>> = Vec::new();
    let mut file_uvs: Vec<[f32; 2]> = Vec::new();
    let mut materials: Vec<Material> = vec![Material::default()];
    let mut material_ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut current_material = 0usize;

    // OBJ indexes position/uv/normal independently; flatten to one index
    // space keyed by the (v, vt, vn) triple.
    let mut corner_ids: BTreeMap<(usize, Option<usize>, Option<usize>), usize> = BTreeMap::new();
    let mut mesh = ObjectMesh::empty();
    mesh.materials.clear();
    let mut any_normals = false;

    for (line_no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords = parse_floats(&mut parts, 3)
                    .ok_or_else(|| parse_err(line_no, "vertex needs 3 coordinates"))?;
                positions.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("vn") => {
                let coords = parse_floats(&mut parts, 3)
                    .ok_or_else(|| parse_err(line_no, "normal needs 3 coordinates"))?;
                file_normals.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("vt") => {
                let coords = parse_floats(&mut parts, 2)
                    .ok_or_else(|| parse_err(line_no, "uv needs 2 coordinates"))?;
                file_uvs.push([coords[0] as f32, coords[1] as f32]);
            }
            Some("f") => {
                let mut corners: Vec<usize> = Vec::new();
                for token in parts {
                    let (vi, ti, ni) = parse_obj_corner(token)
                        .ok_or_else(|| parse_err(line_no, "bad face corner"))?;
                    let v = resolve_index(vi, positions.len())
                        .ok_or_else(|| parse_err(line_no, "vertex index out of range"))?;
                    let t = match ti {
                        Some(i) => Some(
                            resolve_index(i, file_uvs.len())
                                .ok_or_else(|| parse_err(line_no, "uv index out of range"))?,
                        ),
                        None => None,
                    };
                    let n = match ni {
                        Some(i) => Some(
                            resolve_index(i, file_normals.len())
                                .ok_or_else(|| parse_err(line_no, "normal index out of range"))?,
                        ),
                        None => None,
                    };
                    let key = (v, t, n);
                    let id = *corner_ids.entry(key).or_insert_with(|| {
                        mesh.vertices.push(positions[v]);
                        mesh.uvs.push(t.map(|i| file_uvs[i]).unwrap_or([0.0, 0.0]));
                        if let Some(i) = n {
                            any_normals = true;
                            mesh.normals.push(file_normals[i]);
                        } else {
                            mesh.normals.push(Vector3::zeros());
                        }
                        mesh.vertices.len() - 1
                    });
                    corners.push(id);
                }
                if corners.len() < 3 {
                    return Err(parse_err(line_no, "face needs at least 3 corners"));
                }
                // Fan triangulation for polygons.
                for i in 1..corners.len() - 1 {
                    mesh.triangles.push(TriangleIndices {
                        vertices: [corners[0], corners[i], corners[i + 1]],
                        material: current_material,
                    });
                }
            }
            Some("mtllib") => {
                if let Some(name) = parts.next() {
                    let mtl_path = path.parent().unwrap_or(Path::new(".")).join(name);
                    if mtl_path.exists() {
                        parse_mtl(&mtl_path, &mut materials, &mut material_ids)?;
                    }
                }
            }
            Some("usemtl") => {
                if let Some(name) = parts.next() {
                    current_material = *material_ids.get(name).unwrap_or(&0);
                }
            }
            _ => {}
        }
    }

    mesh.materials = materials;
    if !any_normals {
        mesh.normals.clear();
    } else {
        // Mixed files: fill any missing normals from geometry.
        if mesh.normals.iter().any(|n| n.norm() < 0.5) {
            let computed = {
                let mut tmp = mesh.clone();
                tmp.compute_normals();
                tmp.normals
            };
            for (n, c) in mesh.normals.iter_mut().zip(computed) {
                if n.norm() < 0.5 {
                    *n = c;
                }
            }
        }
    }
    Ok(mesh)
}

fn parse_floats(parts: &mut std::str::SplitWhitespace, n: usize) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(parts.next()?.parse().ok()?);
    }
    Some(out)
}

/// OBJ face corner `v`, `v/t`, `v//n`, or `v/t/n` (1-based, negatives
/// count from the end).
fn parse_obj_corner(token: &str) -> Option<(i64, Option<i64>, Option<i64>)> {
    let mut it = token.split('/');
    let v = it.next()?.parse().ok()?;
    let t = match it.next() {
        Some("") | None => None,
        Some(s) => Some(s.parse().ok()?),
    };
    let n = match it.next() {
        Some("") | None => None,
        Some(s) => Some(s.parse().ok()?),
    };
    Some((v, t, n))
}

fn resolve_index(idx: i64, len: usize) -> Option<usize> {
    if idx > 0 {
        let i = (idx - 1) as usize;
        (i < len).then_some(i)
    } else if idx < 0 {
        let back = (-idx) as usize;
        (back <= len).then(|| len - back)
    } else {
        None
    }
}

fn parse_mtl(
    path: &Path,
    materials: &mut Vec<Material>,
    ids: &mut BTreeMap<String, usize>,
) -> Result<(), SceneIoError> {
    let text = fs::read_to_string(path)
        .map_err(|e| SceneIoError::Io(path.display().to_string(), e.to_string()))?;
    let mut current: Option<usize> = None;
    for raw in text.lines() {
        let line = raw.trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("newmtl") => {
                if let Some(name) = parts.next() {
                    materials.push(Material {
                        name: name.to_string(),
                        ..Material::default()
                    });
                    ids.insert(name.to_string(), materials.len() - 1);
                    current = Some(materials.len() - 1);
                }
            }
            Some("Kd") => {
                if let (Some(i), Some(vals)) = (current, parse_floats(&mut parts, 3)) {
                    materials[i].albedo = [vals[0] as f32, vals[1] as f32, vals[2] as f32];
                }
            }
            Some("map_Kd") => {
                if let (Some(i), Some(name)) = (current, parts.next()) {
                    let tex_path = path.parent().unwrap_or(Path::new(".")).join(name);
                    materials[i].texture = Some(raster::load_image_linear(&tex_path, 2.2)?);
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn parse_ply(path: &Path) -> Result<ObjectMesh, SceneIoError> {
    let text = fs::read_to_string(path)
        .map_err(|e| SceneIoError::Io(path.display().to_string(), e.to_string()))?;
    let perr = |msg: &str| SceneIoError::MeshParse(format!("{}: {}", path.display(), msg));

    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(perr("missing ply magic"));
    }

    #[derive(Clone)]
    struct ElementDecl {
        name: String,
        count: usize,
        properties: Vec<String>,
    }
    let mut elements: Vec<ElementDecl> = Vec::new();
    for line in lines.by_ref() {
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("format") => {
                if parts.next() != Some("ascii") {
                    return Err(perr("only ascii PLY is supported"));
                }
            }
            Some("element") => {
                let name = parts.next().ok_or_else(|| perr("element name"))?;
                let count: usize = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| perr("element count"))?;
                elements.push(ElementDecl {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                if let Some(el) = elements.last_mut() {
                    let prop_name = parts.last().unwrap_or("");
                    el.properties.push(prop_name.to_string());
                }
            }
            _ => {}
        }
    }

    let mut mesh = ObjectMesh::empty();
    let mut has_normals = false;
    for el in &elements {
        if el.name == "vertex" {
            has_normals = el.properties.iter().any(|p| p == "nx");
        }
    }
    for el in &elements {
        for _ in 0..el.count {
            let line = lines.next().ok_or_else(|| perr("unexpected end of file"))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| perr("bad number")))
                .collect::<Result<_, _>>()?;
            match el.name.as_str() {
                "vertex" => {
                    let mut x = 0.0;
                    let mut y = 0.0;
                    let mut z = 0.0;
                    let mut n = Vector3::zeros();
                    for (p, v) in el.properties.iter().zip(&vals) {
                        match p.as_str() {
                            "x" => x = *v,
                            "y" => y = *v,
                            "z" => z = *v,
                            "nx" => n.x = *v,
                            "ny" => n.y = *v,
                            "nz" => n.z = *v,
                            _ => {}
                        }
                    }
                    mesh.vertices.push(Vector3::new(x, y, z));
                    mesh.uvs.push([0.0, 0.0]);
                    if has_normals {
                        mesh.normals.push(n);
                    }
                }
                "face" => {
                    let count = *vals.first().ok_or_else(|| perr("empty face"))? as usize;
                    if vals.len() != count + 1 || count < 3 {
                        return Err(perr("bad face list"));
                    }
                    let idx: Vec<usize> = vals[1..].iter().map(|v| *v as usize).collect();
                    for &i in &idx {
                        if i >= mesh.vertices.len() {
                            return Err(perr("face index out of range"));
                        }
                    }
                    for i in 1..count - 1 {
                        mesh.triangles.push(TriangleIndices {
                            vertices: [idx[0], idx[i], idx[i + 1]],
                            material: 0,
                        });
                    }
                }
                _ => {}
            }
        }
    }
    if !has_normals {
        mesh.normals.clear();
    }
    Ok(mesh)
}

/// Write OBJ with positions, uvs, normals; material assignments are not
/// persisted (single default material on reload).
pub fn save_mesh_obj(path: &Path, mesh: &ObjectMesh) -> Result<(), SceneIoError> {
    use std::fmt::Write as _;
    let mut out = String::new();
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for uv in &mesh.uvs {
        writeln!(out, "vt {} {}", uv[0], uv[1]).unwrap();
    }
    for n in &mesh.normals {
        writeln!(out, "vn {} {} {}", n.x, n.y, n.z).unwrap();
    }
    for t in &mesh.triangles {
        let [a, b, c] = t.vertices;
        writeln!(
            out,
            "f {}/{}/{} {}/{}/{} {}/{}/{}",
            a + 1,
            a + 1,
            a + 1,
            b + 1,
            b + 1,
            b + 1,
            c + 1,
            c + 1,
            c + 1
        )
        .unwrap();
    }
    fs::write(path, out).map_err(|e| SceneIoError::Io(path.display().to_string(), e.to_string()))
}

/// Axis-aligned unit-size cube centered at the origin, used by demos and
/// tests.
pub fn unit_cube() -> ObjectMesh {
    let mut mesh = ObjectMesh::empty();
    let h = 0.5;
    for &z in &[-h, h] {
        for &y in &[-h, h] {
            for &x in &[-h, h] {
                mesh.vertices.push(Vector3::new(x, y, z));
                mesh.uvs.push([0.0, 0.0]);
            }
        }
    }
    // Each face as two triangles, outward winding.
    let faces: [[usize; 4]; 6] = [
        [0, 2, 3, 1], // z = -h
        [4, 5, 7, 6], // z = +h
        [0, 1, 5, 4], // y = -h
        [2, 6, 7, 3], // y = +h
        [0, 4, 6, 2], // x = -h
        [1, 3, 7, 5], // x = +h
    ];
    for f in faces {
        mesh.triangles.push(TriangleIndices {
            vertices: [f[0], f[1], f[2]],
            material: 0,
        });
        mesh.triangles.push(TriangleIndices {
            vertices: [f[0], f[2], f[3]],
            material: 0,
        });
    }
    mesh.compute_normals();
    mesh
}

/// Icosphere by midpoint subdivision of an icosahedron; radius 1.
pub fn icosphere(subdivisions: u32) -> ObjectMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut verts = vec![
        Vector3::new(-1.0, phi, 0.0),
        Vector3::new(1.0, phi, 0.0),
        Vector3::new(-1.0, -phi, 0.0),
        Vector3::new(1.0, -phi, 0.0),
        Vector3::new(0.0, -1.0, phi),
        Vector3::new(0.0, 1.0, phi),
        Vector3::new(0.0, -1.0, -phi),
        Vector3::new(0.0, 1.0, -phi),
        Vector3::new(phi, 0.0, -1.0),
        Vector3::new(phi, 0.0, 1.0),
        Vector3::new(-phi, 0.0, -1.0),
        Vector3::new(-phi, 0.0, 1.0),
    ];
    for v in &mut verts {
        *v = v.normalize();
    }
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0usize; 3];
            for i in 0..3 {
                let a = f[i];
                let b = f[(i + 1) % 3];
                let key = (a.min(b), a.max(b));
                mids[i] = *midpoint.entry(key).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                    verts.len() - 1
                });
            }
            next.push([f[0], mids[0], mids[2]]);
            next.push([f[1], mids[1], mids[0]]);
            next.push([f[2], mids[2], mids[1]]);
            next.push([mids[0], mids[1], mids[2]]);
        }
        faces = next;
    }
    let mut mesh = ObjectMesh::empty();
    mesh.vertices = verts.clone();
    mesh.uvs = vec![[0.0, 0.0]; verts.len()];
    // Exact sphere normals.
    mesh.normals = verts;
    mesh.triangles = faces
        .into_iter()
        .map(|f| TriangleIndices {
            vertices: f,
            material: 0,
        })
        .collect();
    mesh
}
