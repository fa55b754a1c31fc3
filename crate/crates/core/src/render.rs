//! Deterministic z-buffer rasterizer with PNG output.
//!
//! Arithmetic order, per triangle and pixel:
//! 1. camera basis `f = normalize(look_at - eye)`, `r = normalize(f x up)`,
//!    `u = r x f`; camera coordinates `(d.r, d.u, d.f)` with `d = p - eye`;
//! 2. screen `x = w/2 + focal * xc / zc`, `y = h/2 - focal * yc / zc` with
//!    `focal = (h/2) / tan(fov/2)`; triangles with a vertex at `zc <= 1e-9`
//!    are skipped (no clipping);
//! 3. pixel centres `(px + 0.5, py + 0.5)` are covered when all three edge
//!    functions, oriented by the signed area, are `>= 0`;
//! 4. depth is interpolated perspective-correctly as `1 / sum(b_i / z_i)` and
//!    a fragment wins only with a strictly smaller depth, so ties keep the
//!    lower mesh id and then the lower face id;
//! 5. shade `s = |n . normalize(eye - centroid)|` per face and channel value
//!    `floor(color * s + 0.5)`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::TriMesh;
use crate::hoiopt::{ComposedHand, HoiScene};
use crate::Vec3;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("zero-area viewport {width}x{height}")]
    ZeroViewport { width: u32, height: u32 },
    #[error("invalid camera: {0}")]
    Camera(String),
    #[error("png encoding: {0}")]
    Encode(#[from] png::EncodingError),
    #[error("png decoding: {0}")]
    Decode(#[from] png::DecodingError),
    #[error("unsupported png layout: {0}")]
    Layout(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RenderError> = std::result::Result<T, E>;

pub const DEFAULT_RESOLUTION: u32 = 512;
pub const DEFAULT_FOV_DEGREES: f64 = 40.0;
pub const BACKGROUND: [u8; 3] = [255, 255, 255];
pub const HAND_COLOR: [u8; 3] = [224, 172, 140];
pub const OBJECT_COLOR: [u8; 3] = [110, 140, 200];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub eye: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Vertical field of view in degrees.
    pub fov_degrees: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::ZeroViewport { width: self.width, height: self.height });
        }
        if (self.look_at - self.eye).norm() == 0.0 {
            return Err(RenderError::Camera("eye coincides with look_at".into()));
        }
        if !(self.fov_degrees > 0.0 && self.fov_degrees < 180.0) {
            return Err(RenderError::Camera(format!("field of view {} outside (0, 180)", self.fov_degrees)));
        }
        let f = self.look_at - self.eye;
        if f.cross(&self.up).norm() == 0.0 {
            return Err(RenderError::Camera("up is parallel to the viewing direction".into()));
        }
        Ok(())
    }
}

/// Row-major RGB8, top-left origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn filled(width: u32, height: u32, color: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        Self { width, height, pixels: color.iter().copied().cycle().take(3 * n).collect() }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

struct Projector {
    eye: Vec3,
    right: Vec3,
    up: Vec3,
    forward: Vec3,
    focal: f64,
    half_w: f64,
    half_h: f64,
}

impl Projector {
    fn new(c: &Camera) -> Self {
        let forward = (c.look_at - c.eye).normalize();
        let right = forward.cross(&c.up).normalize();
        let up = right.cross(&forward);
        let half_h = c.height as f64 / 2.0;
        Self {
            eye: c.eye,
            right,
            up,
            forward,
            focal: half_h / (c.fov_degrees.to_radians() / 2.0).tan(),
            half_w: c.width as f64 / 2.0,
            half_h,
        }
    }

    /// Screen x, screen y, camera depth.
    fn project(&self, p: &Vec3) -> (f64, f64, f64) {
        let d = p - self.eye;
        let (xc, yc, zc) = (d.dot(&self.right), d.dot(&self.up), d.dot(&self.forward));
        (self.half_w + self.focal * xc / zc, self.half_h - self.focal * yc / zc, zc)
    }
}

/// Draws the meshes in order over a white background.
pub fn rasterize(meshes: &[(&TriMesh, [u8; 3])], camera: &Camera) -> Result<Image> {
    camera.validate()?;
    let (w, h) = (camera.width as usize, camera.height as usize);
    let mut image = Image::filled(camera.width, camera.height, BACKGROUND);
    let mut depth = vec![f64::INFINITY; w * h];
    let proj = Projector::new(camera);

    for (mesh, color) in meshes {
        for f in &mesh.faces {
            let [a, b, c] = f.map(|i| mesh.vertices[i]);
            let pa = proj.project(&a);
            let pb = proj.project(&b);
            let pc = proj.project(&c);
            if pa.2 <= 1e-9 || pb.2 <= 1e-9 || pc.2 <= 1e-9 {
                continue;
            }
            let area = (pb.0 - pa.0) * (pc.1 - pa.1) - (pb.1 - pa.1) * (pc.0 - pa.0);
            if area == 0.0 || !area.is_finite() {
                continue;
            }
            let n = (b - a).cross(&(c - a));
            let view = camera.eye - (a + b + c) / 3.0;
            let shade = if n.norm() > 0.0 && view.norm() > 0.0 { n.normalize().dot(&view.normalize()).abs() } else { 0.0 };
            let rgb = color.map(|ch| (ch as f64 * shade + 0.5).floor().clamp(0.0, 255.0) as u8);

            let x0 = pa.0.min(pb.0).min(pc.0).floor().max(0.0) as usize;
            let x1 = (pa.0.max(pb.0).max(pc.0).ceil().min(w as f64)).max(0.0) as usize;
            let y0 = pa.1.min(pb.1).min(pc.1).floor().max(0.0) as usize;
            let y1 = (pa.1.max(pb.1).max(pc.1).ceil().min(h as f64)).max(0.0) as usize;
            let edge = |p: (f64, f64, f64), q: (f64, f64, f64), x: f64, y: f64| (q.0 - p.0) * (y - p.1) - (q.1 - p.1) * (x - p.0);
            for py in y0..y1 {
                for px in x0..x1 {
                    let (x, y) = (px as f64 + 0.5, py as f64 + 0.5);
                    let wa = edge(pb, pc, x, y) / area;
                    let wb = edge(pc, pa, x, y) / area;
                    let wc = edge(pa, pb, x, y) / area;
                    if wa < 0.0 || wb < 0.0 || wc < 0.0 {
                        continue;
                    }
                    let z = 1.0 / (wa / pa.2 + wb / pb.2 + wc / pc.2);
                    let i = py * w + px;
                    if z < depth[i] {
                        depth[i] = z;
                        image.pixels[3 * i..3 * i + 3].copy_from_slice(&rgb);
                    }
                }
            }
        }
    }
    Ok(image)
}

pub fn encode_png(image: &Image) -> Result<Vec<u8>> {
    if image.width == 0 || image.height == 0 {
        return Err(RenderError::ZeroViewport { width: image.width, height: image.height });
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width, image.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&image.pixels)?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info()?;
    let size = reader.output_buffer_size().ok_or_else(|| RenderError::Layout("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(RenderError::Layout(format!("{:?} {:?}", info.color_type, info.bit_depth)));
    }
    buf.truncate(info.buffer_size());
    Ok(Image { width: info.width, height: info.height, pixels: buf })
}

pub fn write_png(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_png(image)?;
    let mut f = BufWriter::new(File::create(path)?);
    std::io::Write::write_all(&mut f, &bytes)?;
    Ok(())
}

/// Frames `bounds` with a 10% margin from the `(0.5, 0.5, 1)` diagonal,
/// y up. Zero-extent bounds fall back to a distance of 1.0.
pub fn default_hoi_camera(bounds: (Vec3, Vec3), width: u32, height: u32) -> Camera {
    let (lo, hi) = bounds;
    let center = (lo + hi) / 2.0;
    let radius = (hi - lo).norm() / 2.0 * 1.1;
    let fov = DEFAULT_FOV_DEGREES;
    let aspect = width.max(1) as f64 / height.max(1) as f64;
    let half_v = (fov.to_radians() / 2.0).tan();
    let half = half_v.min(half_v * aspect).atan();
    let distance = if radius > 0.0 { radius / half.sin() } else { 1.0 };
    let dir = Vec3::new(0.5, 0.5, 1.0).normalize();
    Camera { eye: center + dir * distance, look_at: center, up: Vec3::y(), fov_degrees: fov, width, height }
}

fn bounds_of(points: impl Iterator<Item = Vec3>) -> Option<(Vec3, Vec3)> {
    points.fold(None, |acc, p| match acc {
        None => Some((p, p)),
        Some((lo, hi)) => Some((lo.inf(&p), hi.sup(&p))),
    })
}

/// Hand and concise object mesh of a composed scene. The camera defaults to
/// framing both.
pub fn render_hoi(scene: &HoiScene, hand: &ComposedHand, camera: Option<&Camera>, resolution: u32) -> Result<Image> {
    let hand_mesh = TriMesh { vertices: hand.vertices.clone(), faces: scene.model.faces().to_vec() };
    let object = &scene.concise.mesh;
    let cam = match camera {
        Some(c) => *c,
        None => {
            let b = bounds_of(hand.vertices.iter().chain(object.vertices.iter()).copied())
                .unwrap_or((Vec3::zeros(), Vec3::zeros()));
            default_hoi_camera(b, resolution, resolution)
        }
    };
    rasterize(&[(object, OBJECT_COLOR), (&hand_mesh, HAND_COLOR)], &cam)
}
