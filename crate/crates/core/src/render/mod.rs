//! Frame rasterization, the state-vector embedding, Netpbm import/export and
//! on-disk frame-pair datasets.

mod dataset;
mod embed;
pub mod pnm;

use serde::{Deserialize, Serialize};

use crate::dynsys::{bob_positions, StateVector, SystemSpec};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub use dataset::{
    build_dataset, import_frames_dir, write_dataset, Dataset, DatasetConfig, DatasetManifest, DatasetMode,
    FramePairSample, SampleRef, Split, SplitCounts, TrajectoryData, TrajectoryEntry, VectorSample,
};
pub use embed::{embed_state, StateEmbedding, EMBED_WIDTH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            channels: 1,
        }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Config {
                key: "dataset.geometry".into(),
                msg: "frame sides must be positive".into(),
            });
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Config {
                key: "dataset.geometry.channels".into(),
                msg: format!("must be 1 or 3, got {}", self.channels),
            });
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width * self.channels
    }
}

/// Image with values in `[0, 1]`, stored channel-major (`C×H×W`).
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub geometry: Geometry,
    pub pixels: Vec<f64>,
}

impl Frame {
    pub fn filled(geometry: Geometry, value: f64) -> Self {
        Self {
            geometry,
            pixels: vec![value; geometry.pixel_count()],
        }
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        let g = self.geometry;
        self.pixels[(c * g.height + y) * g.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    pub fn to_tensor(&self) -> Tensor {
        let g = self.geometry;
        Tensor::new(vec![g.channels, g.height, g.width], self.pixels.clone()).expect("frame geometry is non-empty")
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [c, h, w] = t.shape() else {
            return Err(Error::Dimension(format!(
                "frame tensor must be C×H×W, got {:?}",
                t.shape()
            )));
        };
        let geometry = Geometry {
            height: *h,
            width: *w,
            channels: *c,
        };
        geometry.validate()?;
        Ok(Self {
            geometry,
            pixels: t.data().to_vec(),
        })
    }
}

/// A rendered frame plus whether any shape had to be pulled back inside it.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub frame: Frame,
    pub clamped: bool,
}

/// Pixel-space primitives. Coverage is `clamp(½ − signed distance)`, a
/// one-pixel linear ramp across each edge.
#[derive(Clone, Copy, Debug)]
enum Shape {
    Disk {
        c: (f64, f64),
        r: f64,
    },
    Segment {
        a: (f64, f64),
        b: (f64, f64),
        half_width: f64,
    },
}

impl Shape {
    fn signed_distance(&self, p: (f64, f64)) -> f64 {
        match *self {
            Shape::Disk { c, r } => ((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt() - r,
            Shape::Segment { a, b, half_width } => {
                let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                let len2 = dx * dx + dy * dy;
                let t = if len2 == 0.0 {
                    0.0
                } else {
                    (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
                };
                let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
                ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt() - half_width
            }
        }
    }

    /// Exact membership test, used by supersampling checks.
    #[cfg(test)]
    fn contains(&self, p: (f64, f64)) -> bool {
        self.signed_distance(p) <= 0.0
    }
}

/// Layout shared by the renderer and its tests: pixel-space shapes for a
/// mechanical state.
fn scene(spec: &SystemSpec, state: &StateVector, g: Geometry) -> Result<(Vec<Shape>, bool)> {
    let side = g.height.min(g.width) as f64;
    let bob_r = 0.08 * side;
    let half_width = (0.025 * side).max(0.5);
    let scale = (side / 2.0 - bob_r - 1.0) / spec.reach();
    let pivot = (g.width as f64 / 2.0, g.height as f64 / 2.0);
    let mut clamped = false;
    let mut to_pixel = |(x, y): (f64, f64)| {
        let px = pivot.0 + x * scale;
        let py = pivot.1 - y * scale;
        let cx = px.clamp(0.0, g.width as f64);
        let cy = py.clamp(0.0, g.height as f64);
        clamped |= cx != px || cy != py;
        (cx, cy)
    };
    let bobs: Vec<(f64, f64)> = bob_positions(spec, state)?.into_iter().map(&mut to_pixel).collect();
    let mut shapes = Vec::new();
    let mut prev = pivot;
    for &b in &bobs {
        shapes.push(Shape::Segment { a: prev, b, half_width });
        prev = b;
    }
    shapes.extend(bobs.iter().map(|&c| Shape::Disk { c, r: bob_r }));
    Ok((shapes, clamped))
}

/// Dark arms and bobs on a white background, pivot at the frame centre.
pub fn rasterize(spec: &SystemSpec, state: &StateVector, geometry: Geometry) -> Result<Raster> {
    geometry.validate()?;
    if !spec.kind().is_mechanical() {
        return Err(Error::Unsupported(
            "reaction-diffusion frames come from rasterize_field".into(),
        ));
    }
    let (shapes, clamped) = scene(spec, state, geometry)?;
    let Geometry {
        height,
        width,
        channels,
    } = geometry;
    let mut frame = Frame::filled(geometry, 1.0);
    for y in 0..height {
        for x in 0..width {
            let p = (x as f64 + 0.5, y as f64 + 0.5);
            let coverage = shapes
                .iter()
                .map(|s| (0.5 - s.signed_distance(p)).clamp(0.0, 1.0))
                .fold(0.0, f64::max);
            for c in 0..channels {
                frame.pixels[(c * height + y) * width + x] = 1.0 - coverage;
            }
        }
    }
    if clamped {
        log::warn!("state extends outside the frame; shapes clamped to the border");
    }
    Ok(Raster { frame, clamped })
}

/// Diverging colormap sampled at `t = (u + 1) / 2 ∈ {0, ¼, ½, ¾, 1}`.
pub const COLORMAP: [[f64; 3]; 5] = [
    [0.10, 0.25, 0.80],
    [0.40, 0.55, 0.85],
    [0.50, 0.50, 0.50],
    [0.85, 0.50, 0.40],
    [0.80, 0.15, 0.10],
];

pub fn colormap(u: f64) -> [f64; 3] {
    let t = ((u.clamp(-1.0, 1.0) + 1.0) / 2.0) * (COLORMAP.len() - 1) as f64;
    let i = (t.floor() as usize).min(COLORMAP.len() - 2);
    let f = t - i as f64;
    let (a, b) = (COLORMAP[i], COLORMAP[i + 1]);
    [0, 1, 2].map(|c| a[c] * (1.0 - f) + b[c] * f)
}

/// Renders the `u` field of a reaction–diffusion state. Values are clamped to
/// `[−1, 1]`; one channel gives luminance `(u + 1) / 2`, three channels the
/// diverging colormap. The grid is resampled to the frame by nearest cell.
pub fn rasterize_field(u: &[f64], v: &[f64], grid: usize, geometry: Geometry) -> Result<Frame> {
    geometry.validate()?;
    if grid == 0 || u.len() != grid * grid || v.len() != u.len() {
        return Err(Error::Contract(format!("field grids must both be {grid}×{grid}")));
    }
    let Geometry {
        height,
        width,
        channels,
    } = geometry;
    let mut frame = Frame::filled(geometry, 0.0);
    for y in 0..height {
        let gi = y * grid / height;
        for x in 0..width {
            let gj = x * grid / width;
            let val = u[gi * grid + gj];
            let colors = if channels == 1 {
                let l = (val.clamp(-1.0, 1.0) + 1.0) / 2.0;
                [l, l, l]
            } else {
                colormap(val)
            };
            for c in 0..channels {
                frame.pixels[(c * height + y) * width + x] = colors[c];
            }
        }
    }
    Ok(frame)
}

/// Frame for any system: pendulums through `rasterize`, fields through
/// `rasterize_field`.
pub fn render_state(spec: &SystemSpec, state: &StateVector, geometry: Geometry) -> Result<Raster> {
    match *spec {
        SystemSpec::ReactionDiffusion { grid, .. } => {
            let (u, v) = state.values().split_at(grid * grid);
            Ok(Raster {
                frame: rasterize_field(u, v, grid, geometry)?,
                clamped: false,
            })
        }
        _ => rasterize(spec, state, geometry),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::SystemKind;

    #[test]
    fn single_pendulum_at_rest_hangs_below_pivot() {
        let spec = SystemKind::SinglePendulum.default_spec();
        let g = Geometry::default();
        let r = rasterize(&spec, &StateVector::new(vec![0.0, 0.0]), g).unwrap();
        assert!(!r.clamped);
        let (shapes, _) = scene(&spec, &StateVector::new(vec![0.0, 0.0]), g).unwrap();
        let Shape::Disk { c, .. } = shapes[1] else { panic!() };
        assert!((c.0 - 16.0).abs() < 1e-12);
        assert!(c.1 > 16.0);
        assert!(r.frame.get(0, c.1 as usize, c.0 as usize) < 0.5);
        assert_eq!(r.frame.get(0, 1, 1), 1.0);
    }

    #[test]
    fn rasterize_is_deterministic() {
        let spec = SystemKind::DoublePendulum.default_spec();
        let s = StateVector::new(vec![0.7, -1.3, 0.0, 0.0]);
        let g = Geometry::default();
        assert_eq!(rasterize(&spec, &s, g).unwrap(), rasterize(&spec, &s, g).unwrap());
    }

    fn supersampled_mean(spec: &SystemSpec, s: &StateVector, g: Geometry, n: usize) -> f64 {
        let (shapes, _) = scene(spec, s, g).unwrap();
        let mut total = 0.0;
        for y in 0..g.height {
            for x in 0..g.width {
                let mut inside = 0;
                for sy in 0..n {
                    for sx in 0..n {
                        let p = (
                            x as f64 + (sx as f64 + 0.5) / n as f64,
                            y as f64 + (sy as f64 + 0.5) / n as f64,
                        );
                        if shapes.iter().any(|s| s.contains(p)) {
                            inside += 1;
                        }
                    }
                }
                total += 1.0 - inside as f64 / (n * n) as f64;
            }
        }
        total / (g.height * g.width) as f64
    }

    #[test]
    fn matches_supersampled_oracle() {
        let mut rng = crate::numcore::Rng::new(8);
        for kind in [
            SystemKind::SinglePendulum,
            SystemKind::DoublePendulum,
            SystemKind::ElasticPendulum,
        ] {
            let spec = kind.default_spec();
            for _ in 0..5 {
                let s = crate::dynsys::sample_initial_conditions(&spec, &mut rng);
                for g in [
                    Geometry::default(),
                    Geometry {
                        height: 64,
                        width: 48,
                        channels: 3,
                    },
                ] {
                    let fast = rasterize(&spec, &s, g).unwrap().frame.mean();
                    let oracle = supersampled_mean(&spec, &s, g, 4);
                    assert!((fast - oracle).abs() < 0.01, "{kind}: {fast} vs {oracle}");
                }
            }
        }
    }

    #[test]
    fn out_of_frame_state_is_clamped() {
        let spec = SystemSpec::SinglePendulum {
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
        };
        let stretched = SystemSpec::ElasticPendulum {
            mass1: 1.0,
            mass2: 1.0,
            rest_length: 1.0,
            length2: 1.0,
            stiffness: 100.0,
            gravity: 9.81,
        };
        let g = Geometry::default();
        assert!(!rasterize(&spec, &StateVector::new(vec![3.0, 0.0]), g).unwrap().clamped);
        let far = StateVector::new(vec![0.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(rasterize(&stretched, &far, g).unwrap().clamped);
    }

    #[test]
    fn field_frames() {
        let g = Geometry::default();
        let zeros = vec![0.0; 32 * 32];
        let ones = vec![1.0; 32 * 32];
        let f = rasterize_field(&zeros, &zeros, 32, g).unwrap();
        assert!(f.pixels.iter().all(|&p| p == 0.5));
        let f = rasterize_field(&ones, &zeros, 32, g).unwrap();
        assert!(f.pixels.iter().all(|&p| p == 1.0));
        let rgb = Geometry { channels: 3, ..g };
        let f = rasterize_field(&zeros, &zeros, 32, rgb).unwrap();
        assert!(f.pixels.iter().all(|&p| p == 0.5));
        let f = rasterize_field(&ones, &zeros, 32, rgb).unwrap();
        assert_eq!([f.get(0, 3, 3), f.get(1, 3, 3), f.get(2, 3, 3)], COLORMAP[4]);
    }

    #[test]
    fn colormap_table_lookup() {
        let mut u = vec![0.0; 16];
        u[5] = -0.5;
        let rgb = Geometry {
            height: 4,
            width: 4,
            channels: 3,
        };
        let f = rasterize_field(&u, &vec![0.0; 16], 4, rgb).unwrap();
        assert_eq!([f.get(0, 1, 1), f.get(1, 1, 1), f.get(2, 1, 1)], COLORMAP[1]);
    }
}
