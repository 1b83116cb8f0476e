//! All-pairs feature correlation, pooled pyramids and the local-grid lookup.

use std::io::{Read, Write};

use nalgebra::{Vector2, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CorrespondenceField, Intrinsics, RigidTransform};
use crate::scene::DepthMap;

pub const DEFAULT_LEVELS: usize = 4;
pub const DEFAULT_RADIUS: usize = 3;

const DUMP_MAGIC: &[u8; 8] = b"CORRPYR1";

/// Row-major grid of `dim`-dimensional feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * dim {
            return Err(Error::shape(
                format!("{width}×{height}×{dim}"),
                format!("{} values", data.len()),
            ));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("feature map holds non-finite values".into()));
        }
        Ok(Self {
            width,
            height,
            dim,
            data,
        })
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sinusoidal encoding of object-frame surface coordinates seen by a view.
///
/// Each pixel with depth is lifted to 3D, mapped into the object frame with
/// `pose⁻¹`, and encoded as `sin`/`cos` of every coordinate at each of
/// `frequencies`. Pixels without surface get zero features.
pub fn positional_features(
    depth: &DepthMap,
    k: &Intrinsics,
    pose: &RigidTransform,
    frequencies: &[f64],
) -> Result<FeatureMap> {
    depth.check_shape(k)?;
    let inv = pose.inverse();
    let dim = 6 * frequencies.len();
    let mut data = vec![0.0; depth.width * depth.height * dim];
    for v in 0..depth.height {
        for u in 0..depth.width {
            let i = v * depth.width + u;
            let z = depth.values[i];
            if z <= 0.0 {
                continue;
            }
            let n = k.normalize(u as f64, v as f64);
            let x = inv.transform_point(&Vector3::new(n.x * z, n.y * z, z));
            let out = &mut data[i * dim..(i + 1) * dim];
            for (j, f) in frequencies.iter().enumerate() {
                for c in 0..3 {
                    out[6 * j + 2 * c] = (f * x[c]).sin();
                    out[6 * j + 2 * c + 1] = (f * x[c]).cos();
                }
            }
        }
    }
    FeatureMap::new(depth.width, depth.height, dim, data)
}

/// One correlation volume: for each of `n` source pixels a `width × height`
/// slice over the target image.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationLevel {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl CorrelationLevel {
    pub fn slice(&self, source: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[source * n..(source + 1) * n]
    }

    /// Bilinear sample at target pixel `(x, y)`; corners outside the grid
    /// contribute zero.
    pub fn sample(&self, source: usize, x: f64, y: f64) -> f64 {
        let s = self.slice(source);
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let mut acc = 0.0;
        for (dy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                let (xi, yi) = (x0 as i64 + dx, y0 as i64 + dy);
                if xi < 0 || yi < 0 || xi >= self.width as i64 || yi >= self.height as i64 {
                    continue;
                }
                acc += wx * wy * s[yi as usize * self.width + xi as usize];
            }
        }
        acc
    }
}

/// Pooled all-pairs correlation between a source and a target feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationPyramid {
    /// Source grid size.
    pub width: usize,
    pub height: usize,
    pub levels: Vec<CorrelationLevel>,
}

/// Level-0 entries are `⟨f1[u], f2[v]⟩`; each further level averages 2×2
/// blocks over the target dimensions (odd trailing rows/columns dropped).
pub fn build_correlation(f1: &FeatureMap, f2: &FeatureMap, levels: usize) -> Result<CorrelationPyramid> {
    if (f1.width, f1.height, f1.dim) != (f2.width, f2.height, f2.dim) {
        return Err(Error::shape(
            format!("{}×{}×{}", f1.width, f1.height, f1.dim),
            format!("{}×{}×{}", f2.width, f2.height, f2.dim),
        ));
    }
    if levels == 0 {
        return Err(Error::InvalidArgument("pyramid needs at least one level".into()));
    }
    let (n1, n2) = (f1.len(), f2.len());
    let mut data = Vec::with_capacity(n1 * n2);
    for a in 0..n1 {
        let fa = f1.pixel(a);
        for b in 0..n2 {
            data.push(fa.iter().zip(f2.pixel(b)).map(|(x, y)| x * y).sum());
        }
    }
    let mut out = vec![CorrelationLevel {
        width: f2.width,
        height: f2.height,
        data,
    }];
    for _ in 1..levels {
        let next = pool(out.last().expect("nonempty"), n1);
        out.push(next);
    }
    Ok(CorrelationPyramid {
        width: f1.width,
        height: f1.height,
        levels: out,
    })
}

fn pool(prev: &CorrelationLevel, sources: usize) -> CorrelationLevel {
    let (w, h) = (prev.width / 2, prev.height / 2);
    let mut data = Vec::with_capacity(sources * w * h);
    for s in 0..sources {
        let src = prev.slice(s);
        for y in 0..h {
            for x in 0..w {
                let at = |dx: usize, dy: usize| src[(2 * y + dy) * prev.width + 2 * x + dx];
                data.push(0.25 * (at(0, 0) + at(1, 0) + at(0, 1) + at(1, 1)));
            }
        }
    }
    CorrelationLevel {
        width: w,
        height: h,
        data,
    }
}

impl CorrelationPyramid {
    /// Features per pixel for radius `r`.
    pub fn feature_len(&self, r: usize) -> usize {
        self.levels.len() * (2 * r + 1) * (2 * r + 1)
    }

    /// Samples the `(2r+1)²` grid around `coords[i] / 2^ℓ` on every level ℓ,
    /// for each source pixel `i`. Layout per pixel: level, then row offset,
    /// then column offset. `None` coordinates produce zeros.
    pub fn lookup_pixels(&self, coords: &[Option<Vector2<f64>>], r: usize) -> Result<Vec<f64>> {
        let n = self.width * self.height;
        if coords.len() != n {
            return Err(Error::shape(format!("{n} coordinates"), coords.len()));
        }
        let len = self.feature_len(r);
        let ri = r as i64;
        let mut out = vec![0.0; n * len];
        for (i, c) in coords.iter().enumerate() {
            let Some(c) = c else { continue };
            let mut k = i * len;
            for (l, level) in self.levels.iter().enumerate() {
                let scale = 0.5f64.powi(l as i32);
                let (cx, cy) = (c.x * scale, c.y * scale);
                for dy in -ri..=ri {
                    for dx in -ri..=ri {
                        out[k] = level.sample(i, cx + dx as f64, cy + dy as f64);
                        k += 1;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Lookup at a correspondence field expressed in normalized coordinates
    /// of the target view whose grid camera is `k`.
    pub fn lookup(&self, coords: &CorrespondenceField, k: &Intrinsics, r: usize) -> Result<Vec<f64>> {
        coords.same_shape(self.width, self.height)?;
        self.lookup_pixels(&coords.to_pixels(k), r)
    }

    /// Writes `magic, levels, (src_w, src_h, tgt_w, tgt_h) per level` as
    /// little-endian `u32`, followed by each level's entries as `f32`.
    pub fn dump(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&(self.levels.len() as u32).to_le_bytes())?;
        for l in &self.levels {
            for d in [self.width, self.height, l.width, l.height] {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
        }
        for l in &self.levels {
            for &x in &l.data {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a dump back, with entries widened from `f32`.
    pub fn read_dump(mut r: impl Read) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("correlation dump: {m}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != DUMP_MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32s = |n: usize| -> Result<Vec<usize>> {
            let mut buf = vec![0u8; 4 * n];
            r.read_exact(&mut buf).map_err(|_| bad("truncated header"))?;
            Ok(buf
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
                .collect())
        };
        let count = u32s(1)?[0];
        let shapes = u32s(4 * count)?;
        let (width, height) = (
            shapes.first().copied().unwrap_or(0),
            shapes.get(1).copied().unwrap_or(0),
        );
        let mut levels = Vec::with_capacity(count);
        for s in shapes.chunks_exact(4) {
            let n = s[0] * s[1] * s[2] * s[3];
            let mut buf = vec![0u8; 4 * n];
            r.read_exact(&mut buf).map_err(|_| bad("truncated data"))?;
            levels.push(CorrelationLevel {
                width: s[2],
                height: s[3],
                data: buf
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                    .collect(),
            });
        }
        Ok(Self { width, height, levels })
    }
}

/// Correlation lookups computed on demand from features, without storing
/// the volume.
///
/// Average pooling over the target commutes with the dot product, so level
/// ℓ is the correlation against target features pooled `2^ℓ × 2^ℓ` (same
/// floor rule as [`build_correlation`]). Results agree with the stored
/// pyramid up to rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct OnDemandCorrelation {
    source: FeatureMap,
    targets: Vec<FeatureMap>,
}

impl OnDemandCorrelation {
    pub fn new(f1: FeatureMap, f2: FeatureMap, levels: usize) -> Result<Self> {
        if (f1.width, f1.height, f1.dim) != (f2.width, f2.height, f2.dim) {
            return Err(Error::shape(
                format!("{}×{}×{}", f1.width, f1.height, f1.dim),
                format!("{}×{}×{}", f2.width, f2.height, f2.dim),
            ));
        }
        if levels == 0 {
            return Err(Error::InvalidArgument("pyramid needs at least one level".into()));
        }
        let mut targets = vec![f2];
        for _ in 1..levels {
            let prev = targets.last().expect("nonempty");
            let (w, h, d) = (prev.width / 2, prev.height / 2, prev.dim);
            let mut data = vec![0.0; w * h * d];
            for y in 0..h {
                for x in 0..w {
                    let out = &mut data[(y * w + x) * d..(y * w + x + 1) * d];
                    for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        for (o, f) in out.iter_mut().zip(prev.pixel((2 * y + dy) * prev.width + 2 * x + dx)) {
                            *o += 0.25 * f;
                        }
                    }
                }
            }
            targets.push(FeatureMap::new(w, h, d, data)?);
        }
        Ok(Self { source: f1, targets })
    }

    pub fn feature_len(&self, r: usize) -> usize {
        self.targets.len() * (2 * r + 1) * (2 * r + 1)
    }

    /// Same layout and padding as [`CorrelationPyramid::lookup_pixels`].
    pub fn lookup_pixels(&self, coords: &[Option<Vector2<f64>>], r: usize) -> Result<Vec<f64>> {
        let n = self.source.len();
        if coords.len() != n {
            return Err(Error::shape(format!("{n} coordinates"), coords.len()));
        }
        let len = self.feature_len(r);
        let ri = r as i64;
        let mut out = vec![0.0; n * len];
        for (i, c) in coords.iter().enumerate() {
            let Some(c) = c else { continue };
            let fs = self.source.pixel(i);
            let mut k = i * len;
            for (l, t) in self.targets.iter().enumerate() {
                let scale = 0.5f64.powi(l as i32);
                let (cx, cy) = (c.x * scale, c.y * scale);
                let dot = |xi: i64, yi: i64| -> f64 {
                    if xi < 0 || yi < 0 || xi >= t.width as i64 || yi >= t.height as i64 {
                        return 0.0;
                    }
                    fs.iter()
                        .zip(t.pixel(yi as usize * t.width + xi as usize))
                        .map(|(a, b)| a * b)
                        .sum()
                };
                for dy in -ri..=ri {
                    for dx in -ri..=ri {
                        let (x, y) = (cx + dx as f64, cy + dy as f64);
                        let (x0, y0) = (x.floor(), y.floor());
                        let (fx, fy) = (x - x0, y - y0);
                        let (x0, y0) = (x0 as i64, y0 as i64);
                        out[k] = (1.0 - fy) * ((1.0 - fx) * dot(x0, y0) + fx * dot(x0 + 1, y0))
                            + fy * ((1.0 - fx) * dot(x0, y0 + 1) + fx * dot(x0 + 1, y0 + 1));
                        k += 1;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn lookup(&self, coords: &CorrespondenceField, k: &Intrinsics, r: usize) -> Result<Vec<f64>> {
        coords.same_shape(self.source.width, self.source.height)?;
        self.lookup_pixels(&coords.to_pixels(k), r)
    }
}
