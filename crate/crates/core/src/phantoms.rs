//! Synthetic conductivity phantoms and the paired train/val/test dataset.
//!
//! Glyphs are built procedurally from strokes (lines, hooks, crossings and
//! dots of mixed thickness). A phantom is `1 + m (sigma_in - 1)` where `m` is
//! the Gaussian-smoothed 0/1 mask.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrete_ops::ScalarField;
use crate::error::{Error, Result};
use crate::forward::sample_field;
use crate::geometry::GridSpec;
use crate::io::Gray;

/// Pixels next to the square's boundary where sigma must stay 1.
pub const MARGIN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Disk { center: (f64, f64), radius: f64 },
    /// Segment with round caps; `width` is the full thickness.
    Stroke { from: (f64, f64), to: (f64, f64), width: f64 },
}

impl Shape {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Disk { center, radius } => (x - center.0).hypot(y - center.1) <= radius,
            Shape::Stroke { from, to, width } => {
                let (dx, dy) = (to.0 - from.0, to.1 - from.1);
                let len2 = dx * dx + dy * dy;
                let t = if len2 > 0.0 { (((x - from.0) * dx + (y - from.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
                (x - from.0 - t * dx).hypot(y - from.1 - t * dy) <= width / 2.0
            }
        }
    }
}

/// Binary mask, one bit per node of `grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    pub grid: GridSpec<f64>,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn empty(grid: GridSpec<f64>) -> Self {
        Self { grid, bits: vec![false; grid.len()] }
    }

    pub fn from_shapes(grid: GridSpec<f64>, shapes: &[Shape]) -> Self {
        let s = grid.side();
        let mut bits = Vec::with_capacity(s * s);
        for j in 0..s {
            for i in 0..s {
                let (x, y) = (grid.x(i), grid.y(j));
                bits.push(shapes.iter().any(|sh| sh.contains(x, y)));
            }
        }
        Self { grid, bits }
    }

    /// Imports a glyph raster: pixels darker than `threshold` are set.
    /// The image is resampled (nearest pixel) onto the grid interior inside
    /// the margin band `inset` pixels wide.
    pub fn from_bitmap(grid: GridSpec<f64>, img: &Gray, threshold: u8, inset: usize) -> Result<Self> {
        let s = grid.side();
        if img.width == 0 || img.height == 0 || 2 * inset >= s {
            return Err(Error::Invalid("empty bitmap or inset too wide".into()));
        }
        let span = s - 2 * inset;
        let mut m = Self::empty(grid);
        for j in inset..s - inset {
            for i in inset..s - inset {
                let c = ((i - inset) * img.width) / span;
                let r = ((s - 1 - inset - j) * img.height) / span;
                m.bits[grid.idx(i, j)] = img.pixels[r * img.width + c] < threshold;
            }
        }
        Ok(m)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Smallest distance, in pixels, from a set bit to the outer edge of the
    /// grid; `None` for an empty mask.
    pub fn clearance(&self) -> Option<usize> {
        let s = self.grid.side();
        (0..self.bits.len())
            .filter(|&k| self.bits[k])
            .map(|k| {
                let (i, j) = (k % s, k / s);
                i.min(j).min(s - 1 - i).min(s - 1 - j)
            })
            .min()
    }
}

/// Truncation radius of the smoothing kernel for `width` pixels.
pub fn kernel_radius(width: f64) -> usize {
    (2.0 * width).ceil() as usize
}

fn gaussian_kernel(width: f64) -> Vec<f64> {
    let r = kernel_radius(width) as isize;
    let k: Vec<f64> = (-r..=r).map(|d| (-((d * d) as f64) / (2.0 * width * width)).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.into_iter().map(|v| v / sum).collect()
}

fn smooth(values: &[f64], s: usize, width: f64) -> Vec<f64> {
    if width <= 0.0 {
        return values.to_vec();
    }
    let k = gaussian_kernel(width);
    let r = (k.len() / 2) as isize;
    let pass = |src: &[f64], along_x: bool| {
        let mut out = vec![0.0; src.len()];
        for j in 0..s {
            for i in 0..s {
                let mut acc = 0.0;
                for (t, w) in k.iter().enumerate() {
                    let d = t as isize - r;
                    let (ii, jj) = if along_x { (i as isize + d, j as isize) } else { (i as isize, j as isize + d) };
                    if ii >= 0 && jj >= 0 && (ii as usize) < s && (jj as usize) < s {
                        acc += w * src[jj as usize * s + ii as usize];
                    }
                }
                out[j * s + i] = acc;
            }
        }
        out
    };
    pass(&pass(values, true), false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub id: String,
    pub sigma_true: ScalarField<f64>,
    /// The 0/1 mask before smoothing.
    pub mask: ScalarField<f64>,
    pub smooth_width: f64,
}

/// Smooths `mask` with a Gaussian of `smooth_width` pixels (truncated at
/// [`kernel_radius`]) and scales it into `[1, sigma_in]`.
pub fn rasterize_phantom(mask: &Mask, smooth_width: f64, sigma_in: f64, id: &str) -> Result<Phantom> {
    if !(smooth_width >= 0.0 && smooth_width.is_finite()) {
        return Err(Error::Invalid(format!("smooth_width must be >= 0, got {smooth_width}")));
    }
    if !(sigma_in >= 1.0 && sigma_in.is_finite()) {
        return Err(Error::Invalid(format!("inclusion conductivity must be >= 1, got {sigma_in}")));
    }
    let need = MARGIN + kernel_radius(smooth_width);
    if let Some(c) = mask.clearance() {
        if c < need {
            return Err(Error::Geometry(format!(
                "mask {id} comes within {c} pixels of the boundary; {need} are required"
            )));
        }
    }
    let s = mask.grid.side();
    let raw: Vec<f64> = mask.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let m = smooth(&raw, s, smooth_width);
    // snap kernel-sum round-off so plateaus stay exact
    let snap = |v: f64| if v < 1e-12 { 0.0 } else if v > 1.0 - 1e-12 { 1.0 } else { v };
    let sigma: Vec<f64> = m.iter().map(|&v| 1.0 + snap(v) * (sigma_in - 1.0)).collect();
    Ok(Phantom {
        id: id.to_string(),
        sigma_true: ScalarField::from_values(mask.grid, sigma)?,
        mask: ScalarField::from_values(mask.grid, raw)?,
        smooth_width,
    })
}

/// A random glyph of 2 to 5 strokes inside the part of the square left free
/// by the margin and the smoothing kernel.
pub fn random_glyph<R: Rng>(rng: &mut R, grid: GridSpec<f64>, smooth_width: f64) -> Vec<Shape> {
    let inset = (MARGIN + kernel_radius(smooth_width) + 1) as f64 * grid.h;
    let w = grid.h * (grid.n + 1) as f64;
    let lo = (grid.origin.0 + inset, grid.origin.1 + inset);
    let span = w - 2.0 * inset;
    let mut shapes = Vec::new();
    let strokes = rng.gen_range(2..=5);
    for _ in 0..strokes {
        // thickness between 1.5 and 6 pixels, kept clear of the margin
        let width = grid.h * rng.gen_range(1.5..6.0);
        let pad = width / 2.0;
        let pt = |rng: &mut R| {
            (
                lo.0 + pad + rng.gen_range(0.0..1.0) * (span - 2.0 * pad),
                lo.1 + pad + rng.gen_range(0.0..1.0) * (span - 2.0 * pad),
            )
        };
        match rng.gen_range(0..4) {
            0 => {
                let a = pt(rng);
                let b = pt(rng);
                shapes.push(Shape::Stroke { from: a, to: b, width });
            }
            1 => {
                // hook: two strokes meeting at a sharp corner
                let a = pt(rng);
                let b = pt(rng);
                let c = pt(rng);
                shapes.push(Shape::Stroke { from: a, to: b, width });
                shapes.push(Shape::Stroke { from: b, to: c, width: width * rng.gen_range(0.5..1.0) });
            }
            2 => {
                let mid = pt(rng);
                let half = span * rng.gen_range(0.15..0.4);
                let clamp = |v: f64, o: f64| v.clamp(o + pad, o + span - pad);
                let h0 = (clamp(mid.0 - half, lo.0), mid.1);
                let h1 = (clamp(mid.0 + half, lo.0), mid.1);
                let v0 = (mid.0, clamp(mid.1 - half, lo.1));
                let v1 = (mid.0, clamp(mid.1 + half, lo.1));
                shapes.push(Shape::Stroke { from: h0, to: h1, width });
                shapes.push(Shape::Stroke { from: v0, to: v1, width: width * rng.gen_range(0.4..1.0) });
            }
            _ => {
                let c = pt(rng);
                shapes.push(Shape::Disk { center: c, radius: pad.max(grid.h) });
            }
        }
    }
    shapes
}

/// `count` glyph phantoms; phantom `k` depends only on `(seed, k)`.
pub fn glyph_phantoms(count: usize, seed: u64, grid: GridSpec<f64>, smooth_width: f64, sigma_in: f64) -> Result<Vec<Phantom>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let shapes = random_glyph(&mut rng, grid, smooth_width);
            rasterize_phantom(&Mask::from_shapes(grid, &shapes), smooth_width, sigma_in, &format!("{k:05}"))
        })
        .collect()
}

/// Disk inclusion phantom.
pub fn disk_phantom(grid: GridSpec<f64>, center: (f64, f64), radius: f64, smooth_width: f64, sigma_in: f64) -> Result<Phantom> {
    let mask = Mask::from_shapes(grid, &[Shape::Disk { center, radius }]);
    rasterize_phantom(&mask, smooth_width, sigma_in, "disk")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut 80/10/10; validation and test sizes are
/// rounded to nearest, the remainder goes to training.
pub fn split_indices(n: usize, seed: u64) -> Split {
    let tenth = (n as f64 * 0.1).round() as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n - tenth);
    let val = idx.split_off(n - 2 * tenth);
    Split { train: idx, val, test }
}

#[derive(Debug, Clone)]
pub struct PhantomSet {
    /// Each phantom with its coarse reconstruction.
    pub items: Vec<(Phantom, ScalarField<f64>)>,
    pub split: Split,
}

pub fn make_dataset(phantoms: Vec<Phantom>, reconstructions: Vec<ScalarField<f64>>, split_seed: u64) -> Result<PhantomSet> {
    if phantoms.len() != reconstructions.len() {
        return Err(Error::Shape(format!(
            "{} phantoms but {} reconstructions",
            phantoms.len(),
            reconstructions.len()
        )));
    }
    let split = split_indices(phantoms.len(), split_seed);
    Ok(PhantomSet { items: phantoms.into_iter().zip(reconstructions).collect(), split })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseMeta {
    pub id: String,
    pub split: String,
    pub side: usize,
    pub h: f64,
    pub origin: (f64, f64),
    pub smooth_width: f64,
    pub sigma_range: (f64, f64),
}

/// Writes `root/{train,val,test}/case_<id>/{input.pgm,target.pgm,meta.json}`.
/// The input is the reconstruction resampled onto the phantom's grid.
/// Returns every written file.
pub fn write_dataset(set: &PhantomSet, root: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for (name, list) in [("train", &set.split.train), ("val", &set.split.val), ("test", &set.split.test)] {
        fs::create_dir_all(root.join(name))?;
        for &k in list.iter() {
            let (ph, rec) = &set.items[k];
            let dir = root.join(name).join(format!("case_{}", ph.id));
            fs::create_dir_all(&dir)?;
            let g = ph.sigma_true.grid;
            let input = ScalarField::from_fn(g, |x, y| sample_field(rec, x, y));
            let meta = CaseMeta {
                id: ph.id.clone(),
                split: name.to_string(),
                side: g.side(),
                h: g.h,
                origin: g.origin,
                smooth_width: ph.smooth_width,
                sigma_range: (1.0, 2.0),
            };
            let paths = [dir.join("input.pgm"), dir.join("target.pgm"), dir.join("meta.json")];
            Gray::from_sigma(&input).save(&paths[0])?;
            Gray::from_sigma(&ph.sigma_true).save(&paths[1])?;
            fs::write(&paths[2], serde_json::to_string_pretty(&meta)? + "\n")?;
            files.extend(paths);
        }
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec<f64> {
        GridSpec { n: 126, h: 1.0 / 127.0, origin: (1.0, 1.0) }
    }

    #[test]
    fn empty_mask_is_unit_conductivity() {
        let p = rasterize_phantom(&Mask::empty(grid()), 1.0, 2.0, "e").unwrap();
        assert!(p.sigma_true.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn unsmoothed_disk_is_binary_with_exact_plateau() {
        let p = disk_phantom(grid(), (1.5, 1.5), 0.3, 0.0, 2.0).unwrap();
        assert!(p.sigma_true.values.iter().all(|&v| v == 1.0 || v == 2.0));
        assert_eq!(p.sigma_true.at(64, 64), 2.0);
        assert_eq!(p.sigma_true.at(5, 64), 1.0);
    }

    #[test]
    fn smoothed_l_shape_has_narrow_transition() {
        let g = grid();
        let shapes = [
            Shape::Stroke { from: (1.3, 1.7), to: (1.3, 1.3), width: 0.1 },
            Shape::Stroke { from: (1.3, 1.3), to: (1.7, 1.3), width: 0.1 },
        ];
        let p = rasterize_phantom(&Mask::from_shapes(g, &shapes), 1.0, 2.0, "l").unwrap();
        assert!(p.sigma_true.max() <= 2.0 && p.sigma_true.min() >= 1.0);
        // kernel radius 2: every row crossing the vertical bar has a transition
        // band of at most 2 pixels on each side of each edge
        let j = g.side() / 2 + 10;
        let band: Vec<usize> = (0..g.side()).filter(|&i| {
            let v = p.sigma_true.at(i, j);
            v > 1.0 && v < 2.0
        }).collect();
        assert!(!band.is_empty() && band.len() <= 8, "{band:?}");
        let run_left = band.iter().take_while(|&&i| i < 38).count();
        assert!(run_left <= 4);
        assert_eq!(kernel_radius(1.0), 2);
    }

    #[test]
    fn margin_is_enforced() {
        let g = grid();
        let touching = Mask::from_shapes(g, &[Shape::Disk { center: (1.02, 1.5), radius: 0.05 }]);
        assert!(matches!(rasterize_phantom(&touching, 0.0, 2.0, "m"), Err(Error::Geometry(_))));
        // clearance 3 is enough without smoothing but not with width 1
        let mut m = Mask::empty(g);
        m.bits[g.idx(3, 60)] = true;
        assert!(rasterize_phantom(&m, 0.0, 2.0, "a").is_ok());
        assert!(rasterize_phantom(&m, 1.0, 2.0, "b").is_err());
    }

    #[test]
    fn glyphs_respect_invariants_and_seed() {
        let g = grid();
        let a = glyph_phantoms(12, 7, g, 1.0, 2.0).unwrap();
        let b = glyph_phantoms(12, 7, g, 1.0, 2.0).unwrap();
        assert_eq!(a, b);
        let c = glyph_phantoms(12, 8, g, 1.0, 2.0).unwrap();
        assert_ne!(a, c);
        for p in &a {
            assert!(p.mask.values.iter().any(|&v| v == 1.0));
            assert!(p.sigma_true.min() >= 1.0 && p.sigma_true.max() <= 2.0);
            let s = g.side();
            for j in 0..s {
                for i in 0..s {
                    if i.min(j).min(s - 1 - i).min(s - 1 - j) < MARGIN {
                        assert_eq!(p.sigma_true.at(i, j), 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn split_sizes() {
        let sizes = |n| {
            let s = split_indices(n, 1);
            (s.train.len(), s.val.len(), s.test.len())
        };
        assert_eq!(sizes(3256), (2604, 326, 326));
        assert_eq!(sizes(10), (8, 1, 1));
        assert_eq!(sizes(12), (10, 1, 1));
        assert_eq!(sizes(0), (0, 0, 0));
        let s = split_indices(57, 3);
        assert_eq!(s, split_indices(57, 3));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
    }

    #[test]
    fn dataset_layout() {
        let g = GridSpec { n: 30, h: 1.0 / 31.0, origin: (1.0, 1.0) };
        let ph = glyph_phantoms(10, 2, g, 1.0, 2.0).unwrap();
        let recs: Vec<_> = ph.iter().map(|_| ScalarField::constant(g, 1.0)).collect();
        assert!(make_dataset(ph.clone(), recs[..9].to_vec(), 0).is_err());
        let set = make_dataset(ph, recs, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_dataset(&set, dir.path()).unwrap();
        assert_eq!(files.len(), 30);
        let k = set.split.val[0];
        let case = dir.path().join("val").join(format!("case_{}", set.items[k].0.id));
        let target = Gray::load(&case.join("target.pgm")).unwrap();
        assert_eq!(target, Gray::from_sigma(&set.items[k].0.sigma_true));
        let input = Gray::load(&case.join("input.pgm")).unwrap();
        assert!(input.pixels.iter().all(|&p| p == 0));
        let meta: CaseMeta = serde_json::from_str(&fs::read_to_string(case.join("meta.json")).unwrap()).unwrap();
        assert_eq!(meta.split, "val");
        assert_eq!(meta.side, 32);
    }

    #[test]
    fn bitmap_import() {
        let g = GridSpec { n: 14, h: 1.0 / 15.0, origin: (1.0, 1.0) };
        let mut img = Gray { width: 4, height: 4, pixels: vec![255; 16] };
        img.pixels[5] = 0;
        let m = Mask::from_bitmap(g, &img, 128, 4).unwrap();
        // image pixel (row 1, col 1) covers grid columns 6..=7 and rows j = 8..=9
        assert_eq!(m.count(), 4);
        assert!(m.bits[g.idx(6, 8)] && m.bits[g.idx(7, 9)]);
        assert!(rasterize_phantom(&m, 1.0, 2.0, "b").is_ok());
    }
}
