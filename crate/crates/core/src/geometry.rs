//! Periodic two-phase pixel and voxel geometries.
//!
//! Voxels are indexed `x + N (y + N z)`; the indicator is 1 in phase 1.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellGeometry {
    dim: usize,
    n: usize,
    indicator: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct GeometryFile {
    dim: usize,
    #[serde(rename = "N")]
    n: usize,
    encoding: String,
    data: String,
}

impl CellGeometry {
    pub fn new(dim: usize, n: usize, indicator: Vec<u8>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(CoreError::InvalidGeometry(format!("dimension {dim} is not 2 or 3")));
        }
        if !n.is_power_of_two() || n < 2 {
            return Err(CoreError::InvalidGeometry(format!("grid size {n} is not a power of two >= 2")));
        }
        if indicator.len() != n.pow(dim as u32) {
            return Err(CoreError::InvalidGeometry(format!(
                "indicator has {} entries, expected {}",
                indicator.len(),
                n.pow(dim as u32)
            )));
        }
        if indicator.iter().any(|&v| v > 1) {
            return Err(CoreError::InvalidGeometry("indicator values must be 0 or 1".into()));
        }
        Ok(CellGeometry { dim, n, indicator })
    }

    pub fn homogeneous(dim: usize, n: usize, phase: u8) -> Result<Self> {
        Self::new(dim, n, vec![u8::from(phase == 1); n.pow(dim as u32)])
    }

    /// Builds a geometry from a membership test on voxel centers in [0, 1)^dim.
    pub fn from_fn(dim: usize, n: usize, inside: impl Fn(&[f64]) -> bool) -> Result<Self> {
        let total = n.pow(dim as u32);
        let mut indicator = Vec::with_capacity(total);
        let mut p = vec![0.0; dim];
        for idx in 0..total {
            let mut rest = idx;
            for x in p.iter_mut() {
                *x = ((rest % n) as f64 + 0.5) / n as f64;
                rest /= n;
            }
            indicator.push(u8::from(inside(&p)));
        }
        Self::new(dim, n, indicator)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.indicator.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indicator.is_empty()
    }

    pub fn indicator(&self) -> &[u8] {
        &self.indicator
    }

    pub fn volume_fraction(&self) -> f64 {
        self.indicator.iter().map(|&v| v as usize).sum::<usize>() as f64 / self.len() as f64
    }

    /// Value at integer coordinates, wrapped periodically.
    pub fn at(&self, coords: &[i64]) -> u8 {
        let n = self.n as i64;
        let mut idx = 0usize;
        for &c in coords.iter().rev() {
            idx = idx * self.n + c.rem_euclid(n) as usize;
        }
        self.indicator[idx]
    }

    fn coords(&self, mut idx: usize) -> [i64; 3] {
        let mut c = [0i64; 3];
        for slot in c.iter_mut().take(self.dim) {
            *slot = (idx % self.n) as i64;
            idx /= self.n;
        }
        c
    }

    /// True when swapping any two axes maps the geometry onto itself,
    /// possibly after a shift by half a period along some axes.
    pub fn has_cubic_symmetry(&self) -> bool {
        let swaps: &[(usize, usize)] = if self.dim == 2 { &[(0, 1)] } else { &[(0, 1), (1, 2), (0, 2)] };
        let half = (self.n / 2) as i64;
        let shifts: Vec<[i64; 3]> = (0..(1usize << self.dim))
            .map(|m| {
                let mut s = [0i64; 3];
                for (a, slot) in s.iter_mut().enumerate().take(self.dim) {
                    *slot = if m >> a & 1 == 1 { half } else { 0 };
                }
                s
            })
            .collect();
        swaps.iter().all(|&(a, b)| {
            shifts.iter().any(|s| {
                (0..self.len()).all(|idx| {
                    let mut c = self.coords(idx);
                    c.swap(a, b);
                    for k in 0..self.dim {
                        c[k] += s[k];
                    }
                    self.at(&c[..self.dim]) == self.indicator[idx]
                })
            })
        })
    }

    pub fn to_json(&self, encoding: Encoding) -> Result<String> {
        let data = match encoding {
            Encoding::Dense => self.indicator.iter().map(|&v| if v == 1 { '1' } else { '0' }).collect(),
            Encoding::Rle => {
                let mut runs = Vec::new();
                let mut i = 0;
                while i < self.indicator.len() {
                    let v = self.indicator[i];
                    let mut j = i;
                    while j < self.indicator.len() && self.indicator[j] == v {
                        j += 1;
                    }
                    runs.push(format!("{}:{}", j - i, v));
                    i = j;
                }
                runs.join(",")
            }
        };
        let file = GeometryFile {
            dim: self.dim,
            n: self.n,
            encoding: encoding.name().into(),
            data,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GeometryFile = serde_json::from_str(text)?;
        let indicator = match file.encoding.as_str() {
            "dense" => file
                .data
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(|c| match c {
                    '0' => Ok(0),
                    '1' => Ok(1),
                    other => Err(CoreError::InvalidGeometry(format!("unexpected character {other:?}"))),
                })
                .collect::<Result<Vec<u8>>>()?,
            "rle" => {
                let mut out = Vec::new();
                for run in file.data.split(',').map(str::trim).filter(|r| !r.is_empty()) {
                    let (count, bit) = run
                        .split_once(':')
                        .ok_or_else(|| CoreError::InvalidGeometry(format!("bad run {run:?}")))?;
                    let count: usize = count
                        .parse()
                        .map_err(|_| CoreError::InvalidGeometry(format!("bad run length {count:?}")))?;
                    let bit: u8 = match bit {
                        "0" => 0,
                        "1" => 1,
                        _ => return Err(CoreError::InvalidGeometry(format!("bad run value {bit:?}"))),
                    };
                    out.extend(std::iter::repeat_n(bit, count));
                }
                out
            }
            other => return Err(CoreError::InvalidGeometry(format!("unknown encoding {other:?}"))),
        };
        Self::new(file.dim, file.n, indicator)
    }

    /// Named generator of the form `name(args)@N`, e.g. `random(7,0.5)@64`.
    pub fn generate(spec: &str) -> Result<Self> {
        let (head, n) = spec
            .rsplit_once('@')
            .ok_or_else(|| CoreError::InvalidGeometry(format!("{spec:?}: missing @N suffix")))?;
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| CoreError::InvalidGeometry(format!("{spec:?}: bad grid size")))?;
        let (name, args) = match head.split_once('(') {
            Some((name, rest)) => {
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| CoreError::InvalidGeometry(format!("{spec:?}: unbalanced parentheses")))?;
                let args = inner
                    .split(',')
                    .map(str::trim)
                    .filter(|a| !a.is_empty())
                    .map(|a| {
                        a.parse::<f64>()
                            .map_err(|_| CoreError::InvalidGeometry(format!("{spec:?}: bad argument {a:?}")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                (name.trim(), args)
            }
            None => (head.trim(), Vec::new()),
        };
        let arg = |i: usize, default: Option<f64>| -> Result<f64> {
            args.get(i)
                .copied()
                .or(default)
                .ok_or_else(|| CoreError::InvalidGeometry(format!("{spec:?}: missing argument {}", i + 1)))
        };
        let fraction = |v: f64| -> Result<f64> {
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(CoreError::InvalidGeometry(format!("{spec:?}: fraction {v} outside [0, 1]")))
            }
        };
        let seed = |v: f64| -> Result<u64> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as u64)
            } else {
                Err(CoreError::InvalidGeometry(format!("{spec:?}: seed must be a non-negative integer")))
            }
        };
        let base = |v: f64| -> Result<usize> {
            let b = v as usize;
            if v.fract() == 0.0 && b >= 1 && n.is_multiple_of(b) {
                Ok(b)
            } else {
                Err(CoreError::InvalidGeometry(format!("{spec:?}: base {v} must divide N")))
            }
        };
        match name {
            "stripes" => stripes(n, fraction(arg(0, Some(0.5))?)?),
            "checkerboard" => Self::from_fn(2, n, |p| (p[0] < 0.5) ^ (p[1] < 0.5)),
            "disks" => {
                let f = fraction(arg(0, None)?)?;
                let r = (f / std::f64::consts::PI).sqrt();
                Self::from_fn(2, n, |p| (p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2) < r * r)
            }
            "random" => random(2, n, seed(arg(0, None)?)?, fraction(arg(1, None)?)?, base(arg(2, Some(8.0))?)?),
            "random3" => random(3, n, seed(arg(0, None)?)?, fraction(arg(1, None)?)?, base(arg(2, Some(4.0))?)?),
            "random-cubic" => {
                let g = random(3, n, seed(arg(0, None)?)?, fraction(arg(1, None)?)?, base(arg(2, Some(4.0))?)?)?;
                Ok(symmetrize_cubic(&g))
            }
            "cubes" => {
                let f = fraction(arg(0, None)?)?;
                let side = (f.cbrt() * n as f64).round() / n as f64;
                Self::from_fn(3, n, |p| p.iter().all(|&x| x < side))
            }
            "spheres" => {
                let f = fraction(arg(0, None)?)?;
                let r = (3.0 * f / (4.0 * std::f64::consts::PI)).cbrt();
                Self::from_fn(3, n, |p| p.iter().map(|x| (x - 0.5).powi(2)).sum::<f64>() < r * r)
            }
            "tori-chain" => tori_chain(n, arg(0, Some(0.06))?),
            other => Err(CoreError::InvalidGeometry(format!("unknown generator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Dense,
    Rle,
}

impl Encoding {
    pub fn name(self) -> &'static str {
        match self {
            Encoding::Dense => "dense",
            Encoding::Rle => "rle",
        }
    }
}

/// Layers normal to x; phase 1 occupies the first `round(fN)` columns.
pub fn stripes(n: usize, f: f64) -> Result<CellGeometry> {
    let cols = (f * n as f64).round();
    CellGeometry::from_fn(2, n, |p| p[0] * (n as f64) < cols)
}

/// Random geometry: a coarse `base^dim` grid with exactly `round(f base^dim)`
/// phase-1 cells, upsampled to `n`. The same seed gives the same coarse
/// pattern at every resolution.
pub fn random(dim: usize, n: usize, seed: u64, f: f64, base: usize) -> Result<CellGeometry> {
    if base > n || !n.is_multiple_of(base) {
        return Err(CoreError::InvalidGeometry(format!("base {base} does not divide N = {n}")));
    }
    let cells = base.pow(dim as u32);
    let ones = (f * cells as f64).round() as usize;
    let mut coarse: Vec<u8> = (0..cells).map(|i| u8::from(i < ones)).collect();
    coarse.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let scale = n / base;
    let total = n.pow(dim as u32);
    let indicator = (0..total)
        .map(|idx| {
            let mut rest = idx;
            let mut cidx = 0;
            let mut stride = 1;
            for _ in 0..dim {
                cidx += (rest % n) / scale * stride;
                rest /= n;
                stride *= base;
            }
            coarse[cidx]
        })
        .collect();
    CellGeometry::new(dim, n, indicator)
}

/// Makes a 3D geometry invariant under all axis permutations by reading
/// every voxel from its sorted coordinates.
pub fn symmetrize_cubic(g: &CellGeometry) -> CellGeometry {
    let n = g.n();
    let mut indicator = vec![0u8; g.len()];
    for (idx, slot) in indicator.iter_mut().enumerate() {
        let mut c = [(idx % n) as i64, (idx / n % n) as i64, (idx / (n * n)) as i64];
        c.sort_unstable();
        *slot = g.at(&c);
    }
    CellGeometry {
        dim: 3,
        n,
        indicator,
    }
}

fn wrap(d: f64) -> f64 {
    d - d.round()
}

/// One chain along the first coordinate, threaded through (y, z) = (0, ½):
/// square rings of half-size `a` alternate between the plane ⊥z at x = 0 and
/// the plane ⊥y at x = ½, each ring passing through the holes of its neighbours.
fn chain_member(x: f64, y: f64, z: f64, a: f64, w: f64) -> bool {
    let (dx0, dx1) = (wrap(x), wrap(x - 0.5));
    let (dy, dz) = (wrap(y), wrap(z - 0.5));
    let ring = |u: f64, v: f64, normal: f64| {
        let r = u.abs().max(v.abs());
        normal.abs() <= w && r >= a - w && r <= a + w
    };
    ring(dx0, dy, dz) || ring(dx1, dz, dy)
}

/// Three mutually interlinked chains of square rings, one along each axis.
/// `w` is the half-thickness of the ring bars in cell units.
pub fn tori_chain(n: usize, w: f64) -> Result<CellGeometry> {
    if !(w > 0.0 && w < 0.15) {
        return Err(CoreError::InvalidGeometry(format!("ring half-thickness {w} outside (0, 0.15)")));
    }
    let a = 0.3;
    CellGeometry::from_fn(3, n, |p| {
        let (x, y, z) = (p[0], p[1], p[2]);
        chain_member(x, y, z, a, w) || chain_member(y, z, x, a, w) || chain_member(z, x, y, a, w)
    })
}
