//! Euclidean projections onto the feasible sets used by the benchmark
//! problems: boxes, balls, the probability simplex, the nonnegative orthant
//! and Cartesian products of these.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Componentwise clamp onto `[lo, hi]^n`.
pub fn project_box(z: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    if !(lo <= hi) {
        return Err(Error::InvalidBounds { lo, hi });
    }
    Ok(z.iter().map(|v| v.clamp(lo, hi)).collect())
}

/// Projection onto the closed ball `{x : |x - center| <= radius}`.
pub fn project_ball(z: &[f64], center: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidRadius(radius));
    }
    if z.len() != center.len() {
        return Err(Error::Dimension {
            expected: center.len(),
            got: z.len(),
        });
    }
    let mut out = z.to_vec();
    ball_in_place(&mut out, center, radius);
    Ok(out)
}

/// Projection onto `{x >= 0, sum x = 1}`.
pub fn project_simplex(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut out = z.to_vec();
    simplex_in_place(&mut out);
    Ok(out)
}

/// Blockwise projection onto a product set. The block ranges must partition
/// `0..z.len()`.
pub fn project_product(z: &[f64], blocks: &[Block]) -> Result<Vec<f64>> {
    let set = FeasibleSet::product(blocks.to_vec(), z.len())?;
    let mut out = z.to_vec();
    set.project(&mut out);
    Ok(out)
}

fn ball_in_place(z: &mut [f64], center: &[f64], radius: f64) {
    let d = linalg::dist(z, center);
    if d > radius {
        let scale = radius / d;
        for (zi, ci) in z.iter_mut().zip(center) {
            *zi = ci + scale * (*zi - ci);
        }
    }
}

/// Sort-and-threshold simplex projection.
fn simplex_in_place(z: &mut [f64]) {
    let mut sorted = z.to_vec();
    // stable sort; ties do not change the threshold
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    for v in z.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
    // restore exact unit sum against rounding in theta
    let s: f64 = z.iter().sum();
    if s > 0.0 && (s - 1.0).abs() > 0.0 {
        let positive = z.iter().filter(|v| **v > 0.0).count() as f64;
        let shift = (1.0 - s) / positive;
        for v in z.iter_mut().filter(|v| **v > 0.0) {
            *v = (*v + shift).max(0.0);
        }
    }
}

/// A convex set with an exact Euclidean projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibleSet {
    /// All of R^n.
    Whole,
    Box { lo: f64, hi: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Simplex,
    NonNegative,
    Product { blocks: Vec<Block> },
}

/// One factor of a product set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub range: Range<usize>,
    pub set: FeasibleSet,
}

impl Block {
    pub fn new(range: Range<usize>, set: FeasibleSet) -> Self {
        Self { range, set }
    }
}

impl FeasibleSet {
    pub fn boxed(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::InvalidBounds { lo, hi });
        }
        Ok(FeasibleSet::Box { lo, hi })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidRadius(radius));
        }
        Ok(FeasibleSet::Ball { center, radius })
    }

    /// Product set over `0..dim`. Blocks may be listed in any order but must
    /// cover every index exactly once.
    pub fn product(mut blocks: Vec<Block>, dim: usize) -> Result<Self> {
        blocks.sort_by_key(|b| b.range.start);
        let mut next = 0;
        for b in &blocks {
            if b.range.start != next {
                return Err(Error::BlockLayout(if b.range.start < next {
                    format!("block {:?} overlaps index {}", b.range, b.range.start)
                } else {
                    format!("indices {}..{} are not covered", next, b.range.start)
                }));
            }
            if b.range.end <= b.range.start {
                return Err(Error::BlockLayout(format!("empty block {:?}", b.range)));
            }
            if let FeasibleSet::Ball { center, .. } = &b.set {
                if center.len() != b.range.len() {
                    return Err(Error::BlockLayout(format!(
                        "ball center of length {} on block {:?}",
                        center.len(),
                        b.range
                    )));
                }
            }
            next = b.range.end;
        }
        if next != dim {
            return Err(Error::BlockLayout(format!(
                "blocks cover 0..{next}, expected 0..{dim}"
            )));
        }
        Ok(FeasibleSet::Product { blocks })
    }

    /// Projects `z` onto the set in place.
    pub fn project(&self, z: &mut [f64]) {
        match self {
            FeasibleSet::Whole => {}
            FeasibleSet::Box { lo, hi } => {
                for v in z.iter_mut() {
                    *v = v.clamp(*lo, *hi);
                }
            }
            FeasibleSet::Ball { center, radius } => ball_in_place(z, center, *radius),
            FeasibleSet::Simplex => simplex_in_place(z),
            FeasibleSet::NonNegative => {
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            FeasibleSet::Product { blocks } => {
                for b in blocks {
                    b.set.project(&mut z[b.range.clone()]);
                }
            }
        }
    }

    pub fn projected(&self, z: &[f64]) -> Vec<f64> {
        let mut out = z.to_vec();
        self.project(&mut out);
        out
    }

    /// Diameter of the set, `None` when unbounded.
    pub fn diameter(&self, dim: usize) -> Option<f64> {
        match self {
            FeasibleSet::Whole | FeasibleSet::NonNegative => None,
            FeasibleSet::Box { lo, hi } => Some((hi - lo) * (dim as f64).sqrt()),
            FeasibleSet::Ball { radius, .. } => Some(2.0 * radius),
            FeasibleSet::Simplex => Some(if dim > 1 { 2f64.sqrt() } else { 0.0 }),
            FeasibleSet::Product { blocks } => {
                let mut sq = 0.0;
                for b in blocks {
                    let d = b.set.diameter(b.range.len())?;
                    sq += d * d;
                }
                Some(sq.sqrt())
            }
        }
    }
}
