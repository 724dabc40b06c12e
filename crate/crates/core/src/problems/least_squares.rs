//! Random least-squares objective `F(x, xi) = 0.5 |xi_H x - xi_c|^2`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::linalg;
use crate::par;
use crate::problem::{Draw, ObjectiveSampler};
use crate::rng::{streams, RngStream};

/// One realization `(H, c)` with row-major `H` of shape `p x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LsSample {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Standard Gaussian `(H, c)` with `H` scaled to unit spectral norm and `c`
/// to unit Euclidean norm.
pub fn normalized_gaussian_sample(p: usize, n: usize, rng: &mut RngStream) -> LsSample {
    let mut h = rng.normals(p * n);
    let mut c = rng.normals(p);
    let spectral = DMatrix::from_row_slice(p, n, &h).singular_values().max();
    if spectral > 0.0 {
        h.iter_mut().for_each(|v| *v /= spectral);
    }
    let cn = linalg::norm(&c);
    if cn > 0.0 {
        c.iter_mut().for_each(|v| *v /= cn);
    }
    LsSample { h, c }
}

/// Averaged quadratic moments of a sample set: `A = mean H^T H`,
/// `b = mean H^T c`, `s = mean |c|^2`, so the mean objective is
/// `0.5 x^T A x - b^T x + 0.5 s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub s: f64,
}

impl Moments {
    fn accumulate(sample: &LsSample, p: usize, n: usize, acc: &mut [f64]) {
        let (a, rest) = acc.split_at_mut(n * n);
        let (b, s) = rest.split_at_mut(n);
        for r in 0..p {
            let row = &sample.h[r * n..(r + 1) * n];
            for i in 0..n {
                let hi = row[i];
                if hi != 0.0 {
                    linalg::axpy(hi, row, &mut a[i * n..(i + 1) * n]);
                    b[i] += hi * sample.c[r];
                }
            }
        }
        s[0] += linalg::norm_sq(&sample.c);
    }

    fn from_sum(sum: Vec<f64>, n: usize, count: usize) -> Self {
        let inv = 1.0 / count as f64;
        let a = sum[..n * n].iter().map(|v| v * inv).collect();
        let b = sum[n * n..n * n + n].iter().map(|v| v * inv).collect();
        Self {
            n,
            a,
            b,
            s: sum[n * n + n] * inv,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut quad = 0.0;
        for i in 0..n {
            quad += x[i] * linalg::dot(&self.a[i * n..(i + 1) * n], x);
        }
        0.5 * quad - linalg::dot(&self.b, x) + 0.5 * self.s
    }

    pub fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            out[i] += scale * (linalg::dot(&self.a[i * n..(i + 1) * n], x) - self.b[i]);
        }
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.a)
    }
}

#[derive(Debug, Clone)]
enum Source {
    Stored(Vec<LsSample>),
    /// Fresh normalized Gaussian realizations.
    Gaussian,
    /// Fixed list of seeds into the Gaussian law.
    HeldOut(Vec<u64>),
}

/// Least-squares sampler over `(H, c)` pairs in either finite-sum or
/// expectation form.
#[derive(Debug, Clone)]
pub struct LeastSquaresSampler {
    n: usize,
    p: usize,
    source: Source,
    moments: Option<Moments>,
}

impl LeastSquaresSampler {
    /// Expectation form over the normalized Gaussian law.
    pub fn gaussian(n: usize, p: usize) -> Self {
        Self {
            n,
            p,
            source: Source::Gaussian,
            moments: None,
        }
    }

    /// Finite sum over stored samples.
    pub fn stored(n: usize, p: usize, samples: Vec<LsSample>) -> Self {
        let moments = Self::moments_of(n, p, samples.len(), |i| samples[i].clone());
        Self {
            n,
            p,
            source: Source::Stored(samples),
            moments: Some(moments),
        }
    }

    fn moments_of<F>(n: usize, p: usize, count: usize, sample: F) -> Moments
    where
        F: Fn(usize) -> LsSample + Sync + Send,
    {
        let sum = par::chunked_sum(count, n * n + n + 1, |range, acc| {
            for i in range {
                Moments::accumulate(&sample(i), p, n, acc);
            }
        });
        Moments::from_sum(sum, n, count)
    }

    pub fn moments(&self) -> Option<&Moments> {
        self.moments.as_ref()
    }

    pub fn samples(&self) -> Option<&[LsSample]> {
        match &self.source {
            Source::Stored(s) => Some(s),
            _ => None,
        }
    }

    fn realize(&self, draw: Draw) -> std::borrow::Cow<'_, LsSample> {
        use std::borrow::Cow;
        match (draw, &self.source) {
            (Draw::Index(i), Source::Stored(s)) => Cow::Borrowed(&s[i]),
            (Draw::Index(i), Source::HeldOut(seeds)) => Cow::Owned(self.realize_seed(seeds[i])),
            (Draw::Seeded(seed), _) => Cow::Owned(self.realize_seed(seed)),
            (Draw::Index(_), Source::Gaussian) => {
                panic!("index draw on an expectation-form sampler")
            }
        }
    }

    fn realize_seed(&self, seed: u64) -> LsSample {
        let mut rng = RngStream::new(seed, 0);
        normalized_gaussian_sample(self.p, self.n, &mut rng)
    }

    fn residual(&self, s: &LsSample, x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.p];
        linalg::matvec(&s.h, self.p, self.n, x, &mut r);
        for (ri, ci) in r.iter_mut().zip(&s.c) {
            *ri -= ci;
        }
        r
    }
}

impl ObjectiveSampler for LeastSquaresSampler {
    fn finite_sum_size(&self) -> Option<usize> {
        match &self.source {
            Source::Stored(s) => Some(s.len()),
            Source::HeldOut(s) => Some(s.len()),
            Source::Gaussian => None,
        }
    }

    fn sample_value(&self, draw: Draw, x: &[f64]) -> f64 {
        let s = self.realize(draw);
        0.5 * linalg::norm_sq(&self.residual(&s, x))
    }

    fn add_sample_gradient(&self, draw: Draw, x: &[f64], scale: f64, out: &mut [f64]) {
        let s = self.realize(draw);
        let r = self.residual(&s, x);
        linalg::add_matvec_t(&s.h, self.p, self.n, &r, scale, out);
    }

    fn mean_value(&self, x: &[f64]) -> Option<f64> {
        self.moments.as_ref().map(|m| m.value(x))
    }

    fn add_mean_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) -> bool {
        match &self.moments {
            Some(m) => {
                m.add_gradient(x, scale, out);
                true
            }
            None => false,
        }
    }

    fn held_out(&self, size: usize, seed: u64) -> Arc<dyn ObjectiveSampler> {
        let mut rng = RngStream::new(seed, streams::HELD_OUT);
        let seeds: Vec<u64> = (0..size).map(|_| rng.next_u64()).collect();
        let moments = Self::moments_of(self.n, self.p, size, |i| self.realize_seed(seeds[i]));
        Arc::new(Self {
            n: self.n,
            p: self.p,
            source: Source::HeldOut(seeds),
            moments: Some(moments),
        })
    }
}
