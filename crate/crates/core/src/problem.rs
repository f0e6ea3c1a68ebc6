//! The quadratic-fit problem whose mini-batch MSE surface is being modelled.
//!
//! Training data come from `y = a2 x^2 + a1 x` on an equispaced grid and the
//! model is `w1 x^2 + w2 x`. Drawing a fresh random mini-batch at each weight
//! pair makes the sampled loss surface discontinuous, with larger batches
//! standing in for higher-fidelity data.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_stream, index_below, sample_without_replacement};
use crate::surrogate::LossObservation;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset1D {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `(a2, a1)` of the generating quadratic.
    pub coeffs: (f64, f64),
}

impl Dataset1D {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Generation parameters for [`Dataset1D`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n: usize,
    pub interval: (f64, f64),
    pub coeffs: (f64, f64),
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            n: 121,
            interval: (-2.0, 2.0),
            coeffs: (0.1, 0.1),
        }
    }
}

impl DatasetSpec {
    pub fn generate(&self) -> Result<Dataset1D> {
        generate_full_batch(self.n, self.interval, self.coeffs)
    }
}

/// `n` equispaced inputs over `interval` (endpoints included) and exact quadratic targets.
pub fn generate_full_batch(n: usize, interval: (f64, f64), coeffs: (f64, f64)) -> Result<Dataset1D> {
    if n < 2 {
        return Err(Error::Input(format!("dataset needs at least 2 points, got {n}")));
    }
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Input(format!("invalid interval [{lo}, {hi}]")));
    }
    if !(coeffs.0.is_finite() && coeffs.1.is_finite()) {
        return Err(Error::Input("generating coefficients must be finite".into()));
    }
    let span = hi - lo;
    let last = (n - 1) as f64;
    let xs: Vec<f64> = (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + span * i as f64 / last })
        .collect();
    let ys = xs.iter().map(|&x| model_predict([coeffs.0, coeffs.1], x)).collect();
    Ok(Dataset1D { xs, ys, coeffs })
}

/// `w1 x^2 + w2 x`.
pub fn model_predict(w: [f64; 2], x: f64) -> f64 {
    w[0] * x * x + w[1] * x
}

fn check_indices(data: &Dataset1D, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::Input("mini-batch is empty".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(Error::Input(format!(
            "batch index {bad} out of range for {} samples",
            data.len()
        )));
    }
    Ok(())
}

/// Mean squared error of the model over the selected samples.
pub fn batch_loss(w: [f64; 2], data: &Dataset1D, indices: &[usize]) -> Result<f64> {
    check_indices(data, indices)?;
    let sum: f64 = indices
        .iter()
        .map(|&i| {
            let e = model_predict(w, data.xs[i]) - data.ys[i];
            e * e
        })
        .sum();
    Ok(sum / indices.len() as f64)
}

/// `(2/b) sum e_i (x_i^2, x_i)`.
pub fn batch_gradient(w: [f64; 2], data: &Dataset1D, indices: &[usize]) -> Result<[f64; 2]> {
    check_indices(data, indices)?;
    let mut g = [0.0; 2];
    for &i in indices {
        let x = data.xs[i];
        let e = model_predict(w, x) - data.ys[i];
        g[0] += e * x * x;
        g[1] += e * x;
    }
    let scale = 2.0 / indices.len() as f64;
    Ok([g[0] * scale, g[1] * scale])
}

/// Raw moments `m_k = (1/N) sum x_i^k` for k = 2, 3, 4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl Moments {
    pub fn of(data: &Dataset1D) -> Self {
        let n = data.len() as f64;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &x in &data.xs {
            let x2 = x * x;
            m2 += x2;
            m3 += x2 * x;
            m4 += x2 * x2;
        }
        Self {
            m2: m2 / n,
            m3: m3 / n,
            m4: m4 / n,
        }
    }
}

/// Closed-form full-batch loss, an oracle independent of [`batch_loss`].
#[derive(Debug, Clone, Copy)]
pub struct FullBatchOracle {
    moments: Moments,
    coeffs: (f64, f64),
}

impl FullBatchOracle {
    pub fn new(data: &Dataset1D) -> Self {
        Self {
            moments: Moments::of(data),
            coeffs: data.coeffs,
        }
    }

    pub fn moments(&self) -> Moments {
        self.moments
    }

    pub fn loss(&self, w: [f64; 2]) -> f64 {
        let d1 = w[0] - self.coeffs.0;
        let d2 = w[1] - self.coeffs.1;
        let Moments { m2, m3, m4 } = self.moments;
        m4 * d1 * d1 + 2.0 * m3 * d1 * d2 + m2 * d2 * d2
    }
}

pub fn analytic_loss(w: [f64; 2], data: &Dataset1D) -> f64 {
    FullBatchOracle::new(data).loss(w)
}

/// Rectangular full-factorial grid over the weight plane.
///
/// Node `(i, j)` sits at `lower + (i, j) * (upper - lower) / (resolution - 1)`;
/// nodes are enumerated with `i` (the `w1` index) varying fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub resolution: usize,
}

impl GridSpec {
    pub fn new(lower: [f64; 2], upper: [f64; 2], resolution: usize) -> Result<Self> {
        let g = Self {
            lower,
            upper,
            resolution,
        };
        g.validate()?;
        Ok(g)
    }

    /// Square grid over `[-2, 2]^2`.
    pub fn square(resolution: usize) -> Result<Self> {
        Self::new([-2.0, -2.0], [2.0, 2.0], resolution)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution < 2 {
            return Err(Error::Input(format!(
                "grid resolution must be at least 2, got {}",
                self.resolution
            )));
        }
        for k in 0..2 {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Input(format!(
                    "grid axis {k}: lower {lo} must be below upper {hi}"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.resolution == 0
    }

    pub fn step(&self) -> [f64; 2] {
        let d = (self.resolution - 1) as f64;
        [
            (self.upper[0] - self.lower[0]) / d,
            (self.upper[1] - self.lower[1]) / d,
        ]
    }

    fn coordinate(&self, axis: usize, i: usize) -> f64 {
        if i == self.resolution - 1 {
            return self.upper[axis];
        }
        let span = self.upper[axis] - self.lower[axis];
        self.lower[axis] + i as f64 * span / (self.resolution - 1) as f64
    }

    /// Node with `w1` index `i` and `w2` index `j`.
    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [self.coordinate(0, i), self.coordinate(1, j)]
    }

    /// Node at flat (row-major, `w1` fastest) index `k`.
    pub fn node_at(&self, k: usize) -> [f64; 2] {
        self.node(k % self.resolution, k / self.resolution)
    }

    pub fn nodes(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|k| self.node_at(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiniBatchPolicy {
    /// Largest batch size; each draw picks a size uniformly from `1..=max_size`.
    pub max_size: usize,
    /// Use every sample at every node instead of drawing batches.
    pub full_batch: bool,
}

impl MiniBatchPolicy {
    pub fn new(max_size: usize) -> Self {
        Self {
            max_size,
            full_batch: false,
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            max_size: n,
            full_batch: true,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.max_size == 0 || self.max_size > n {
            return Err(Error::Input(format!(
                "maximum batch size must lie in 1..={n}, got {}",
                self.max_size
            )));
        }
        Ok(())
    }
}

/// Draw a batch size uniformly from `1..=max_size`, then that many distinct
/// indices from `0..n`. Returned sorted ascending.
pub fn sample_batch_indices<R: Rng + ?Sized>(rng: &mut R, policy: MiniBatchPolicy, n: usize) -> Vec<usize> {
    if policy.full_batch {
        return (0..n).collect();
    }
    let b = 1 + index_below(rng, policy.max_size.min(n));
    let mut indices = sample_without_replacement(rng, n, b);
    indices.sort_unstable();
    indices
}

/// One loss observation per grid node. Node `k` draws its batch from the
/// substream `node/k` of `seed`, and its value and gradient share that batch.
pub fn sample_loss_surface(
    grid: &GridSpec,
    data: &Dataset1D,
    policy: MiniBatchPolicy,
    seed: u64,
) -> Result<Vec<LossObservation>> {
    grid.validate()?;
    policy.validate(data.len())?;
    grid.nodes()
        .into_iter()
        .enumerate()
        .map(|(k, w)| {
            let mut rng = derive_stream(seed, format!("node/{k}"));
            let batch = sample_batch_indices(&mut rng, policy, data.len());
            Ok(LossObservation {
                w,
                value: batch_loss(w, data, &batch)?,
                gradient: batch_gradient(w, data, &batch)?,
                batch_size: batch.len(),
            })
        })
        .collect()
}
