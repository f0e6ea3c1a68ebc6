//! Surfaces on weight grids and the diagnostics reported for them.
//!
//! A surrogate surface counts as well behaved when it is nowhere negative and
//! has exactly one local minimum in the 8-neighbourhood sense.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{FullBatchOracle, GridSpec};
use crate::surrogate::{LossObservation, Surrogate};

/// Scalar values over a grid, row-major with `w1` varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl SurfaceGrid {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.len() {
            return Err(Error::Input(format!(
                "{}x{} grid needs {} values, got {}",
                grid.resolution,
                grid.resolution,
                grid.len(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("surface value at node {k} is not finite")));
        }
        Ok(Self { grid, values })
    }

    /// Value at `w1` index `i`, `w2` index `j`.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.resolution + i]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Same surface with `c` added to every node.
    pub fn shifted(&self, c: f64) -> SurfaceGrid {
        SurfaceGrid {
            grid: self.grid,
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }
}

/// Anything that can be sampled onto a grid.
#[derive(Debug, Clone, Copy)]
pub enum SurfaceSource<'a> {
    Surrogate(&'a Surrogate),
    Oracle(&'a FullBatchOracle),
    /// Observations laid out on exactly the target grid.
    Observations(&'a [LossObservation]),
}

pub fn evaluate_surface(source: SurfaceSource<'_>, grid: &GridSpec) -> Result<SurfaceGrid> {
    grid.validate()?;
    let nodes = grid.nodes();
    let values = match source {
        SurfaceSource::Surrogate(s) => nodes.iter().map(|w| s.evaluate(w)).collect(),
        SurfaceSource::Oracle(o) => nodes.iter().map(|&w| o.loss(w)).collect(),
        SurfaceSource::Observations(obs) => {
            if obs.len() != nodes.len() {
                return Err(Error::Input(format!(
                    "{} observations cannot fill a grid of {} nodes",
                    obs.len(),
                    nodes.len()
                )));
            }
            let tol = 1e-9 * grid.step()[0].abs().max(grid.step()[1].abs());
            for (k, (o, w)) in obs.iter().zip(&nodes).enumerate() {
                if (o.w[0] - w[0]).abs() > tol || (o.w[1] - w[1]).abs() > tol {
                    return Err(Error::Input(format!(
                        "observation {k} at ({}, {}) is not grid node ({}, {})",
                        o.w[0], o.w[1], w[0], w[1]
                    )));
                }
            }
            obs.iter().map(|o| o.value).collect()
        }
    };
    SurfaceGrid::new(*grid, values)
}

/// Lowest node; the first in row-major order wins ties.
pub fn locate_min(surface: &SurfaceGrid) -> ([f64; 2], f64) {
    let mut best = 0;
    for (k, &v) in surface.values.iter().enumerate() {
        if v < surface.values[best] {
            best = k;
        }
    }
    (surface.grid.node_at(best), surface.values[best])
}

/// Number of local minima in the 8-neighbourhood sense.
///
/// A minimum is an 8-connected set of nodes sharing one value whose every
/// outside neighbour is strictly larger. An isolated node therefore counts
/// only when it is strictly below all its neighbours, two tied nodes at the
/// bottom of a bowl count once, and a surface that is constant everywhere has
/// no minimum at all.
pub fn count_local_minima(surface: &SurfaceGrid) -> usize {
    local_minima(surface).len()
}

fn neighbours(n: usize, k: usize) -> impl Iterator<Item = usize> {
    let (i, j) = ((k % n) as isize, (k / n) as isize);
    let n = n as isize;
    (-1..=1)
        .flat_map(move |dj| (-1..=1).map(move |di| (i + di, j + dj)))
        .filter(move |&(a, b)| (a, b) != (i, j) && a >= 0 && b >= 0 && a < n && b < n)
        .map(move |(a, b)| (b * n + a) as usize)
}

/// Lowest flat index of each local minimum (see [`count_local_minima`]).
pub fn local_minima(surface: &SurfaceGrid) -> Vec<usize> {
    let n = surface.grid.resolution;
    let v = &surface.values;
    let mut seen = vec![false; v.len()];
    let mut out = Vec::new();
    for start in 0..v.len() {
        if seen[start] {
            continue;
        }
        let level = v[start];
        let mut stack = vec![start];
        seen[start] = true;
        let mut has_outside = false;
        let mut is_min = true;
        while let Some(k) = stack.pop() {
            for nb in neighbours(n, k) {
                if v[nb] == level {
                    if !seen[nb] {
                        seen[nb] = true;
                        stack.push(nb);
                    }
                } else {
                    has_outside = true;
                    is_min &= v[nb] > level;
                }
            }
        }
        if has_outside && is_min {
            out.push(start);
        }
    }
    out
}

pub fn negative_fraction(surface: &SurfaceGrid) -> f64 {
    let negative = surface.values.iter().filter(|&&v| v < 0.0).count();
    negative as f64 / surface.values.len() as f64
}

/// Root mean squared nodewise difference of two surfaces on the same grid.
pub fn surface_rmse(a: &SurfaceGrid, b: &SurfaceGrid) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::Input("surfaces live on different grids".into()));
    }
    let sum: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.values.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceReport {
    pub argmin: [f64; 2],
    pub min_value: f64,
    pub local_min_count: usize,
    pub negative_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rmse_vs_reference: Option<f64>,
}

impl SurfaceReport {
    pub fn new(surface: &SurfaceGrid, reference: Option<&SurfaceGrid>) -> Result<Self> {
        let (argmin, min_value) = locate_min(surface);
        Ok(Self {
            argmin,
            min_value,
            local_min_count: count_local_minima(surface),
            negative_fraction: negative_fraction(surface),
            rmse_vs_reference: reference.map(|r| surface_rmse(surface, r)).transpose()?,
        })
    }

    /// Nowhere negative with a single basin.
    pub fn is_well_behaved(&self) -> bool {
        self.negative_fraction == 0.0 && self.local_min_count == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelParams;
    use crate::problem::DatasetSpec;
    use crate::surrogate::FitMode;

    fn grid25() -> GridSpec {
        GridSpec::square(25).unwrap()
    }

    fn from_fn(grid: GridSpec, f: impl Fn([f64; 2]) -> f64) -> SurfaceGrid {
        SurfaceGrid::new(grid, grid.nodes().into_iter().map(f).collect()).unwrap()
    }

    fn oracle_surface() -> SurfaceGrid {
        let data = DatasetSpec::default().generate().unwrap();
        evaluate_surface(SurfaceSource::Oracle(&FullBatchOracle::new(&data)), &grid25()).unwrap()
    }

    #[test]
    fn oracle_corner_value() {
        // m4 (2.1)^2 + m2 (2.1)^2 with exact moments 669719/202500 and 61/45.
        let expected = 4.41 * (669_719.0 / 202_500.0 + 61.0 / 45.0);
        let s = oracle_surface();
        assert!((s.values[0] - expected).abs() < 1e-10);
        assert!((s.values[0] - 20.563).abs() < 1e-3);
    }

    #[test]
    fn oracle_minimum_sits_on_nearest_node() {
        let s = oracle_surface();
        let (argmin, _) = locate_min(&s);
        // Grid step is 1/6; with no cross term each axis picks its nearest level to 0.1.
        assert!((argmin[0] - 1.0 / 6.0).abs() < 1e-12 && (argmin[1] - 1.0 / 6.0).abs() < 1e-12);
        assert_eq!(count_local_minima(&s), 1);
        assert_eq!(negative_fraction(&s), 0.0);
    }

    #[test]
    fn constant_surface_ties_and_plateaus() {
        let s = from_fn(grid25(), |_| 3.0);
        assert_eq!(locate_min(&s).0, [-2.0, -2.0]);
        assert_eq!(count_local_minima(&s), 0);
    }

    #[test]
    fn tied_bottom_counts_once() {
        // Minimum halfway between two nodes: the two lowest nodes tie exactly.
        let g = GridSpec::square(11).unwrap();
        let values = (0..121)
            .map(|k| {
                let (i, j) = ((k % 11) as f64, (k / 11) as f64);
                (2.0 * i - 11.0).powi(2) + (j - 5.0).powi(2)
            })
            .collect();
        let s = SurfaceGrid::new(g, values).unwrap();
        let lowest = s.min_max().0;
        assert_eq!(s.values.iter().filter(|&&v| v == lowest).count(), 2);
        assert_eq!(count_local_minima(&s), 1);

        // A raised plateau with a lower neighbour is not a minimum.
        let mut s = from_fn(g, |_| 1.0);
        s.values[60] = 0.0;
        s.values[0] = 0.5;
        s.values[1] = 0.5;
        s.values[2] = 0.4;
        assert_eq!(local_minima(&s), vec![2, 60]);
    }

    #[test]
    fn poisoned_node_is_the_minimum() {
        let mut s = from_fn(grid25(), |w| w[0] * w[0] + w[1] * w[1]);
        s.values[400] = -10.0;
        assert_eq!(locate_min(&s), (grid25().node_at(400), -10.0));
    }

    #[test]
    fn two_bowls_have_two_minima() {
        let bowl = |w: [f64; 2], p: [f64; 2]| (w[0] - p[0]).powi(2) + (w[1] - p[1]).powi(2);
        let s = from_fn(grid25(), |w| bowl(w, [-1.0, -1.0]).min(bowl(w, [1.0, 1.0])));
        assert_eq!(count_local_minima(&s), 2);
    }

    #[test]
    fn negative_fractions() {
        assert_eq!(negative_fraction(&from_fn(grid25(), |_| -1.0)), 1.0);
        let half = from_fn(GridSpec::square(2).unwrap(), |w| w[0]);
        assert_eq!(negative_fraction(&half), 0.5);
    }

    #[test]
    fn rmse_basics() {
        let a = from_fn(grid25(), |w| w[0] * w[1]);
        assert_eq!(surface_rmse(&a, &a).unwrap(), 0.0);
        assert!((surface_rmse(&a, &a.shifted(-0.75)).unwrap() - 0.75).abs() < 1e-12);
        let other = from_fn(GridSpec::square(5).unwrap(), |_| 0.0);
        assert!(surface_rmse(&a, &other).is_err());
    }

    #[test]
    fn surrogate_and_observation_sources() {
        let p = KernelParams::new(1.0).unwrap();
        let zero = Surrogate::new(vec![vec![0.0, 0.0]], vec![0.0], p, FitMode::F).unwrap();
        let s = evaluate_surface(SurfaceSource::Surrogate(&zero), &grid25()).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));

        let obs: Vec<LossObservation> = grid25()
            .nodes()
            .into_iter()
            .enumerate()
            .map(|(k, w)| LossObservation {
                w,
                value: k as f64,
                gradient: [0.0; 2],
                batch_size: 1,
            })
            .collect();
        let s = evaluate_surface(SurfaceSource::Observations(&obs), &grid25()).unwrap();
        assert_eq!(s.values, (0..625).map(|k| k as f64).collect::<Vec<_>>());
        let err = evaluate_surface(SurfaceSource::Observations(&obs[1..]), &grid25());
        assert!(matches!(err, Err(Error::Input(_))));
        let err = evaluate_surface(SurfaceSource::Observations(&obs), &GridSpec::square(25).map(|mut g| {
            g.upper = [3.0, 3.0];
            g
        }).unwrap());
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn report_fields() {
        let s = oracle_surface();
        let r = SurfaceReport::new(&s, Some(&s)).unwrap();
        assert!(r.is_well_behaved());
        assert_eq!(r.rmse_vs_reference, Some(0.0));
        assert_eq!(SurfaceReport::new(&s, None).unwrap().rmse_vs_reference, None);
    }
}
