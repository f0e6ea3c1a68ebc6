//! Function-only (F), gradient-enhanced (FG) and gradient-only (G) Gaussian RBF
//! surrogates of a sampled loss surface.
//!
//! A surrogate is `s(w) = offset + sum_j alpha_j phi(|w - c_j|)`. Centres are
//! drawn once per fit from the observation sites, then every shape parameter of
//! a log-spaced sweep is fitted by least squares against the mode's stacked
//! residual. The candidate with the smallest training MSE wins; ties go to the
//! smaller shape.
//!
//! Gradient-only fits are blind to constant offsets, so [`translate_to_zero`]
//! pins their lowest value over an evaluation grid to exactly zero. Their
//! expansion is also measured relative to the first centre, which only moves a
//! constant into the offset: with flat kernels the coefficients grow like
//! `eps^-4` and the plain sum would cancel away every significant digit.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{
    assemble_gradient_matrix, assemble_value_matrix, distance, kernel_difference, kernel_gradient, kernel_value,
    KernelParams, Matrix,
};
use crate::lstsq::solve_least_squares;
use crate::rng::sample_without_replacement;

/// Which observed quantities enter the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FitMode {
    /// Loss values only.
    #[serde(rename = "f")]
    F,
    /// Loss values stacked on top of gradients, unweighted.
    #[serde(rename = "fg")]
    FG,
    /// Gradients only.
    #[serde(rename = "g")]
    G,
}

impl FitMode {
    pub const ALL: [FitMode; 3] = [FitMode::F, FitMode::FG, FitMode::G];

    pub fn as_str(&self) -> &'static str {
        match self {
            FitMode::F => "f",
            FitMode::FG => "fg",
            FitMode::G => "g",
        }
    }

    fn uses_values(self) -> bool {
        matches!(self, FitMode::F | FitMode::FG)
    }
}

impl fmt::Display for FitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f" => Ok(FitMode::F),
            "fg" | "f-g" => Ok(FitMode::FG),
            "g" => Ok(FitMode::G),
            other => Err(Error::Input(format!("unknown fit mode `{other}` (expected f, fg or g)"))),
        }
    }
}

/// One sampled point of the mini-batch loss surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossObservation {
    pub w: [f64; 2],
    pub value: f64,
    pub gradient: [f64; 2],
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRecipe {
    pub mode: FitMode,
    pub n_centres: usize,
    pub shape_lo: f64,
    pub shape_hi: f64,
    pub shape_count: usize,
    /// Observations required per basis function.
    pub basis_ratio: usize,
}

impl FitRecipe {
    pub fn new(mode: FitMode, n_centres: usize) -> Self {
        Self {
            mode,
            n_centres,
            shape_lo: 1e-4,
            shape_hi: 1e5,
            shape_count: 121,
            basis_ratio: 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shape_lo.is_finite() && self.shape_lo > 0.0) {
            return Err(Error::Input(format!("shape_lo must be positive, got {}", self.shape_lo)));
        }
        if !(self.shape_hi.is_finite() && self.shape_lo < self.shape_hi) {
            return Err(Error::Input(format!(
                "shape_hi ({}) must be finite and exceed shape_lo ({})",
                self.shape_hi, self.shape_lo
            )));
        }
        if self.shape_count < 2 {
            return Err(Error::Input(format!("shape_count must be at least 2, got {}", self.shape_count)));
        }
        if self.n_centres == 0 {
            return Err(Error::Input("at least one centre is required".into()));
        }
        if self.basis_ratio == 0 {
            return Err(Error::Input("basis_ratio must be at least 1".into()));
        }
        Ok(())
    }

    /// Enforce `n_centres * basis_ratio <= observations`.
    pub fn check_ratio(&self, observations: usize) -> Result<()> {
        let required = self.n_centres.saturating_mul(self.basis_ratio);
        if required > observations {
            return Err(Error::BasisRatio {
                centres: self.n_centres,
                ratio: self.basis_ratio,
                observations,
                required,
                max_centres: observations / self.basis_ratio.max(1),
            });
        }
        Ok(())
    }
}

/// Fitted RBF surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub centres: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub params: KernelParams,
    pub mode: FitMode,
    pub offset: f64,
}

impl Surrogate {
    pub fn new(centres: Vec<Vec<f64>>, coefficients: Vec<f64>, params: KernelParams, mode: FitMode) -> Result<Self> {
        if centres.len() != coefficients.len() {
            return Err(Error::Input(format!(
                "{} centres but {} coefficients",
                centres.len(),
                coefficients.len()
            )));
        }
        Ok(Self {
            centres,
            coefficients,
            params,
            mode,
            offset: 0.0,
        })
    }

    pub fn shape(&self) -> f64 {
        self.params.shape()
    }

    /// The kernel expansion without the offset. For G it is zero at the first centre.
    fn expansion(&self, w: &[f64]) -> f64 {
        let terms = self.centres.iter().zip(&self.coefficients);
        match (self.mode, self.centres.first()) {
            (FitMode::G, Some(anchor)) => terms
                .map(|(c, a)| a * kernel_difference(w, anchor, c, self.params))
                .sum(),
            _ => terms.map(|(c, a)| a * kernel_value(distance(w, c), self.params)).sum(),
        }
    }

    pub fn evaluate(&self, w: &[f64]) -> f64 {
        self.offset + self.expansion(w)
    }

    pub fn evaluate_gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        for (c, a) in self.centres.iter().zip(&self.coefficients) {
            for (gk, dk) in g.iter_mut().zip(kernel_gradient(w, c, self.params)) {
                *gk += a * dk;
            }
        }
        g
    }
}

/// `evaluate` as a free function.
pub fn evaluate(surrogate: &Surrogate, w: &[f64]) -> f64 {
    surrogate.evaluate(w)
}

pub fn evaluate_gradient(surrogate: &Surrogate, w: &[f64]) -> Vec<f64> {
    surrogate.evaluate_gradient(w)
}

/// Log10-equispaced shape parameters from `shape_lo` to `shape_hi` inclusive.
pub fn shape_candidates(recipe: &FitRecipe) -> Vec<f64> {
    let lo = recipe.shape_lo.log10();
    let hi = recipe.shape_hi.log10();
    let last = recipe.shape_count - 1;
    (0..recipe.shape_count)
        .map(|k| match k {
            0 => recipe.shape_lo,
            k if k == last => recipe.shape_hi,
            k => 10f64.powf(lo + k as f64 * (hi - lo) / last as f64),
        })
        .collect()
}

/// Draw `n_centres` distinct observation sites uniformly without replacement.
pub fn sample_centres<R: Rng + ?Sized>(
    rng: &mut R,
    observations: &[LossObservation],
    recipe: &FitRecipe,
) -> Result<Vec<Vec<f64>>> {
    recipe.validate()?;
    recipe.check_ratio(observations.len())?;
    Ok(sample_without_replacement(rng, observations.len(), recipe.n_centres)
        .into_iter()
        .map(|i| observations[i].w.to_vec())
        .collect())
}

fn sites(observations: &[LossObservation]) -> Vec<Vec<f64>> {
    observations.iter().map(|o| o.w.to_vec()).collect()
}

/// Least-squares system for one mode: values (F), gradients point-major (G), or
/// values stacked above gradients (FG).
pub fn build_system(
    observations: &[LossObservation],
    centres: &[Vec<f64>],
    params: KernelParams,
    mode: FitMode,
) -> Result<(Matrix, Vec<f64>)> {
    let points = sites(observations);
    let values = || observations.iter().map(|o| o.value);
    let gradients = || observations.iter().flat_map(|o| o.gradient);
    match mode {
        FitMode::F => Ok((
            assemble_value_matrix(&points, centres, params)?,
            values().collect(),
        )),
        FitMode::G => Ok((
            assemble_gradient_matrix(&points, centres, params)?,
            gradients().collect(),
        )),
        FitMode::FG => {
            let a = assemble_value_matrix(&points, centres, params)?
                .vstack(&assemble_gradient_matrix(&points, centres, params)?)?;
            Ok((a, values().chain(gradients()).collect()))
        }
    }
}

/// Mean squared residual of `a * alpha + offset - b`, where the offset applies
/// only to the first `value_rows` rows.
fn residual_mse(a: &Matrix, b: &[f64], alpha: &[f64], value_rows: usize, offset: f64) -> f64 {
    let pred = a.mul_vec(alpha);
    let sum: f64 = pred
        .iter()
        .zip(b)
        .enumerate()
        .map(|(i, (p, y))| {
            let shift = if i < value_rows { offset } else { 0.0 };
            let r = p + shift - y;
            r * r
        })
        .sum();
    sum / b.len() as f64
}

fn value_rows(mode: FitMode, n: usize) -> usize {
    if mode.uses_values() {
        n
    } else {
        0
    }
}

/// Training MSE of `surrogate` against the stacked residual of `mode`. Gradient
/// rows never see the offset.
pub fn training_mse(surrogate: &Surrogate, observations: &[LossObservation], mode: FitMode) -> Result<f64> {
    let (a, b) = build_system(observations, &surrogate.centres, surrogate.params, mode)?;
    Ok(residual_mse(
        &a,
        &b,
        &surrogate.coefficients,
        value_rows(mode, observations.len()),
        surrogate.offset,
    ))
}

/// Outcome of one shape candidate in a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub shape: f64,
    pub training_mse: Option<f64>,
    pub failure: Option<String>,
}

/// Selected surrogate plus the full sweep record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub surrogate: Surrogate,
    pub training_mse: f64,
    pub candidates: Vec<Candidate>,
}

impl Fit {
    pub fn skipped(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.training_mse.is_none())
    }
}

fn fit_candidate(
    observations: &[LossObservation],
    centres: &[Vec<f64>],
    shape: f64,
    mode: FitMode,
) -> Result<(Vec<f64>, f64)> {
    let params = KernelParams::new(shape)?;
    let (a, b) = build_system(observations, centres, params, mode)?;
    let alpha = solve_least_squares(&a, &b)?;
    let mse = residual_mse(&a, &b, &alpha, value_rows(mode, observations.len()), 0.0);
    if !mse.is_finite() {
        return Err(Error::Numerical(format!("training MSE is {mse}")));
    }
    Ok((alpha, mse))
}

/// Run the shape sweep against fixed centres.
pub fn fit_with_centres(
    observations: &[LossObservation],
    centres: Vec<Vec<f64>>,
    recipe: &FitRecipe,
) -> Result<Fit> {
    recipe.validate()?;
    if observations.is_empty() {
        return Err(Error::Input("no observations to fit".into()));
    }
    if centres.is_empty() {
        return Err(Error::Input("no centres to fit".into()));
    }
    let mode = recipe.mode;
    let results: Vec<(f64, Result<(Vec<f64>, f64)>)> = shape_candidates(recipe)
        .into_par_iter()
        .map(|shape| (shape, fit_candidate(observations, &centres, shape, mode)))
        .collect();

    // Candidates are in increasing shape order, so strict `<` keeps the smaller shape on ties.
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut candidates = Vec::with_capacity(results.len());
    for (shape, outcome) in results {
        match outcome {
            Ok((alpha, mse)) => {
                candidates.push(Candidate {
                    shape,
                    training_mse: Some(mse),
                    failure: None,
                });
                if best.as_ref().is_none_or(|(_, _, m)| mse < *m) {
                    best = Some((shape, alpha, mse));
                }
            }
            Err(e) => candidates.push(Candidate {
                shape,
                training_mse: None,
                failure: Some(e.to_string()),
            }),
        }
    }

    let Some((shape, alpha, mse)) = best else {
        return Err(Error::FitFailure {
            skipped: candidates
                .into_iter()
                .map(|c| (c.shape, c.failure.unwrap_or_default()))
                .collect(),
        });
    };
    Ok(Fit {
        surrogate: Surrogate::new(centres, alpha, KernelParams::new(shape)?, mode)?,
        training_mse: mse,
        candidates,
    })
}

/// Sample centres once, then sweep the shape parameter and keep the lowest training MSE.
pub fn fit_surrogate<R: Rng + ?Sized>(
    observations: &[LossObservation],
    recipe: &FitRecipe,
    rng: &mut R,
) -> Result<Fit> {
    let centres = sample_centres(rng, observations, recipe)?;
    fit_with_centres(observations, centres, recipe)
}

/// Shift a gradient-only surrogate so its minimum over `points` is exactly zero.
/// F and FG surrogates are returned unchanged.
pub fn translate_to_zero<P: AsRef<[f64]>>(surrogate: &Surrogate, points: &[P]) -> Result<Surrogate> {
    if points.is_empty() {
        return Err(Error::Input("translation grid is empty".into()));
    }
    if surrogate.mode != FitMode::G {
        return Ok(surrogate.clone());
    }
    let lowest = points
        .iter()
        .map(|p| surrogate.expansion(p.as_ref()))
        .fold(f64::INFINITY, f64::min);
    // Setting offset = -min(expansion) keeps `offset + expansion` exactly 0 at the
    // minimizing node and nonnegative elsewhere, whatever the previous offset was.
    Ok(Surrogate {
        offset: -lowest,
        ..surrogate.clone()
    })
}
