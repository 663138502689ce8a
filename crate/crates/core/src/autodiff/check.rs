//! Central finite-difference verification of tape gradients.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;
use super::tape::{Tape, Tensor};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub tolerance: f64,
    /// Central-difference step.
    pub step: f64,
    /// Coordinates checked per parameter; `None` checks every coordinate.
    pub coords_per_param: Option<usize>,
    /// Denominator floor for the relative error, so coordinates whose true
    /// gradient is zero are judged on absolute error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            step: 1e-5,
            coords_per_param: Some(32),
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter index, coordinate)` where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

fn evaluate<F>(f: &F, params: &[Matrix]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
{
    let mut tape = Tape::new();
    let vars: Vec<Tensor> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    Ok(tape.value(loss).get(0, 0))
}

/// Compares analytic gradients of the scalar `f` against central differences.
pub fn grad_check<F>(f: F, params: &[Matrix], tolerance: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
{
    grad_check_with(
        f,
        params,
        &GradCheckConfig {
            tolerance,
            seed,
            ..GradCheckConfig::default()
        },
    )
}

pub fn grad_check_with<F>(f: F, params: &[Matrix], config: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
{
    let mut tape = Tape::new();
    let vars: Vec<Tensor> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Matrix> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            tape.grad(v)
                .cloned()
                .unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols()))
        })
        .collect();
    drop(tape);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut work: Vec<Matrix> = params.to_vec();
    let mut max_err = 0.0f64;
    let mut worst = None;
    let mut checked = 0;

    for (pi, grad) in analytic.iter().enumerate() {
        let n = params[pi].len();
        let coords: Vec<usize> = match config.coords_per_param {
            Some(limit) if limit < n => index::sample(&mut rng, n, limit).into_vec(),
            _ => (0..n).collect(),
        };
        for c in coords {
            let original = params[pi].data()[c];
            work[pi].data_mut()[c] = original + config.step;
            let plus = evaluate(&f, &work)?;
            work[pi].data_mut()[c] = original - config.step;
            let minus = evaluate(&f, &work)?;
            work[pi].data_mut()[c] = original;

            let numeric = (plus - minus) / (2.0 * config.step);
            let a = grad.data()[c];
            let denom = a.abs().max(numeric.abs()).max(config.floor);
            let err = (a - numeric).abs() / denom;
            checked += 1;
            if err > max_err || worst.is_none() {
                max_err = max_err.max(err);
                worst = Some((pi, c));
            }
        }
    }

    Ok(GradCheckReport {
        max_relative_error: max_err,
        worst,
        checked,
        tolerance: config.tolerance,
        passed: max_err < config.tolerance,
    })
}
