//! Functional time encoding built from learnable cos/sin frequencies, the
//! sinusoidal positional baseline it replaces, and an empirical check that
//! the encoding's inner product converges to its translation-invariant kernel.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape, Tensor};
use crate::error::{Error, Result};
use crate::init::glorot_uniform;
use crate::rng::rng_for;

/// Maps a timespan to `(1/sqrt k) [cos w_1 t, sin w_1 t, ..., cos w_k t, sin w_k t]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeEncoder {
    frequencies: Vec<f64>,
}

impl TimeEncoder {
    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::Contract("time encoder needs at least one frequency".into()));
        }
        Ok(Self { frequencies })
    }

    /// Geometric ladder `w_i = alpha^{-(i-1)/k}` with `alpha = max(10 * t_max, 1)`.
    /// `output_dim` must be even.
    pub fn ladder(output_dim: usize, t_max: f64) -> Result<Self> {
        if output_dim == 0 || !output_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "time encoding dimension must be even and positive, got {output_dim}"
            )));
        }
        let k = output_dim / 2;
        let alpha = (10.0 * t_max).max(1.0);
        let frequencies = (0..k)
            .map(|i| alpha.powf(-(i as f64) / k as f64))
            .collect();
        Self::new(frequencies)
    }

    /// `k` frequencies drawn i.i.d. from the standard normal.
    pub fn standard_normal(k: usize, rng: &mut impl Rng) -> Result<Self> {
        Self::new((0..k).map(|_| rng.sample(StandardNormal)).collect())
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn frequencies_mut(&mut self) -> &mut [f64] {
        &mut self.frequencies
    }

    pub fn num_frequencies(&self) -> usize {
        self.frequencies.len()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.frequencies.len()
    }

    fn scale(&self) -> f64 {
        (1.0 / self.frequencies.len() as f64).sqrt()
    }

    pub fn encode(&self, delta_t: f64) -> Vec<f64> {
        let s = self.scale();
        let mut out = Vec::with_capacity(self.output_dim());
        for w in &self.frequencies {
            let (sin, cos) = (w * delta_t).sin_cos();
            out.push(s * cos);
            out.push(s * sin);
        }
        out
    }

    /// Inner product of the two encodings.
    pub fn kernel_estimate(&self, t1: f64, t2: f64) -> f64 {
        self.encode(t1)
            .iter()
            .zip(self.encode(t2))
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Encodes every timespan in `deltas` as one row, differentiable with
    /// respect to `omega` (a `1 x k` tensor holding the frequencies).
    pub fn encode_on_tape(tape: &mut Tape, omega: Tensor, deltas: &[f64]) -> Result<Tensor> {
        let k = tape.shape(omega).1;
        let dt = tape.constant(Matrix::col_vector(deltas.to_vec()));
        let phase = tape.matmul(dt, omega)?;
        let cos = tape.cos(phase);
        let sin = tape.sin(phase);
        let both = tape.interleave_cols(cos, sin)?;
        Ok(tape.scale(both, (1.0 / k as f64).sqrt()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionalKind {
    /// Transformer sinusoid table, never updated.
    Fixed,
    /// One free vector per position.
    Learnable,
}

impl std::fmt::Display for PositionalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PositionalKind::Fixed => "fixed",
            PositionalKind::Learnable => "learnable",
        })
    }
}

impl std::str::FromStr for PositionalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(PositionalKind::Fixed),
            "learnable" => Ok(PositionalKind::Learnable),
            other => Err(Error::Config(format!("unknown positional kind {other:?} (fixed, learnable)"))),
        }
    }
}

/// Position vectors indexed by a neighbor's chronological rank (0 = oldest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionalEncoder {
    kind: PositionalKind,
    table: Matrix,
}

impl PositionalEncoder {
    pub fn sinusoidal(max_positions: usize, dim: usize) -> Self {
        let mut table = Matrix::zeros(max_positions, dim);
        for pos in 0..max_positions {
            for c in 0..dim {
                let pair = (c / 2) as f64;
                let angle = pos as f64 / 10_000f64.powf(2.0 * pair / dim as f64);
                table.set(pos, c, if c % 2 == 0 { angle.sin() } else { angle.cos() });
            }
        }
        Self {
            kind: PositionalKind::Fixed,
            table,
        }
    }

    pub fn learnable(max_positions: usize, dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            kind: PositionalKind::Learnable,
            table: glorot_uniform(max_positions, dim, rng),
        }
    }

    pub fn from_table(kind: PositionalKind, table: Matrix) -> Self {
        Self { kind, table }
    }

    pub fn kind(&self) -> PositionalKind {
        self.kind
    }

    pub fn max_positions(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }

    pub fn table_mut(&mut self) -> &mut Matrix {
        &mut self.table
    }

    pub fn lookup(&self, rank: usize) -> Result<&[f64]> {
        if rank >= self.max_positions() {
            return Err(Error::Lookup(format!(
                "position {rank} outside table of {} positions",
                self.max_positions()
            )));
        }
        Ok(self.table.row(rank))
    }
}

/// Spectral distributions whose kernel has a closed form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralDistribution {
    /// `K(t1, t2) = exp(-(t1 - t2)^2 / 2)`, second moment 1.
    StandardNormal,
}

impl SpectralDistribution {
    pub fn kernel(&self, delta: f64) -> f64 {
        match self {
            SpectralDistribution::StandardNormal => (-0.5 * delta * delta).exp(),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            SpectralDistribution::StandardNormal => 1.0,
        }
    }

    fn sample_encoder(&self, k: usize, rng: &mut impl Rng) -> Result<TimeEncoder> {
        match self {
            SpectralDistribution::StandardNormal => TimeEncoder::standard_normal(k, rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelCheckReport {
    /// Number of sampled frequencies `d`.
    pub sample_count: usize,
    /// Grid points per axis on `[0, t_max]`.
    pub grid_size: usize,
    pub t_max: f64,
    /// Sup-over-grid absolute error, averaged over trials.
    pub sup_error: f64,
    /// Mean-over-grid absolute error, averaged over trials.
    pub mean_error: f64,
    pub oracle_second_moment: f64,
    pub trial_sup_errors: Vec<f64>,
}

/// Grid error of the sampled kernel estimate against the analytic kernel,
/// for each frequency count in `k_values`.
pub fn kernel_convergence_check(
    distribution: SpectralDistribution,
    k_values: &[usize],
    t_max: f64,
    grid_size: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<KernelCheckReport>> {
    kernel_grid_check(
        |k, rng| distribution.sample_encoder(k, rng),
        distribution,
        k_values,
        t_max,
        grid_size,
        trials,
        seed,
    )
}

/// Same as [`kernel_convergence_check`] with the encoder sampler supplied by the caller.
pub(crate) fn kernel_grid_check(
    sampler: impl Fn(usize, &mut rand_chacha::ChaCha8Rng) -> Result<TimeEncoder>,
    distribution: SpectralDistribution,
    k_values: &[usize],
    t_max: f64,
    grid_size: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<KernelCheckReport>> {
    if k_values.is_empty() || k_values.windows(2).any(|w| w[0] > w[1]) || k_values[0] == 0 {
        return Err(Error::Contract(
            "k_values must be non-empty, positive and ascending".into(),
        ));
    }
    if grid_size < 2 || trials == 0 {
        return Err(Error::Contract("need grid_size >= 2 and trials >= 1".into()));
    }
    let grid: Vec<f64> = (0..grid_size)
        .map(|i| t_max * i as f64 / (grid_size - 1) as f64)
        .collect();

    k_values
        .iter()
        .map(|&k| {
            let mut sups = Vec::with_capacity(trials);
            let mut means = Vec::with_capacity(trials);
            for trial in 0..trials {
                let mut rng = rng_for(seed, &[k as u64, trial as u64]);
                let enc = sampler(k, &mut rng)?;
                let codes: Vec<Vec<f64>> = grid.iter().map(|&t| enc.encode(t)).collect();
                let mut sup = 0.0f64;
                let mut total = 0.0;
                for (i, a) in codes.iter().enumerate() {
                    for (j, b) in codes.iter().enumerate() {
                        let est: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                        let err = (est - distribution.kernel(grid[i] - grid[j])).abs();
                        sup = sup.max(err);
                        total += err;
                    }
                }
                sups.push(sup);
                means.push(total / (grid_size * grid_size) as f64);
            }
            Ok(KernelCheckReport {
                sample_count: k,
                grid_size,
                t_max,
                sup_error: sups.iter().sum::<f64>() / trials as f64,
                mean_error: means.iter().sum::<f64>() / trials as f64,
                oracle_second_moment: distribution.second_moment(),
                trial_sup_errors: sups,
            })
        })
        .collect()
}

pub fn write_kernel_table(reports: &[KernelCheckReport], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{:>8} {:>12} {:>12}", "k", "sup_error", "mean_error")?;
    for r in reports {
        writeln!(out, "{:>8} {:>12.6} {:>12.6}", r.sample_count, r.sup_error, r.mean_error)?;
    }
    Ok(())
}

pub fn write_kernel_csv(reports: &[KernelCheckReport], out: impl Write) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "sup_error", "mean_error"])?;
    for r in reports {
        w.write_record([
            r.sample_count.to_string(),
            r.sup_error.to_string(),
            r.mean_error.to_string(),
        ])?;
    }
    w.flush()
}
