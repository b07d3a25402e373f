//! Count simulation for fixed designs and streaming single-shot covariant
//! measurements.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{DesignKind, MeasurementDesign};
use crate::error::{Result, TomoError};
use crate::linalg::{self, c, CMatrix};
use crate::qstate::{self, DensityMatrix};

/// Probabilities below this are treated as an invalid state rather than round-off.
pub const NEGATIVE_PROBABILITY_TOL: f64 = 1e-9;

/// Outcome counts `N(o|s)`, setting-major, each setting observed `m` times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountsDataset {
    dim: usize,
    settings: usize,
    repetitions: u64,
    counts: Vec<u64>,
}

impl CountsDataset {
    pub fn new(dim: usize, settings: usize, counts: Vec<u64>) -> Result<Self> {
        if dim == 0 || settings == 0 {
            return Err(TomoError::InvalidSize("empty dataset".into()));
        }
        if counts.len() != dim * settings {
            return Err(TomoError::DimensionMismatch {
                expected: dim * settings,
                got: counts.len(),
            });
        }
        let repetitions: u64 = counts[..dim].iter().sum();
        for s in 1..settings {
            let total: u64 = counts[s * dim..(s + 1) * dim].iter().sum();
            if total != repetitions {
                return Err(TomoError::InvalidSize(format!(
                    "setting {s} has {total} repetitions, setting 0 has {repetitions}"
                )));
            }
        }
        if repetitions == 0 {
            return Err(TomoError::InvalidSize("no repetitions".into()));
        }
        Ok(Self {
            dim,
            settings,
            repetitions,
            counts,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_settings(&self) -> usize {
        self.settings
    }

    /// `m`, the repetitions of every setting.
    pub fn repetitions(&self) -> u64 {
        self.repetitions
    }

    /// `N = m·k`
    pub fn total(&self) -> u64 {
        self.repetitions * self.settings as u64
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, s: usize, o: usize) -> u64 {
        self.counts[s * self.dim + o]
    }

    pub fn frequencies(&self) -> FrequencyVector {
        let m = self.repetitions as f64;
        FrequencyVector {
            dim: self.dim,
            values: self.counts.iter().map(|&n| n as f64 / m).collect(),
        }
    }

    /// Sums the counts of datasets over the same design.
    pub fn pool(batches: &[CountsDataset]) -> Result<Self> {
        let first = batches
            .first()
            .ok_or_else(|| TomoError::InvalidSize("no batches to pool".into()))?;
        let mut counts = vec![0u64; first.counts.len()];
        for b in batches {
            if b.dim != first.dim || b.settings != first.settings {
                return Err(TomoError::DimensionMismatch {
                    expected: first.counts.len(),
                    got: b.counts.len(),
                });
            }
            for (acc, &n) in counts.iter_mut().zip(&b.counts) {
                *acc += n;
            }
        }
        Self::new(first.dim, first.settings, counts)
    }

    /// Writes `setting,outcome,count` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["setting", "outcome", "count"])?;
        for s in 0..self.settings {
            for o in 0..self.dim {
                w.write_record(&[s.to_string(), o.to_string(), self.count(s, o).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `setting,outcome,count` rows; missing cells count as zero.
    pub fn read_csv<R: Read>(reader: R, dim: usize, settings: usize) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["setting", "outcome", "count"] {
            return Err(TomoError::Parse(format!("unexpected header {headers:?}")));
        }
        let mut counts = vec![0u64; dim * settings];
        for record in r.deserialize() {
            let (s, o, n): (usize, usize, u64) = record?;
            if s >= settings || o >= dim {
                return Err(TomoError::Parse(format!("cell ({s}, {o}) out of range")));
            }
            counts[s * dim + o] += n;
        }
        Self::new(dim, settings, counts)
    }
}

/// Sidecar metadata written next to a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub d: usize,
    pub settings: usize,
    pub repetitions: u64,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DatasetMeta {
    pub fn describe(data: &CountsDataset, design: &MeasurementDesign) -> Self {
        let kind = match design.kind() {
            DesignKind::Pauli { .. } => "pauli",
            DesignKind::RandomBases => "random",
            DesignKind::Covariant => "covariant",
        };
        Self {
            d: data.dim(),
            settings: data.num_settings(),
            repetitions: data.repetitions(),
            kind: kind.into(),
            seed: design.seed(),
        }
    }
}

/// Empirical frequencies `f(o|s) = N(o|s)/m`, setting-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyVector {
    dim: usize,
    values: Vec<f64>,
}

impl FrequencyVector {
    /// Wraps raw values; every setting block must sum to one.
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(TomoError::InvalidSize(format!(
                "{} frequencies do not split into blocks of {dim}",
                values.len()
            )));
        }
        for (s, block) in values.chunks(dim).enumerate() {
            let total: f64 = block.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(TomoError::InvalidSize(format!(
                    "frequencies of setting {s} sum to {total}"
                )));
            }
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_settings(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn setting(&self, s: usize) -> &[f64] {
        &self.values[s * self.dim..(s + 1) * self.dim]
    }
}

/// Outcome probabilities with round-off negatives clamped and each setting renormalised.
pub fn outcome_probabilities(rho: &DensityMatrix, design: &MeasurementDesign) -> Result<Vec<f64>> {
    if rho.dim() != design.dim() {
        return Err(TomoError::DimensionMismatch {
            expected: design.dim(),
            got: rho.dim(),
        });
    }
    let d = design.dim();
    let mut probs = design.probabilities(rho.matrix());
    for block in probs.chunks_mut(d) {
        let mut clamped = false;
        for p in block.iter_mut() {
            if *p < -NEGATIVE_PROBABILITY_TOL {
                return Err(TomoError::StateValidity(format!("outcome probability {p:e}")));
            }
            if *p < 0.0 {
                *p = 0.0;
                clamped = true;
            }
        }
        if clamped {
            let total: f64 = block.iter().sum();
            block.iter_mut().for_each(|p| *p /= total);
        }
    }
    Ok(probs)
}

/// Draws `Multinomial(m, probs)` by sequential conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(m: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut remaining = m;
    let mut mass = 1.0f64;
    let last = probs.len() - 1;
    for (o, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if o == last {
            out[o] = remaining;
            break;
        }
        let conditional = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 1.0 };
        let draw = Binomial::new(remaining, conditional)
            .expect("conditional probability lies in [0, 1]")
            .sample(rng);
        out[o] = draw;
        remaining -= draw;
        mass -= p;
    }
    out
}

/// Each setting measured `m` times, outcomes multinomial per setting.
pub fn simulate_counts<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    design: &MeasurementDesign,
    m: u64,
    rng: &mut R,
) -> Result<CountsDataset> {
    if m == 0 {
        return Err(TomoError::InvalidSize("m must be positive".into()));
    }
    let d = design.dim();
    let probs = outcome_probabilities(rho, design)?;
    let mut counts = Vec::with_capacity(probs.len());
    for block in probs.chunks(d) {
        counts.extend(multinomial(m, block, rng));
    }
    CountsDataset::new(d, design.num_settings(), counts)
}

/// `n` single shots, each in its own Haar-random basis.
///
/// Returns the dataset (one count per setting) and the realised design.
pub fn covariant_samples<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    n: usize,
    rng: &mut R,
) -> Result<(CountsDataset, MeasurementDesign)> {
    if n == 0 {
        return Err(TomoError::InvalidSize("at least one sample is required".into()));
    }
    let d = rho.dim();
    if d < 2 {
        return Err(TomoError::InvalidDimension(d));
    }
    let mut bases = Vec::with_capacity(n);
    let mut counts = vec![0u64; n * d];
    for s in 0..n {
        let u = qstate::haar_unitary(d, rng)?;
        let probs = outcome_probabilities_single(rho, &u)?;
        let mut draw: f64 = rng.random();
        let mut outcome = d - 1;
        for (o, p) in probs.iter().enumerate() {
            if draw < *p {
                outcome = o;
                break;
            }
            draw -= p;
        }
        counts[s * d + outcome] = 1;
        bases.push(u);
    }
    let design = MeasurementDesign::from_bases(DesignKind::Covariant, bases)?;
    Ok((CountsDataset::new(d, n, counts)?, design))
}

fn outcome_probabilities_single(rho: &DensityMatrix, u: &CMatrix) -> Result<Vec<f64>> {
    let d = rho.dim();
    let mu = rho.matrix() * u;
    let mut probs: Vec<f64> = (0..d).map(|o| u.column(o).dotc(&mu.column(o)).re).collect();
    if let Some(&low) = probs.iter().find(|&&p| p < -NEGATIVE_PROBABILITY_TOL) {
        return Err(TomoError::StateValidity(format!("outcome probability {low:e}")));
    }
    probs.iter_mut().for_each(|p| *p = p.max(0.0));
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// Sufficient statistic of a covariant single-shot experiment for linear
/// estimation: the sum of observed projectors `Σ_j |ψ_j⟩⟨ψ_j|`.
#[derive(Debug, Clone)]
pub struct CovariantSummary {
    pub projector_sum: CMatrix,
    pub samples: usize,
}

impl CovariantSummary {
    /// Summary of a literal covariant dataset.
    pub fn from_dataset(data: &CountsDataset, design: &MeasurementDesign) -> Result<Self> {
        let weights: Vec<f64> = data.counts().iter().map(|&n| n as f64).collect();
        Ok(Self {
            projector_sum: design.weighted_projector_sum(&weights)?,
            samples: data.total() as usize,
        })
    }
}

const STREAM_BATCH: usize = 4096;

/// Streams `n` covariant single-shot outcomes without materialising the bases.
///
/// The observed vector of a covariant measurement has density proportional to
/// `⟨ψ|ρ|ψ⟩` on the unit sphere. In the eigenframe of `ρ` this is the mixture
/// over `i` (weight `λ_i`) of densities proportional to `|ψ_i|²`, which is the
/// direction of a standard complex Gaussian whose `i`-th modulus squared is
/// drawn from `Gamma(2, 1)` instead of `Exp(1)`.
pub fn stream_covariant<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    n: usize,
    rng: &mut R,
) -> Result<CovariantSummary> {
    if n == 0 {
        return Err(TomoError::InvalidSize("at least one sample is required".into()));
    }
    let d = rho.dim();
    let spectrum = rho.spectrum();
    let weights: Vec<f64> = spectrum.values.iter().map(|v| v.max(0.0)).collect();
    let mut cumulative = Vec::with_capacity(d);
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cumulative.push(acc);
    }
    let gamma = Gamma::new(2.0, 1.0).expect("valid gamma parameters");
    let scale = std::f64::consts::FRAC_1_SQRT_2;

    // columns are samples stacked as (Re ψ; Im ψ)
    let mut block = DMatrix::<f64>::zeros(2 * d, STREAM_BATCH);
    let mut gram = DMatrix::<f64>::zeros(2 * d, 2 * d);
    let mut done = 0;
    while done < n {
        let rows = STREAM_BATCH.min(n - done);
        if rows < block.ncols() {
            block = DMatrix::zeros(2 * d, rows);
        }
        for row in 0..rows {
            let u = rng.random::<f64>() * acc;
            let chosen = cumulative.partition_point(|&c| c <= u).min(d - 1);
            let mut norm_sq = 0.0;
            for j in 0..d {
                let (re, im) = if j == chosen {
                    let modulus_sq: f64 = gamma.sample(rng);
                    let radius = modulus_sq.sqrt();
                    let phase = rng.random::<f64>() * std::f64::consts::TAU;
                    (radius * phase.cos(), radius * phase.sin())
                } else {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    (re * scale, im * scale)
                };
                block[(j, row)] = re;
                block[(d + j, row)] = im;
                norm_sq += re * re + im * im;
            }
            let inv = 1.0 / norm_sq.sqrt();
            block.column_mut(row).scale_mut(inv);
        }
        gram.gemm(1.0, &block, &block.transpose(), 1.0);
        done += rows;
    }

    let frame_sum = CMatrix::from_fn(d, d, |j, k| {
        c(
            gram[(j, k)] + gram[(d + j, d + k)],
            gram[(d + j, k)] - gram[(j, d + k)],
        )
    });
    let g = &spectrum.basis;
    Ok(CovariantSummary {
        projector_sum: linalg::hermitize(&(g * frame_sum * g.adjoint())),
        samples: n,
    })
}
