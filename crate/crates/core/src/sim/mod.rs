//! Synthetic labeled radiomic datasets matching target moments, with
//! controllable class-separation difficulty.
//!
//! The generation pipeline: (a) sample correlated Gaussians from the
//! (adjusted) correlation matrix, (b) push each variable through a cubic
//! transform fitted to its target skewness/kurtosis, (c) rescale each
//! variable affinely to its target range, (d) assign label 1 to a random
//! half of the samples, (e) shift the features of the separated ROIs by
//! `-+ mean/theta` per class, (f) add Gaussian observation noise.

pub mod fleishman;
pub mod linalg;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Dataset, FeatureMap};
use crate::error::{Error, Result};
use fleishman::Coefficients;

/// Correlation target: one full D x D matrix over all variables, or one
/// F x F within-ROI block shared across ROIs (ROIs then independent).
#[derive(Debug, Clone)]
pub enum CorrelationSpec {
    Full(Array2<f64>),
    PerRoiBlock(Array2<f64>),
}

/// Target moments per variable (variables are (roi, feature) cells in
/// roi-major order, D = n_roi * n_feat).
#[derive(Debug, Clone)]
pub struct MomentSpec {
    pub n_roi: usize,
    pub n_feat: usize,
    pub correlation: CorrelationSpec,
    /// Length D.
    pub skewness: Vec<f64>,
    /// Plain kurtosis (3 = Gaussian), length D.
    pub kurtosis: Vec<f64>,
    /// Per-variable (min, max), length D.
    pub ranges: Vec<(f64, f64)>,
}

impl MomentSpec {
    pub fn n_vars(&self) -> usize {
        self.n_roi * self.n_feat
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.n_vars();
        if self.skewness.len() != d || self.kurtosis.len() != d || self.ranges.len() != d {
            return Err(Error::Simulation(format!(
                "moment vectors must have length {d}"
            )));
        }
        for (i, (&s, &k)) in self.skewness.iter().zip(&self.kurtosis).enumerate() {
            if k < s * s + 1.0 {
                return Err(Error::Simulation(format!(
                    "variable {i}: kurtosis {k} < skewness^2 + 1 = {}",
                    s * s + 1.0
                )));
            }
        }
        for (i, &(lo, hi)) in self.ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::Simulation(format!("variable {i}: bad range ({lo}, {hi})")));
            }
        }
        let corr = match &self.correlation {
            CorrelationSpec::Full(m) => {
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::Simulation(format!(
                        "full correlation must be {d}x{d}"
                    )));
                }
                m
            }
            CorrelationSpec::PerRoiBlock(m) => {
                if m.nrows() != self.n_feat || m.ncols() != self.n_feat {
                    return Err(Error::Simulation(format!(
                        "block correlation must be {0}x{0}",
                        self.n_feat
                    )));
                }
                m
            }
        };
        for i in 0..corr.nrows() {
            if (corr[(i, i)] - 1.0).abs() > 1e-8 {
                return Err(Error::Simulation(format!(
                    "correlation diagonal entry {i} is {}, expected 1",
                    corr[(i, i)]
                )));
            }
            for j in 0..corr.ncols() {
                if (corr[(i, j)] - corr[(j, i)]).abs() > 1e-8 {
                    return Err(Error::Simulation("correlation matrix not symmetric".into()));
                }
            }
        }
        let (eigenvalues, _) = linalg::jacobi_eigen(corr);
        if eigenvalues.iter().any(|&l| l < -1e-8) {
            return Err(Error::Simulation(format!(
                "correlation matrix not PSD (min eigenvalue {:.3e})",
                eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        Ok(())
    }
}

/// Generation controls. `theta` scales the class separation shift
/// `mean/theta`: small theta separates the classes strongly (easy task).
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_samples: usize,
    pub theta: f64,
    pub separated_rois: Vec<usize>,
    pub noise_sd: f64,
    pub seed: u64,
}

impl SimConfig {
    fn validate(&self, n_roi: usize) -> Result<()> {
        if self.n_samples < 2 || !self.n_samples.is_multiple_of(2) {
            return Err(Error::Simulation(format!(
                "n_samples must be even and >= 2, got {}",
                self.n_samples
            )));
        }
        if self.theta <= 0.0 {
            return Err(Error::Simulation(format!("theta must be > 0, got {}", self.theta)));
        }
        if self.separated_rois.is_empty() {
            return Err(Error::Simulation("separated_rois must be non-empty".into()));
        }
        if let Some(&bad) = self.separated_rois.iter().find(|&&r| r >= n_roi) {
            return Err(Error::Simulation(format!(
                "separated roi {bad} out of range (n_roi = {n_roi})"
            )));
        }
        if self.noise_sd < 0.0 {
            return Err(Error::Simulation("noise_sd must be >= 0".into()));
        }
        Ok(())
    }
}

fn moments(samples: &[f64]) -> (f64, f64, f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &x in samples {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    (mean, m2 / n, m3 / n, m4 / n)
}

/// Sample skewness `m3 / m2^(3/2)` and plain kurtosis `m4 / m2^2` of a slice.
pub fn sample_skew_kurt(samples: &[f64]) -> (f64, f64) {
    let (_, m2, m3, m4) = moments(samples);
    if m2 <= 1e-300 {
        return (0.0, 3.0);
    }
    (m3 / m2.powf(1.5), m4 / (m2 * m2))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 1e-300 || vb <= 1e-300 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Estimated moments plus any zero-variance warnings.
#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub spec: MomentSpec,
    /// Variable indices whose correlation rows were zeroed.
    pub constant_variables: Vec<usize>,
    /// Variable indices whose kurtosis was raised into the representable
    /// region of the cubic transform (e.g. near-two-point samples).
    pub clipped_kurtosis: Vec<usize>,
}

/// Smallest kurtosis the cubic-transform family can represent at a given
/// skewness, with a small safety margin.
fn representable_kurtosis_floor(skew: f64) -> f64 {
    (1.9 + 1.78 * skew * skew).max(skew * skew + 1.0)
}

/// Estimate per-variable skewness, kurtosis and ranges plus a within-ROI
/// F x F correlation block pooled across ROIs.
pub fn estimate_moments(d: &Dataset) -> Result<MomentEstimate> {
    let m = d.n_subjects();
    if m < 3 {
        return Err(Error::Simulation(format!(
            "moment estimation needs >= 3 subjects, got {m}"
        )));
    }
    let (n_roi, n_feat) = (d.n_roi(), d.n_feat());
    let n_vars = n_roi * n_feat;
    let mut skewness = Vec::with_capacity(n_vars);
    let mut kurtosis = Vec::with_capacity(n_vars);
    let mut ranges = Vec::with_capacity(n_vars);
    let mut constant_variables = Vec::new();
    let mut clipped_kurtosis = Vec::new();
    for r in 0..n_roi {
        for c in 0..n_feat {
            let samples: Vec<f64> = d.maps().iter().map(|map| map.values()[(r, c)]).collect();
            let (_, m2, _, _) = moments(&samples);
            let (s, k) = sample_skew_kurt(&samples);
            if m2 <= 1e-300 {
                constant_variables.push(r * n_feat + c);
            }
            // clip into the generable region (near-two-point samples can put
            // the raw kurtosis below what the cubic transform reaches)
            let floor = representable_kurtosis_floor(s);
            if k < floor {
                clipped_kurtosis.push(r * n_feat + c);
            }
            skewness.push(s);
            kurtosis.push(k.max(floor));
            let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            ranges.push((lo, hi));
        }
    }
    // within-ROI correlation pooled over (subject, roi) observations
    let mut block = Array2::<f64>::eye(n_feat);
    let pooled: Vec<Vec<f64>> = (0..n_feat)
        .map(|c| {
            d.maps()
                .iter()
                .flat_map(|map| (0..n_roi).map(move |r| map.values()[(r, c)]))
                .collect()
        })
        .collect();
    for i in 0..n_feat {
        for j in (i + 1)..n_feat {
            let rho = pearson(&pooled[i], &pooled[j]);
            block[(i, j)] = rho;
            block[(j, i)] = rho;
        }
    }
    // zero the off-diagonal of constant pooled features
    for (c, col) in pooled.iter().enumerate() {
        let (_, m2, _, _) = moments(col);
        if m2 <= 1e-300 {
            for j in 0..n_feat {
                if j != c {
                    block[(c, j)] = 0.0;
                    block[(j, c)] = 0.0;
                }
            }
        }
    }
    let spec = MomentSpec {
        n_roi,
        n_feat,
        correlation: CorrelationSpec::PerRoiBlock(block),
        skewness,
        kurtosis,
        ranges,
    };
    spec.validate()?;
    Ok(MomentEstimate {
        spec,
        constant_variables,
        clipped_kurtosis,
    })
}

struct Pipeline {
    coefs: Vec<Coefficients>,
    /// Cholesky factor per ROI (block mode) or one factor (full mode).
    factors: Vec<Array2<f64>>,
    full: bool,
}

fn build_pipeline(spec: &MomentSpec) -> Result<Pipeline> {
    let coefs: Vec<Coefficients> = spec
        .skewness
        .iter()
        .zip(&spec.kurtosis)
        .map(|(&s, &k)| fleishman::solve_coefficients(s, k))
        .collect::<Result<_>>()?;
    match &spec.correlation {
        CorrelationSpec::PerRoiBlock(block) => {
            let f = spec.n_feat;
            let mut factors: Vec<Array2<f64>> = Vec::with_capacity(spec.n_roi);
            for roi in 0..spec.n_roi {
                // rois with identical marginal coefficients share one factor
                if let Some(prev) = (0..roi)
                    .find(|&p| coefs[p * f..(p + 1) * f] == coefs[roi * f..(roi + 1) * f])
                {
                    factors.push(factors[prev].clone());
                    continue;
                }
                let mut adjusted = Array2::<f64>::eye(f);
                for i in 0..f {
                    for j in (i + 1)..f {
                        let rho = fleishman::intermediate_correlation(
                            block[(i, j)],
                            &coefs[roi * f + i],
                            &coefs[roi * f + j],
                        )?;
                        adjusted[(i, j)] = rho;
                        adjusted[(j, i)] = rho;
                    }
                }
                let repaired = linalg::nearest_correlation(&adjusted, 1e-10);
                factors.push(linalg::cholesky(&repaired)?);
            }
            Ok(Pipeline {
                coefs,
                factors,
                full: false,
            })
        }
        CorrelationSpec::Full(corr) => {
            let dvars = spec.n_vars();
            let mut adjusted = Array2::<f64>::eye(dvars);
            for i in 0..dvars {
                for j in (i + 1)..dvars {
                    let rho = fleishman::intermediate_correlation(
                        corr[(i, j)],
                        &coefs[i],
                        &coefs[j],
                    )?;
                    adjusted[(i, j)] = rho;
                    adjusted[(j, i)] = rho;
                }
            }
            let repaired = linalg::nearest_correlation(&adjusted, 1e-10);
            let factor = linalg::cholesky(&repaired)?;
            Ok(Pipeline {
                coefs,
                factors: vec![factor],
                full: true,
            })
        }
    }
}

/// Stages (a)-(c): correlated non-Gaussian synthesis rescaled to the target
/// ranges, before labels, separation and noise. Row = sample, column =
/// variable in roi-major order.
fn synthesize_base(spec: &MomentSpec, n: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let pipeline = build_pipeline(spec)?;
    let d = spec.n_vars();
    let f = spec.n_feat;
    let mut data = Array2::<f64>::zeros((n, d));
    let normal = StandardNormal;
    for sample in 0..n {
        if pipeline.full {
            let g: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
            let l = &pipeline.factors[0];
            for v in 0..d {
                let mut z = 0.0;
                for k in 0..=v {
                    z += l[(v, k)] * g[k];
                }
                data[(sample, v)] = pipeline.coefs[v].apply(z);
            }
        } else {
            for roi in 0..spec.n_roi {
                let g: Vec<f64> = (0..f).map(|_| normal.sample(rng)).collect();
                let l = &pipeline.factors[roi];
                for c in 0..f {
                    let mut z = 0.0;
                    for k in 0..=c {
                        z += l[(c, k)] * g[k];
                    }
                    data[(sample, roi * f + c)] = pipeline.coefs[roi * f + c].apply(z);
                }
            }
        }
    }
    // affine rescale of each variable to its target range
    for v in 0..d {
        let col: Vec<f64> = (0..n).map(|s| data[(s, v)]).collect();
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (tlo, thi) = spec.ranges[v];
        if hi - lo <= 1e-300 {
            let mid = 0.5 * (tlo + thi);
            for s in 0..n {
                data[(s, v)] = mid;
            }
        } else {
            let slope = (thi - tlo) / (hi - lo);
            for s in 0..n {
                data[(s, v)] = tlo + (data[(s, v)] - lo) * slope;
            }
        }
    }
    Ok(data)
}

fn dataset_from_matrix(
    data: &Array2<f64>,
    labels: Option<Vec<f64>>,
    n_roi: usize,
    n_feat: usize,
) -> Result<Dataset> {
    let roi_ids: Vec<String> = (0..n_roi).map(|r| format!("roi_{r:03}")).collect();
    let feature_names: Vec<String> = (0..n_feat).map(|c| format!("feat_{c:03}")).collect();
    let maps = (0..data.nrows())
        .map(|s| {
            let values = Array2::from_shape_fn((n_roi, n_feat), |(r, c)| data[(s, r * n_feat + c)]);
            FeatureMap::new(
                format!("sim_{s:05}"),
                values,
                roi_ids.clone(),
                feature_names.clone(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(maps, labels, None)
}

/// Generate a labeled dataset. Deterministic: identical configs produce
/// bit-identical datasets.
pub fn generate(spec: &MomentSpec, cfg: &SimConfig) -> Result<Dataset> {
    spec.validate()?;
    cfg.validate(spec.n_roi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_samples;
    let mut data = synthesize_base(spec, n, &mut rng)?;
    // (d) random 50/50 labels
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut labels = vec![0.0; n];
    for &i in order.iter().take(n / 2) {
        labels[i] = 1.0;
    }
    // (e) class-dependent separation on the selected ROIs
    let f = spec.n_feat;
    for &roi in &cfg.separated_rois {
        for c in 0..f {
            let v = roi * f + c;
            let mean: f64 = (0..n).map(|s| data[(s, v)]).sum::<f64>() / n as f64;
            let shift = mean / cfg.theta;
            for s in 0..n {
                if labels[s] == 1.0 {
                    data[(s, v)] += shift;
                } else {
                    data[(s, v)] -= shift;
                }
            }
        }
    }
    // (f) observation noise everywhere
    if cfg.noise_sd > 0.0 {
        let normal = StandardNormal;
        for s in 0..n {
            for v in 0..spec.n_vars() {
                let e: f64 = normal.sample(&mut rng);
                data[(s, v)] += cfg.noise_sd * e;
            }
        }
    }
    dataset_from_matrix(&data, Some(labels), spec.n_roi, spec.n_feat)
}

/// Fidelity report of a generated dataset against its target moments.
#[derive(Debug, Clone)]
pub struct SimFidelityReport {
    pub n_samples: usize,
    pub max_skew_deviation: f64,
    pub max_kurt_deviation: f64,
    pub max_corr_deviation: f64,
    pub violations: Vec<String>,
    pub passed: bool,
}

impl std::fmt::Display for SimFidelityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "simulator fidelity over {} samples: {} (skew dev {:.3}, kurt dev {:.3}, corr dev {:.3}{})",
            self.n_samples,
            if self.passed { "PASS" } else { "FAIL" },
            self.max_skew_deviation,
            self.max_kurt_deviation,
            self.max_corr_deviation,
            if self.violations.is_empty() {
                String::new()
            } else {
                format!("; {} violation(s)", self.violations.len())
            }
        )
    }
}

/// Check a generated dataset (noise and separation effectively disabled)
/// against its target moments: skewness within 0.15, kurtosis within 0.5,
/// pairwise correlations within 0.1.
pub fn verify_simulation(generated: &Dataset, spec: &MomentSpec) -> SimFidelityReport {
    let n = generated.n_subjects();
    let f = spec.n_feat;
    let mut violations = Vec::new();
    let mut max_skew: f64 = 0.0;
    let mut max_kurt: f64 = 0.0;
    let mut max_corr: f64 = 0.0;
    let column = |v: usize| -> Vec<f64> {
        let (r, c) = (v / f, v % f);
        generated.maps().iter().map(|m| m.values()[(r, c)]).collect()
    };
    for v in 0..spec.n_vars() {
        let samples = column(v);
        let (s, k) = sample_skew_kurt(&samples);
        let ds = (s - spec.skewness[v]).abs();
        let dk = (k - spec.kurtosis[v]).abs();
        max_skew = max_skew.max(ds);
        max_kurt = max_kurt.max(dk);
        if ds > 0.15 {
            violations.push(format!(
                "variable {v}: skewness {s:.3} vs target {:.3}",
                spec.skewness[v]
            ));
        }
        if dk > 0.5 {
            violations.push(format!(
                "variable {v}: kurtosis {k:.3} vs target {:.3}",
                spec.kurtosis[v]
            ));
        }
    }
    match &spec.correlation {
        CorrelationSpec::PerRoiBlock(block) => {
            for roi in 0..spec.n_roi {
                for i in 0..f {
                    for j in (i + 1)..f {
                        let rho = pearson(&column(roi * f + i), &column(roi * f + j));
                        let dv = (rho - block[(i, j)]).abs();
                        max_corr = max_corr.max(dv);
                        if dv > 0.1 {
                            violations.push(format!(
                                "roi {roi} pair ({i}, {j}): correlation {rho:.3} vs target {:.3}",
                                block[(i, j)]
                            ));
                        }
                    }
                }
            }
        }
        CorrelationSpec::Full(corr) => {
            let d = spec.n_vars();
            for i in 0..d {
                for j in (i + 1)..d {
                    let rho = pearson(&column(i), &column(j));
                    let dv = (rho - corr[(i, j)]).abs();
                    max_corr = max_corr.max(dv);
                    if dv > 0.1 {
                        violations.push(format!(
                            "pair ({i}, {j}): correlation {rho:.3} vs target {:.3}",
                            corr[(i, j)]
                        ));
                    }
                }
            }
        }
    }
    SimFidelityReport {
        n_samples: n,
        max_skew_deviation: max_skew,
        max_kurt_deviation: max_kurt,
        max_corr_deviation: max_corr,
        passed: violations.is_empty(),
        violations,
    }
}

/// A small default moment spec used by the CLI when no dataset is supplied
/// to estimate from: one skewed heavy-tailed variable per ROI, one
/// moderately correlated feature pair, positive ranges.
pub fn default_spec(n_roi: usize, n_feat: usize) -> MomentSpec {
    assert!(n_feat >= 2, "default spec needs at least 2 features");
    let d = n_roi * n_feat;
    let mut skewness = vec![0.0; d];
    let mut kurtosis = vec![3.0; d];
    for roi in 0..n_roi {
        skewness[roi * n_feat] = 1.0;
        kurtosis[roi * n_feat] = 5.0;
    }
    let mut block = Array2::<f64>::eye(n_feat);
    block[(0, 1)] = 0.5;
    block[(1, 0)] = 0.5;
    MomentSpec {
        n_roi,
        n_feat,
        correlation: CorrelationSpec::PerRoiBlock(block),
        skewness,
        kurtosis,
        ranges: vec![(0.5, 2.5); d],
    }
}
