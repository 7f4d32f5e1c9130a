use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{empirical_sup_deviation, DeviationMode, NonlinearitySpec, Reference, SearchConfig};
use crate::error::{require, Result};
use crate::numerics::RngStream;
use crate::scalar::{dot, norm, Real};
use crate::spectrum::{sample_gaussian, CovarianceSpectrum, SampleMatrix};

/// Paired scaling study: trial `t` at grid point `j` draws one latent Gaussian stream shared by
/// every spectrum, so spectra differ only through their scalings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ScalingConfig<T: Real> {
    pub spectra: Vec<(String, CovarianceSpectrum<T>)>,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub fs: NonlinearitySpec<T>,
    pub centered: bool,
    /// Defaults to [`SearchConfig::default_multistart`] per spectrum.
    pub search: Option<SearchConfig<T>>,
    /// Size of the Monte-Carlo reference sample for centered non-identity runs.
    pub reference_size: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct TrialRecord<T> {
    pub spectrum_id: String,
    pub n: usize,
    pub trial: usize,
    pub value: T,
    pub mode: DeviationMode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct CellSummary<T> {
    pub spectrum_id: String,
    pub n: usize,
    pub mean: T,
    pub std: T,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct SlopeFit<T> {
    pub spectrum_id: String,
    pub slope: T,
    pub stderr: T,
    pub intercept: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct ScalingTable<T> {
    pub records: Vec<TrialRecord<T>>,
    pub cells: Vec<CellSummary<T>>,
    pub slopes: Vec<SlopeFit<T>>,
}

pub fn mean_std<T: Real>(xs: &[T]) -> (T, T) {
    let n = T::count(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    if xs.len() < 2 {
        return (mean, T::zero());
    }
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (n - T::one());
    (mean, var.sqrt())
}

/// Least-squares line `y = a + b x`, returning `(b, se(b), a)`.
fn ols<T: Real>(x: &[T], y: &[T]) -> (T, T, T) {
    let k = T::count(x.len());
    let mx = x.iter().copied().sum::<T>() / k;
    let my = y.iter().copied().sum::<T>() / k;
    let sxx: T = x.iter().map(|&v| (v - mx) * (v - mx)).sum();
    let sxy: T = x.iter().zip(y).map(|(&u, &v)| (u - mx) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se = if x.len() > 2 {
        let rss: T = x.iter().zip(y).map(|(&u, &v)| (v - intercept - slope * u).powi(2)).sum();
        (rss / (k - T::lit(2.0)) / sxx).sqrt()
    } else {
        T::nan()
    };
    (slope, se, intercept)
}

/// Slope of `ln mean` against `ln n`.
pub fn loglog_slope<T: Real>(ns: &[usize], means: &[T]) -> (T, T, T) {
    let x: Vec<T> = ns.iter().map(|&n| T::count(n).ln()).collect();
    let y: Vec<T> = means.iter().map(|m| m.ln()).collect();
    ols(&x, &y)
}

/// Fits `mean ≈ c₀ + c₁/n`, returning `(c₀, c₁)`.
pub fn plateau_fit<T: Real>(ns: &[usize], means: &[T]) -> (T, T) {
    let x: Vec<T> = ns.iter().map(|&n| T::one() / T::count(n)).collect();
    let (c1, _, c0) = ols(&x, means);
    (c0, c1)
}

/// Trial stream for grid point `j`, trial `t`.
fn trial_stream(master_seed: u64, j: usize, t: usize) -> RngStream {
    RngStream::new(master_seed, 0).substream(j as u64).substream(t as u64)
}

pub fn scaling_experiment<T: Real>(cfg: &ScalingConfig<T>) -> Result<ScalingTable<T>> {
    require(cfg.trials >= 30, || format!("at least 30 trials are required (got {})", cfg.trials))?;
    require(!cfg.spectra.is_empty() && !cfg.n_grid.is_empty(), || "spectra and n grid must be nonempty".into())?;
    require(cfg.fs.order() >= 2, || "product order must be at least 2".into())?;
    let r = cfg.fs.order();
    let needs_sample_ref = cfg.centered && !cfg.fs.is_identity();
    let references: Vec<Option<SampleMatrix<T>>> = cfg
        .spectra
        .iter()
        .enumerate()
        .map(|(k, (_, s))| {
            if needs_sample_ref {
                let mut stream = RngStream::new(cfg.master_seed, 1).substream(k as u64);
                sample_gaussian(s, cfg.reference_size, &mut stream).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;

    let tasks: Vec<(usize, usize)> = (0..cfg.n_grid.len()).flat_map(|j| (0..cfg.trials).map(move |t| (j, t))).collect();
    let per_task: Vec<Vec<T>> = tasks
        .par_iter()
        .map(|&(j, t)| {
            let n = cfg.n_grid[j];
            let base = trial_stream(cfg.master_seed, j, t);
            cfg.spectra
                .iter()
                .zip(&references)
                .map(|((_, s), rf)| {
                    let mut sampler = base.substream(0);
                    let x = sample_gaussian(s, n, &mut sampler)?;
                    let reference = match rf {
                        Some(sample) => Reference::Sample(sample),
                        None => Reference::ExactGaussian(s),
                    };
                    let search = cfg.search.unwrap_or_else(|| SearchConfig::default_multistart(s.sigma1(), r));
                    Ok(empirical_sup_deviation(&x, &cfg.fs, cfg.centered, reference, &search, &base.substream(1))?.value)
                })
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<_>>()?;

    let mode = if cfg.centered { DeviationMode::Centered } else { DeviationMode::Uncentered };
    let mut records = Vec::with_capacity(tasks.len() * cfg.spectra.len());
    for (k, (id, _)) in cfg.spectra.iter().enumerate() {
        for (&(j, t), vals) in tasks.iter().zip(&per_task) {
            records.push(TrialRecord { spectrum_id: id.clone(), n: cfg.n_grid[j], trial: t, value: vals[k], mode, seed: cfg.master_seed });
        }
    }
    let mut cells = Vec::new();
    let mut slopes = Vec::new();
    for (k, (id, _)) in cfg.spectra.iter().enumerate() {
        let mut means = Vec::new();
        for (j, &n) in cfg.n_grid.iter().enumerate() {
            let vals: Vec<T> = tasks.iter().zip(&per_task).filter(|((jj, _), _)| *jj == j).map(|(_, v)| v[k]).collect();
            let (mean, std) = mean_std(&vals);
            means.push(mean);
            cells.push(CellSummary { spectrum_id: id.clone(), n, mean, std, trials: vals.len() });
        }
        if cfg.n_grid.len() >= 2 {
            let (slope, stderr, intercept) = loglog_slope(&cfg.n_grid, &means);
            slopes.push(SlopeFit { spectrum_id: id.clone(), slope, stderr, intercept });
        }
    }
    Ok(ScalingTable { records, cells, slopes })
}

/// Uncentered product mean at `x_1 = … = x_r = a_1/‖a_1‖`: `(1/n) Σ_i (a_iᵀa_1/‖a_1‖)^r`.
pub fn tightness_probe<T: Real>(samples: &SampleMatrix<T>, r: usize) -> Result<T> {
    require(r >= 2, || "r must be at least 2".into())?;
    let a1 = samples.row(0);
    let nrm = norm(a1);
    require(nrm > T::zero(), || "first sample row is zero".into())?;
    let u: Vec<T> = a1.iter().map(|&v| v / nrm).collect();
    let total: T = samples.rows().map(|a| dot(a, &u).powi(r as i32)).sum();
    Ok(total / T::count(samples.n()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concentration::{empirical_sup_deviation, Reference};
    use crate::spectrum::{make_spectrum, SpectrumKind};

    #[test]
    fn ols_recovers_line() {
        let ns = [10usize, 100, 1000];
        let means: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powf(-0.5)).collect();
        let (slope, se, _) = loglog_slope(&ns, &means);
        assert!((slope + 0.5).abs() < 1e-12);
        assert!(se < 1e-10);
        let (c0, c1) = plateau_fit(&ns, &ns.iter().map(|&n| 2.0 + 5.0 / n as f64).collect::<Vec<_>>());
        assert!((c0 - 2.0).abs() < 1e-12 && (c1 - 5.0).abs() < 1e-9);
    }

    #[test]
    fn probe_single_sample() {
        let s = make_spectrum(&SpectrumKind::Isotropic, 3, 1.0f64).unwrap();
        let x = sample_gaussian(&s, 1, &mut RngStream::new(0, 0)).unwrap();
        let n2 = dot(x.row(0), x.row(0));
        assert!((tightness_probe(&x, 3).unwrap() - n2.powf(1.5)).abs() < 1e-12 * n2.powf(1.5));
    }

    #[test]
    fn probe_below_supremum() {
        let s = make_spectrum(&SpectrumKind::PowerLaw { alpha: 1.0 }, 5, 1.0f64).unwrap();
        for seed in 0..5 {
            let x = sample_gaussian(&s, 40, &mut RngStream::new(seed, 0)).unwrap();
            let probe = tightness_probe(&x, 2).unwrap();
            let sup = empirical_sup_deviation(&x, &NonlinearitySpec::identity(2), false, Reference::None, &SearchConfig::default_multistart(1.0, 2), &RngStream::new(seed, 1)).unwrap();
            assert!(probe <= sup.value * (1.0 + 1e-12));
        }
    }

    #[test]
    fn probe_grows_with_dimension() {
        let n = 20;
        let mut prev = 0.0;
        for d in [2usize, 8, 32] {
            let s = make_spectrum(&SpectrumKind::Isotropic, d, 1.0f64).unwrap();
            let vals: Vec<f64> = (0..200)
                .map(|t| tightness_probe(&sample_gaussian(&s, n, &mut RngStream::new(9, t)).unwrap(), 2).unwrap())
                .collect();
            let (mean, _) = mean_std(&vals);
            assert!(mean > prev);
            prev = mean;
        }
    }

    #[test]
    fn rejects_few_trials() {
        let s = make_spectrum(&SpectrumKind::Isotropic, 2, 1.0f64).unwrap();
        let cfg = ScalingConfig {
            spectra: vec![("iso".into(), s)],
            n_grid: vec![10],
            trials: 5,
            fs: NonlinearitySpec::identity(2),
            centered: true,
            search: None,
            reference_size: 0,
            master_seed: 0,
        };
        assert!(scaling_experiment(&cfg).is_err());
    }

    #[test]
    fn uncentered_plateau_is_sigma1_squared() {
        let s = make_spectrum(&SpectrumKind::PowerLaw { alpha: 1.0 }, 4, 1.5f64).unwrap();
        let cfg = ScalingConfig {
            spectra: vec![("pl".into(), s)],
            n_grid: vec![256, 1024, 4096, 16384],
            trials: 30,
            fs: NonlinearitySpec::identity(2),
            centered: false,
            search: None,
            reference_size: 0,
            master_seed: 11,
        };
        let table = scaling_experiment(&cfg).unwrap();
        let ns: Vec<usize> = table.cells.iter().map(|c| c.n).collect();
        let means: Vec<f64> = table.cells.iter().map(|c| c.mean).collect();
        let (c0, _) = plateau_fit(&ns, &means);
        assert!((c0 / 2.25 - 1.0).abs() < 0.05, "plateau {c0}");
    }

    #[test]
    fn smaller_deff_gives_smaller_deviation() {
        let iso = make_spectrum(&SpectrumKind::Isotropic, 10, 1.0f64).unwrap();
        let pl = make_spectrum(&SpectrumKind::PowerLaw { alpha: 1.0 }, 10, 1.0f64).unwrap();
        let cfg = ScalingConfig {
            spectra: vec![("iso".into(), iso), ("pl".into(), pl)],
            n_grid: vec![32, 128, 512],
            trials: 30,
            fs: NonlinearitySpec::identity(2),
            centered: true,
            search: None,
            reference_size: 0,
            master_seed: 5,
        };
        let t = scaling_experiment(&cfg).unwrap();
        for j in 0..3 {
            assert!(t.cells[3 + j].mean < t.cells[j].mean);
        }
        assert_eq!(t.records.len(), 2 * 3 * 30);
    }
}
