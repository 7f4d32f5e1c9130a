use rayon::prelude::*;
use serde::Serialize;

use super::problem::{weighted_hessian, ErmProblem};
use crate::concentration::Reference;
use crate::error::{require, Error, Result};
use crate::numerics::{sym_eigh, GaussHermite, RngStream, SymMatrix};
use crate::scalar::{dot, norm, project_ball, Real};
use crate::spectrum::{CovarianceSpectrum, SampleMatrix};

const QUAD_POINTS: usize = 64;

#[derive(Debug, Clone)]
pub struct HessianSearch<T> {
    pub radius: T,
    pub restarts: usize,
    pub iters: usize,
    /// Additional starting points, projected onto the ball.
    pub extra_starts: Vec<Vec<T>>,
}

impl<T: Real> HessianSearch<T> {
    pub fn new(radius: T) -> Self {
        Self { radius, restarts: 16, iters: 60, extra_starts: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct HessianDeviation<T> {
    pub value: T,
    pub argmax: Vec<T>,
    pub evaluations: usize,
}

enum Mean<'a, T: Real> {
    Sample(&'a SampleMatrix<T>),
    Gaussian { cov: SymMatrix<T>, gh: GaussHermite<T> },
}

struct Deviation<'a, T: Real> {
    p: &'a ErmProblem<T>,
    mean: Mean<'a, T>,
}

/// `E[g(aᵀx) aaᵀ]` for `a ~ N(0, Σ)`: with `s² = xᵀΣx` and `w = Σx`,
/// `E[g]Σ + (E[g(sZ)Z²] − E[g(sZ)]) wwᵀ/s²`.
fn gaussian_weighted_moment<T: Real>(cov: &SymMatrix<T>, gh: &GaussHermite<T>, g: impl Fn(T) -> T, x: &[T]) -> SymMatrix<T> {
    let w = cov.matvec(x);
    let s2 = dot(x, &w);
    let s = s2.sqrt();
    let g0 = gh.expect(|z| g(s * z));
    if !(s2 > T::min_positive_value().sqrt()) {
        return cov.scaled(g0);
    }
    let g2 = gh.expect(|z| g(s * z) * z * z);
    let c = (g2 - g0) / s2;
    SymMatrix::from_fn(cov.dim(), |i, j| g0 * cov[(i, j)] + c * w[i] * w[j])
}

impl<T: Real> Deviation<'_, T> {
    fn mean_hessian(&self, x: &[T]) -> SymMatrix<T> {
        let loss = self.p.loss;
        match &self.mean {
            Mean::Sample(s) => weighted_hessian(s, |a| loss.second(dot(a, x))),
            Mean::Gaussian { cov, gh } => gaussian_weighted_moment(cov, gh, |z| loss.second(z), x),
        }
    }

    /// `(‖D(x)‖_op, top eigenvector, sign of the extreme eigenvalue)`.
    fn eval(&self, x: &[T]) -> Result<(T, Vec<T>, T)> {
        let dev = self.p.data_hessian(x).sub(&self.mean_hessian(x));
        let e = sym_eigh(&dev, T::tol(1e-12))?;
        let (hi, lo) = (e.values[0], e.values[e.values.len() - 1]);
        let k = if hi.abs() >= lo.abs() { 0 } else { e.values.len() - 1 };
        let sgn = if e.values[k] >= T::zero() { T::one() } else { -T::one() };
        Ok((e.values[k].abs(), e.vectors.col(k), sgn))
    }

    /// Gradient of `sgn · vᵀ D(x) v` in `x`.
    fn grad(&self, x: &[T], v: &[T], sgn: T) -> Vec<T> {
        let loss = self.p.loss;
        let d = x.len();
        let sample_part = |s: &SampleMatrix<T>| {
            let mut g = vec![T::zero(); d];
            for a in s.rows() {
                let c = loss.third(dot(a, x)) * dot(a, v).powi(2);
                for (gi, &ai) in g.iter_mut().zip(a) {
                    *gi += c * ai;
                }
            }
            let inv = T::one() / T::count(s.n());
            g.iter_mut().for_each(|gi| *gi *= inv);
            g
        };
        let mut g = sample_part(self.p.data());
        let m = match &self.mean {
            Mean::Sample(s) => sample_part(s),
            Mean::Gaussian { cov, gh } => {
                let h = T::lit(1e-5) * (T::one() + norm(x));
                (0..d)
                    .map(|k| {
                        let mut xp = x.to_vec();
                        let mut xm = x.to_vec();
                        xp[k] += h;
                        xm[k] -= h;
                        let q = |y: &[T]| gaussian_weighted_moment(cov, gh, |z| loss.second(z), y).quad_form(v);
                        (q(&xp) - q(&xm)) / (h + h)
                    })
                    .collect()
            }
        };
        g.iter_mut().zip(&m).for_each(|(gi, &mi)| *gi = sgn * (*gi - mi));
        g
    }

    fn ascend(&self, start: &[T], radius: T, iters: usize) -> Result<(T, Vec<T>, usize)> {
        let mut x = start.to_vec();
        project_ball(&mut x, radius);
        let (mut h, mut v, mut sgn) = self.eval(&x)?;
        let mut evals = 1;
        let mut eta = radius * T::lit(0.5);
        let stop = radius * T::lit(1e-7);
        for _ in 0..iters {
            let g = self.grad(&x, &v, sgn);
            let gn = norm(&g);
            if !(gn > T::zero()) || eta < stop {
                break;
            }
            let mut cand = x.clone();
            cand.iter_mut().zip(&g).for_each(|(c, &gi)| *c += eta * gi / gn);
            project_ball(&mut cand, radius);
            let (hc, vc, sc) = self.eval(&cand)?;
            evals += 1;
            if hc > h {
                x = cand;
                h = hc;
                v = vc;
                sgn = sc;
                eta = (eta * T::lit(1.5)).min(radius);
            } else {
                eta *= T::lit(0.5);
            }
        }
        Ok((h, x, evals))
    }
}

/// Lower estimate of `sup_{‖x‖≤R} ‖H_x − H̄_x‖_op` by multistart normalized gradient ascent,
/// where `H_x` is the data Hessian (ridge term excluded) and `H̄_x` comes from `reference`.
pub fn hessian_deviation_sup<T: Real>(
    p: &ErmProblem<T>,
    reference: Reference<'_, T>,
    search: &HessianSearch<T>,
    rng: &RngStream,
) -> Result<HessianDeviation<T>> {
    if !p.loss.is_smooth() {
        return Err(Error::NonSmoothLoss);
    }
    require(search.radius > T::zero(), || "search radius must be positive".into())?;
    let mean = match reference {
        Reference::None => return Err(Error::RefUnavailable),
        Reference::Sample(s) => {
            if s.d() != p.d() {
                return Err(Error::DimensionMismatch { expected: p.d(), got: s.d() });
            }
            Mean::Sample(s)
        }
        Reference::ExactGaussian(s) => gaussian_mean(s, p.d())?,
    };
    let dev = Deviation { p, mean };
    let d = p.d();
    let mut starts = vec![vec![T::zero(); d]];
    starts.extend(search.extra_starts.iter().cloned());
    for k in 0..search.restarts {
        let mut r = rng.substream(k as u64);
        let dir: Vec<T> = r.unit_vector(d);
        let scale = search.radius * r.uniform::<T>().powf(T::one() / T::count(d));
        starts.push(dir.into_iter().map(|c| c * scale).collect());
    }
    if let Some(bad) = starts.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    let found: Vec<(T, Vec<T>, usize)> =
        starts.par_iter().map(|s| dev.ascend(s, search.radius, search.iters)).collect::<Result<_>>()?;
    let evaluations = found.iter().map(|f| f.2).sum();
    let (value, argmax, _) = found.into_iter().fold(None::<(T, Vec<T>, usize)>, |best, cur| match best {
        Some(b) if b.0 >= cur.0 => Some(b),
        _ => Some(cur),
    })
    .expect("at least the origin start");
    Ok(HessianDeviation { value, argmax, evaluations })
}

fn gaussian_mean<T: Real>(s: &CovarianceSpectrum<T>, d: usize) -> Result<Mean<'static, T>> {
    if s.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: s.dim() });
    }
    Ok(Mean::Gaussian { cov: s.covariance(), gh: GaussHermite::new(QUAD_POINTS)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erm::LossKind;
    use crate::spectrum::{make_spectrum, sample_gaussian, SpectrumKind};

    fn logistic(s: &CovarianceSpectrum<f64>, n: usize, seed: u64) -> ErmProblem<f64> {
        let x = sample_gaussian(s, n, &mut RngStream::new(seed, 0)).unwrap();
        let labels = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        ErmProblem::new(LossKind::Logistic, x, labels, 0.0).unwrap()
    }

    #[test]
    fn same_sample_reference_is_zero() {
        let s = make_spectrum(&SpectrumKind::Isotropic, 3, 1.0).unwrap();
        let p = logistic(&s, 200, 1);
        let dev = hessian_deviation_sup(&p, Reference::Sample(p.data()), &HessianSearch::new(1.0), &RngStream::new(0, 0)).unwrap();
        assert_eq!(dev.value, 0.0);
    }

    #[test]
    fn missing_reference() {
        let s = make_spectrum(&SpectrumKind::Isotropic, 2, 1.0).unwrap();
        let p = logistic(&s, 10, 1);
        let r = hessian_deviation_sup(&p, Reference::None, &HessianSearch::new(1.0), &RngStream::new(0, 0));
        assert_eq!(r.unwrap_err(), Error::RefUnavailable);
    }

    #[test]
    fn gaussian_moment_matches_monte_carlo() {
        let s = make_spectrum(&SpectrumKind::PowerLaw { alpha: 1.0 }, 3, 1.5).unwrap();
        let big = sample_gaussian(&s, 400_000, &mut RngStream::new(7, 0)).unwrap();
        let gh = GaussHermite::new(QUAD_POINTS).unwrap();
        let x = [0.4, -0.7, 0.2];
        let loss = LossKind::Logistic;
        let exact = gaussian_weighted_moment(&s.covariance(), &gh, |z| loss.second(z), &x);
        let mc = weighted_hessian(&big, |a| loss.second(dot(a, &x)));
        assert!(exact.max_abs_diff(&mc) < 5e-3, "{}", exact.max_abs_diff(&mc));
        // ℓ'' ≡ 1 recovers Σ
        let ridge = gaussian_weighted_moment(&s.covariance(), &gh, |_| 1.0, &x);
        assert!(ridge.max_abs_diff(&s.covariance()) < 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_finite_difference() {
        let s = make_spectrum(&SpectrumKind::PowerLaw { alpha: 1.0 }, 4, 1.0).unwrap();
        let p = logistic(&s, 300, 2);
        let aux = sample_gaussian(&s, 300, &mut RngStream::new(3, 0)).unwrap();
        let dev = Deviation { p: &p, mean: Mean::Sample(&aux) };
        let x = [0.3, -0.2, 0.5, 0.1];
        let (_, v, sgn) = dev.eval(&x).unwrap();
        let g = dev.grad(&x, &v, sgn);
        let q = |y: &[f64]| sgn * p.data_hessian(y).sub(&weighted_hessian(&aux, |a| LossKind::Logistic.second(dot(a, y)))).quad_form(&v);
        for k in 0..4 {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += 1e-6;
            xm[k] -= 1e-6;
            assert!(((q(&xp) - q(&xm)) / 2e-6 - g[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn large_sample_deviation_is_small() {
        let s = make_spectrum(&SpectrumKind::PowerLaw { alpha: 1.0 }, 5, 1.0).unwrap();
        let p = logistic(&s, 1_000_000, 5);
        let mut search = HessianSearch::new(1.0);
        search.restarts = 4;
        search.iters = 20;
        let dev = hessian_deviation_sup(&p, Reference::ExactGaussian(&s), &search, &RngStream::new(1, 1)).unwrap();
        assert!(dev.value <= 0.02, "{}", dev.value);
        assert!(dev.value > 0.0);
    }

    #[test]
    fn deviation_shrinks_with_n() {
        let s = make_spectrum(&SpectrumKind::PowerLaw { alpha: 1.0 }, 4, 1.0).unwrap();
        let mut search = HessianSearch::new(1.0);
        search.restarts = 4;
        search.iters = 20;
        let mut means = Vec::new();
        for n in [50usize, 200, 800] {
            let vals: Vec<f64> = (0..50)
                .map(|t| {
                    let p = logistic(&s, n, 100 + t);
                    hessian_deviation_sup(&p, Reference::ExactGaussian(&s), &search, &RngStream::new(t, 9)).unwrap().value
                })
                .collect();
            means.push(vals.iter().sum::<f64>() / 50.0);
        }
        assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
    }
}
