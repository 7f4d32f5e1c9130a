//! Covariance spectra, effective dimensions, Gaussian sampling and the max-norm tail bound.
//!
//! Spectra hold standard deviations `σ_i`, so `Σ = B diag(σ_i²) Bᵀ`.

use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::numerics::{DenseMatrix, RngStream, SymMatrix};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", try_from = "SpectrumInput<T>", into = "SpectrumRepr<T>")]
pub struct CovarianceSpectrum<T: Real> {
    sigmas: Vec<T>,
    basis: Option<DenseMatrix<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
struct SpectrumRepr<T> {
    sigmas: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    basis: Option<Vec<T>>,
}

/// Accepted JSON forms: a bare σ array, `{"sigmas": [...], "basis": [...]}`, or
/// `{"generate": {"kind": ...}, "d": 64, "sigma1": 1.0}`.
#[derive(Deserialize)]
#[serde(bound = "T: Real", untagged)]
enum SpectrumInput<T: Real> {
    Sigmas(Vec<T>),
    Explicit(SpectrumRepr<T>),
    Generated(GeneratedRepr<T>),
}

#[derive(Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
struct GeneratedRepr<T: Real> {
    generate: SpectrumKind<T>,
    d: usize,
    #[serde(default = "T::one")]
    sigma1: T,
}

impl<T: Real> TryFrom<SpectrumInput<T>> for CovarianceSpectrum<T> {
    type Error = Error;
    fn try_from(r: SpectrumInput<T>) -> Result<Self> {
        match r {
            SpectrumInput::Sigmas(sigmas) => Self::new(sigmas, None),
            SpectrumInput::Explicit(r) => {
                let d = r.sigmas.len();
                let basis = r.basis.map(|b| DenseMatrix::from_row_major(d, d, b)).transpose()?;
                Self::new(r.sigmas, basis)
            }
            SpectrumInput::Generated(g) => make_spectrum(&g.generate, g.d, g.sigma1),
        }
    }
}

impl<T: Real> From<CovarianceSpectrum<T>> for SpectrumRepr<T> {
    fn from(s: CovarianceSpectrum<T>) -> Self {
        Self { sigmas: s.sigmas, basis: s.basis.map(|b| b.as_slice().to_vec()) }
    }
}

fn check_sigmas<T: Real>(sigmas: &[T]) -> Result<()> {
    if sigmas.is_empty() {
        return Err(Error::BadSpectrum("spectrum must have at least one entry".into()));
    }
    if let Some(i) = sigmas.iter().position(|&s| !(s > T::zero()) || !s.is_finite()) {
        return Err(Error::BadSpectrum(format!("entry {i} is not a positive finite number")));
    }
    if let Some(i) = sigmas.windows(2).position(|w| w[1] > w[0]) {
        return Err(Error::BadSpectrum(format!(
            "spectrum must be in descending order, but entry {} exceeds entry {i}",
            i + 1
        )));
    }
    Ok(())
}

impl<T: Real> CovarianceSpectrum<T> {
    pub fn new(sigmas: Vec<T>, basis: Option<DenseMatrix<T>>) -> Result<Self> {
        check_sigmas(&sigmas)?;
        if let Some(b) = &basis {
            let d = sigmas.len();
            if b.rows() != d || b.cols() != d {
                return Err(Error::DimensionMismatch { expected: d, got: b.rows().max(b.cols()) });
            }
            if b.orthonormality_defect() > T::tol(1e-10) {
                return Err(Error::BadSpectrum("basis is not orthonormal".into()));
            }
        }
        Ok(Self { sigmas, basis })
    }

    pub fn with_basis(self, basis: DenseMatrix<T>) -> Result<Self> {
        Self::new(self.sigmas, Some(basis))
    }

    pub fn sigmas(&self) -> &[T] {
        &self.sigmas
    }

    pub fn basis(&self) -> Option<&DenseMatrix<T>> {
        self.basis.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.sigmas.len()
    }

    pub fn sigma1(&self) -> T {
        self.sigmas[0]
    }

    /// Same shape with every σ_i multiplied by `c > 0`.
    pub fn rescaled(&self, c: T) -> Self {
        Self { sigmas: self.sigmas.iter().map(|&s| s * c).collect(), basis: self.basis.clone() }
    }

    /// `Σ^q = B diag(σ_i^{2q}) Bᵀ`.
    pub fn covariance_power(&self, q: T) -> SymMatrix<T> {
        let vals: Vec<T> = self.sigmas.iter().map(|&s| s.powf(q + q)).collect();
        match &self.basis {
            Some(b) => SymMatrix::from_eigen(b, &vals),
            None => SymMatrix::diag(&vals),
        }
    }

    pub fn covariance(&self) -> SymMatrix<T> {
        self.covariance_power(T::one())
    }

    /// Maps a latent vector `z` to `B diag(σ^{2q}) z`.
    pub fn apply_power(&self, q: T, z: &[T]) -> Vec<T> {
        let scaled: Vec<T> = z.iter().zip(&self.sigmas).map(|(&zi, &s)| zi * s.powf(q + q)).collect();
        match &self.basis {
            Some(b) => b.matvec(&scaled),
            None => scaled,
        }
    }

    /// `d_eff(r) = Σ_i (σ_i/σ_1)^{2/r}`, evaluated through logarithms.
    pub fn effective_dimension(&self, r: u32) -> T {
        assert!(r >= 1, "effective dimension needs r >= 1");
        let l1 = self.sigma1().ln();
        let e = T::lit(2.0) / T::lit(r as f64);
        self.sigmas.iter().map(|&s| ((s.ln() - l1) * e).exp()).sum()
    }
}

/// Free-function form of [`CovarianceSpectrum::effective_dimension`].
pub fn effective_dimension<T: Real>(s: &CovarianceSpectrum<T>, r: u32) -> T {
    s.effective_dimension(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumKind<T: Real> {
    Isotropic,
    /// `σ_i = sigma1 · i^{−alpha}`.
    PowerLaw { alpha: T },
    /// Explicit σ list; `sigma1` is not applied.
    Custom { sigmas: Vec<T> },
}

pub fn make_spectrum<T: Real>(kind: &SpectrumKind<T>, d: usize, sigma1: T) -> Result<CovarianceSpectrum<T>> {
    require(d >= 1, || "spectrum dimension must be at least 1".into())?;
    require(sigma1 > T::zero(), || "sigma1 must be positive".into())?;
    let sigmas = match kind {
        SpectrumKind::Isotropic => vec![sigma1; d],
        SpectrumKind::PowerLaw { alpha } => {
            require(*alpha > T::zero(), || "power-law exponent must be positive".into())?;
            (1..=d).map(|i| sigma1 * T::count(i).powf(-*alpha)).collect()
        }
        SpectrumKind::Custom { sigmas } => {
            if sigmas.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: sigmas.len() });
            }
            sigmas.clone()
        }
    };
    CovarianceSpectrum::new(sigmas, None)
}

/// `n` rows in `R^d`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SampleMatrix<T> {
    n: usize,
    d: usize,
    data: Vec<T>,
    /// `(master_seed, stream_id)` the rows were drawn from, when sampled.
    pub provenance: Option<(u64, u64)>,
}

impl<T: Real> SampleMatrix<T> {
    pub fn from_rows(d: usize, data: Vec<T>) -> Result<Self> {
        require(d >= 1, || "sample dimension must be at least 1".into())?;
        require(!data.is_empty() && data.len() % d == 0, || {
            format!("sample data length {} is not a positive multiple of d = {d}", data.len())
        })?;
        require(data.iter().all(|v| v.is_finite()), || "sample rows must be finite".into())?;
        Ok(Self { n: data.len() / d, d, data, provenance: None })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Result<Self> {
        require(n >= 1 && n <= self.n, || format!("head({n}) outside 1..={}", self.n))?;
        Ok(Self { n, d: self.d, data: self.data[..n * self.d].to_vec(), provenance: self.provenance })
    }

    /// `(1/n) Σ a_i a_iᵀ`.
    pub fn second_moment(&self) -> SymMatrix<T> {
        let w = T::one() / T::count(self.n);
        SymMatrix::weighted_outer_sum(self.d, &self.data, |_| w)
    }

    pub fn max_row_norm(&self) -> T {
        self.rows().map(crate::scalar::norm).fold(T::zero(), T::max)
    }
}

/// `n` i.i.d. rows `B diag(σ) z` with `z ~ N(0, I)`.
pub fn sample_gaussian<T: Real>(s: &CovarianceSpectrum<T>, n: usize, rng: &mut RngStream) -> Result<SampleMatrix<T>> {
    require(n >= 1, || "sample size must be at least 1".into())?;
    let d = s.dim();
    let provenance = Some((rng.master_seed(), rng.stream_id()));
    let mut data = Vec::with_capacity(n * d);
    let half = T::lit(0.5);
    for _ in 0..n {
        let z: Vec<T> = rng.normals(d);
        data.extend(s.apply_power(half, &z));
    }
    Ok(SampleMatrix { n, d, data, provenance })
}

/// High-probability bound `R̄² = 4σ_1²(2 d_eff(1) + ln(1/δ) + ln n)` on `max_i ‖a_i‖²`.
pub fn max_norm_bound<T: Real>(s: &CovarianceSpectrum<T>, n: usize, delta: T) -> Result<T> {
    require(n >= 1, || "n must be at least 1".into())?;
    require(delta > T::zero() && delta < T::one(), || "delta must lie in (0,1)".into())?;
    let s1 = s.sigma1();
    Ok(T::lit(4.0) * s1 * s1 * (T::lit(2.0) * s.effective_dimension(1) - delta.ln() + T::count(n).ln()))
}
