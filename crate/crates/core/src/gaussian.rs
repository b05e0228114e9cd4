//! Scalar and multivariate Gaussian primitives, and correlation matrices
//! with an unconstrained parameterization.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VartaError};
use crate::linalg::{chol_log_det, forward_substitute, Matrix};
use crate::scalar::Scalar;

/// Probabilities returned by [`normal_cdf`] are kept inside
/// `[TAIL_CLAMP, 1 - TAIL_CLAMP]`.
pub const TAIL_CLAMP: f64 = 1e-15;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Unclamped `Φ(z)` in double precision.
#[inline]
pub(crate) fn phi_f64(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

#[inline]
pub(crate) fn clamp_prob(u: f64) -> f64 {
    u.clamp(TAIL_CLAMP, 1.0 - TAIL_CLAMP)
}

/// Standard normal CDF, clamped away from 0 and 1.
pub fn normal_cdf<T: Scalar>(z: T) -> T {
    T::lit(clamp_prob(phi_f64(z.as_f64())))
}

/// Standard normal density.
pub fn normal_pdf<T: Scalar>(z: T) -> T {
    T::lit(INV_SQRT_2PI) * (-(z * z) / T::lit(2.0)).exp()
}

/// Log of the standard normal density.
#[inline]
pub fn normal_log_pdf<T: Scalar>(z: T) -> T {
    -T::lit(LN_SQRT_2PI) - z * z / T::lit(2.0)
}

/// Standard normal quantile `Φ⁻¹(u)` for `u` strictly inside `(0, 1)`.
pub fn normal_quantile<T: Scalar>(u: T) -> Result<T> {
    let uf = u.as_f64();
    if !(uf > 0.0 && uf < 1.0) {
        return Err(VartaError::Domain(format!(
            "normal quantile needs 0 < u < 1, got {uf}"
        )));
    }
    Ok(T::lit(quantile_f64(uf)))
}

/// `Φ⁻¹(u)` for `u ∈ (0, 1)`; a rational first guess polished by one Newton
/// step against `Φ`.
pub(crate) fn quantile_f64(u: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    if u > 0.5 {
        // 1 - u is exact here
        return -quantile_f64(1.0 - u);
    }
    let x0 = quantile_guess(u);
    let pdf = INV_SQRT_2PI * (-0.5 * x0 * x0).exp();
    if pdf <= 0.0 {
        return x0;
    }
    let err = phi_f64(x0) - u;
    x0 - err / pdf
}

const MIDRANGE_HALF_WIDTH: f64 = 0.341_344_746_068_542_9; // Φ(1) - 1/2

/// Minimax rational approximation of `Φ⁻¹`, accurate to roughly 1e-16 in
/// exact arithmetic (Jäckel's branch layout).
fn quantile_guess(p: f64) -> f64 {
    let u = p - 0.5;
    if u.abs() < MIDRANGE_HALF_WIDTH {
        let s = MIDRANGE_HALF_WIDTH * MIDRANGE_HALF_WIDTH - u * u;
        return u
            * ((2.929_589_546_983_088
                + s * (5.026_057_216_730_310e1
                    + s * (3.018_705_419_229_339e2
                        + s * (7.499_778_145_665_792e2
                            + s * (6.904_892_420_614_086e2
                                + s * (1.342_332_435_026_538_6e2 - 7.589_398_814_012_592 * s))))))
                / (1.0
                    + s * (1.891_853_807_457_459_8e1
                        + s * (1.294_041_204_487_552_8e2
                            + s * (3.868_212_085_404_174_5e2
                                + s * (4.791_239_145_097_567_6e2 + 1.792_270_085_081_026_3e2 * s))))));
    }
    if u > 0.0 {
        -lower_tail_guess(1.0 - p)
    } else {
        lower_tail_guess(p)
    }
}

fn lower_tail_guess(p: f64) -> f64 {
    let r = (-p.ln()).sqrt();
    if r < 2.05 {
        (3.691_562_302_945_566
            + r * (4.717_059_060_074_069e1
                + r * (6.545_129_211_026_145e1
                    + r * (-7.459_468_772_604_593e1
                        + r * (-8.338_389_400_363_697e1 - 1.305_407_234_049_409_4e1 * r)))))
            / (1.0
                + r * (2.083_721_132_869_775_4e1
                    + r * (7.181_381_218_257_926e1
                        + r * (5.927_012_255_604_608e1
                            + r * (9.221_688_797_873_743 + 1.829_517_485_205_353e-4 * r)))))
    } else if r < 3.41 {
        (3.234_017_911_631_797
            + r * (1.449_177_828_689_122e1
                + r * (6.839_737_025_659_153e-1
                    + r * (-1.812_544_277_917_891_8e1
                        + r * (-1.005_916_339_568_646_2e1 - 1.201_314_787_943_552_6 * r)))))
            / (1.0
                + r * (8.882_093_177_330_434
                    + r * (1.465_637_066_517_68e1
                        + r * (7.136_981_105_610_977
                            + r * (8.488_489_219_914_926e-1 + 1.095_757_609_882_959_5e-5 * r)))))
    } else if r < 6.7 {
        (3.125_223_578_008_758_5
            + r * (9.948_372_431_703_656
                + r * (-5.163_392_911_552_553
                    + r * (-1.107_053_468_930_936_8e1
                        + r * (-2.869_906_133_588_252_7 - 1.541_431_949_401_359_7e-1 * r)))))
            / (1.0
                + r * (7.076_769_154_309_172
                    + r * (8.108_634_112_236_153
                        + r * (2.030_707_606_430_904_4
                            + r * (1.089_797_223_413_182_9e-1 + 1.356_598_356_444_129_8e-7 * r)))))
    } else if r < 12.9 {
        (2.616_126_495_089_728_4
            + r * (2.250_881_388_987_032_3
                + r * (-3.688_196_041_019_692
                    + r * (-2.964_425_135_315_060_6
                        + r * (-4.759_516_954_678_321_6e-1 - 1.612_303_318_390_145e-2 * r)))))
            / (1.0
                + r * (3.251_745_516_903_592
                    + r * (2.128_203_027_215_319
                        + r * (3.366_374_640_562_64e-1
                            + r * (1.140_008_728_217_759_4e-2 + 3.084_809_357_096_678_7e-9 * r)))))
    } else {
        (2.322_684_904_787_230_3
            + r * (-4.279_965_073_450_209_4e-2
                + r * (-2.589_445_156_846_572_8
                    + r * (-8.638_518_121_921_376e-1
                        + r * (-6.512_759_375_378_167e-2 - 1.056_635_772_720_258_5e-3 * r)))))
            / (1.0
                + r * (1.936_131_611_925_441_2
                    + r * (6.132_084_132_919_749e-1
                        + r * (4.605_497_451_247_444e-2
                            + r * (7.471_447_992_167_225e-4 + 2.313_534_320_630_488_8e-11 * r)))))
    }
}

/// Multivariate normal log density, through the Cholesky factor of `cov`.
pub fn mvn_logpdf<T: Scalar>(x: &[T], mean: &[T], cov: &Matrix<T>) -> Result<T> {
    let l = cov.cholesky()?;
    mvn_logpdf_chol(x, mean, &l)
}

/// [`mvn_logpdf`] with a precomputed lower Cholesky factor.
pub fn mvn_logpdf_chol<T: Scalar>(x: &[T], mean: &[T], chol: &Matrix<T>) -> Result<T> {
    let p = chol.rows();
    if x.len() != p || mean.len() != p {
        return Err(VartaError::Shape(format!(
            "mvn density of dimension {p} evaluated at {}-vector with {}-vector mean",
            x.len(),
            mean.len()
        )));
    }
    let mut r: Vec<T> = x.iter().zip(mean).map(|(&a, &b)| a - b).collect();
    forward_substitute(chol, &mut r);
    let quad = r.iter().fold(T::zero(), |s, &v| s + v * v);
    let half = T::lit(0.5);
    Ok(-half * (T::from_usize_lossy(p) * T::lit(2.0 * LN_SQRT_2PI) + chol_log_det(chol) + quad))
}

/// Correlation matrix stored by its off-diagonal entries, row-major upper
/// triangle: `ρ12, ρ13, …, ρ1p, ρ23, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CorrelationMatrix<T: Scalar> {
    p: usize,
    rho: Vec<T>,
}

/// Position of `(i, j)`, `i < j`, in the row-major upper triangle.
#[inline]
pub fn upper_index(p: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < p);
    i * p - i * (i + 1) / 2 + (j - i - 1)
}

impl<T: Scalar> CorrelationMatrix<T> {
    pub fn identity(p: usize) -> Self {
        Self {
            p,
            rho: vec![T::zero(); p * (p - 1) / 2],
        }
    }

    /// Validates `|ρ| < 1` and positive definiteness.
    pub fn new(p: usize, rho: Vec<T>) -> Result<Self> {
        if rho.len() != p * p.saturating_sub(1) / 2 {
            return Err(VartaError::Shape(format!(
                "a {p}x{p} correlation matrix has {} off-diagonal entries, got {}",
                p * p.saturating_sub(1) / 2,
                rho.len()
            )));
        }
        if let Some(r) = rho.iter().find(|r| !(r.abs() < T::one())) {
            return Err(VartaError::Domain(format!("correlation {r} outside (-1, 1)")));
        }
        let c = Self { p, rho };
        c.matrix().cholesky()?;
        Ok(c)
    }

    /// Reads the upper triangle of a symmetric unit-diagonal matrix.
    pub fn from_matrix(m: &Matrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(VartaError::Shape("correlation matrix must be square".into()));
        }
        let p = m.rows();
        let tol = T::lit(1e-10);
        if !m.is_symmetric(tol) || m.diagonal().iter().any(|d| (*d - T::one()).abs() > tol) {
            return Err(VartaError::Domain(
                "correlation matrix must be symmetric with unit diagonal".into(),
            ));
        }
        let mut rho = Vec::with_capacity(p * (p - 1) / 2);
        for i in 0..p {
            for j in (i + 1)..p {
                rho.push(m[(i, j)]);
            }
        }
        Self::new(p, rho)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn rho(&self) -> &[T] {
        &self.rho
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => T::one(),
            std::cmp::Ordering::Less => self.rho[upper_index(self.p, i, j)],
            std::cmp::Ordering::Greater => self.rho[upper_index(self.p, j, i)],
        }
    }

    /// Full symmetric matrix with unit diagonal.
    pub fn matrix(&self) -> Matrix<T> {
        Matrix::from_fn(self.p, self.p, |i, j| self.get(i, j))
    }

    pub fn cholesky(&self) -> Result<Matrix<T>> {
        self.matrix().cholesky()
    }
}

/// Largest canonical partial correlation magnitude produced by
/// [`unconstrained_to_corr`].
const MAX_PARTIAL: f64 = 1.0 - 1e-12;

/// Maps a correlation matrix to `p(p-1)/2` unconstrained reals.
///
/// The Cholesky factor `L` of a correlation matrix has unit-norm rows, so
/// row `i` is a point on a sphere: `L[i][j] = z_ij · Π_{l<j} sqrt(1 - z_il²)`
/// with canonical partial correlations `z_ij ∈ (-1, 1)`. Each `z_ij` is sent
/// through `atanh`; the identity maps to the zero vector. Entries are
/// ordered row by row over the strict lower triangle: `(1,0), (2,0), (2,1), …`.
pub fn corr_to_unconstrained<T: Scalar>(c: &CorrelationMatrix<T>) -> Result<Vec<T>> {
    let p = c.dim();
    let l = c.cholesky()?;
    let mut v = Vec::with_capacity(p * (p - 1) / 2);
    for i in 1..p {
        let mut remaining = T::one();
        for j in 0..i {
            let z = l[(i, j)] / remaining.sqrt();
            v.push(z.atanh());
            remaining = remaining - l[(i, j)] * l[(i, j)];
        }
    }
    Ok(v)
}

/// Inverse of [`corr_to_unconstrained`]; every finite input yields a valid
/// correlation matrix.
pub fn unconstrained_to_corr<T: Scalar>(v: &[T], p: usize) -> Result<CorrelationMatrix<T>> {
    Ok(CorrelationMatrix {
        p,
        rho: corr_factor_from_unconstrained(v, p)
            .map(|l| upper_triangle_of_gram(&l))?,
    })
}

/// Lower Cholesky factor built from unconstrained coordinates.
pub fn corr_factor_from_unconstrained<T: Scalar>(v: &[T], p: usize) -> Result<Matrix<T>> {
    if v.len() != p * p.saturating_sub(1) / 2 {
        return Err(VartaError::Shape(format!(
            "{} unconstrained values for a {p}x{p} correlation matrix",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(VartaError::Domain("non-finite correlation parameter".into()));
    }
    let bound = T::lit(MAX_PARTIAL);
    let mut l = Matrix::zeros(p, p);
    if p > 0 {
        l[(0, 0)] = T::one();
    }
    let mut k = 0;
    for i in 1..p {
        let mut remaining = T::one();
        for j in 0..i {
            let z = v[k].tanh().max(-bound).min(bound);
            k += 1;
            l[(i, j)] = z * remaining.sqrt();
            remaining = remaining * (T::one() - z * z);
        }
        l[(i, i)] = remaining.sqrt();
    }
    Ok(l)
}

fn upper_triangle_of_gram<T: Scalar>(l: &Matrix<T>) -> Vec<T> {
    let p = l.rows();
    let mut rho = Vec::with_capacity(p * p.saturating_sub(1) / 2);
    for i in 0..p {
        for j in (i + 1)..p {
            let r = crate::linalg::dot(&l.row(i)[..=i], &l.row(j)[..=i]);
            rho.push(r.max(-T::one()).min(T::one()));
        }
    }
    rho
}
