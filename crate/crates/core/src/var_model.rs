//! Latent VAR(k) parameter algebra under the unit-variance constraint:
//! companion form, stationary autocovariances and the implied innovation
//! covariance `Ω`.

use crate::error::{Result, VartaError};
use crate::gaussian::CorrelationMatrix;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Coefficients `A_1..A_k` and the stationary correlation `Σ = Γ_0` of the
/// latent process `Z_t = Σ_i A_i Z_{t-i} + η_t`, `η_t ~ N(0, Ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarParams<T: Scalar> {
    a: Vec<Matrix<T>>,
    sigma: CorrelationMatrix<T>,
}

/// Latent autocovariances `Γ_0..Γ_{k-1}`, `Γ_s = Cov(Z_t, Z_{t-s})`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocovSequence<T: Scalar> {
    pub gammas: Vec<Matrix<T>>,
}

impl<T: Scalar> VarParams<T> {
    /// Checks shapes only; use [`VarParams::validate`] for stationarity and
    /// positive definiteness of `Ω`.
    pub fn new(a: Vec<Matrix<T>>, sigma: CorrelationMatrix<T>) -> Result<Self> {
        let p = sigma.dim();
        if a.is_empty() {
            return Err(VartaError::Shape("VAR order must be at least 1".into()));
        }
        for (i, m) in a.iter().enumerate() {
            if m.rows() != p || m.cols() != p {
                return Err(VartaError::Shape(format!(
                    "A{} is {}x{}, expected {p}x{p}",
                    i + 1,
                    m.rows(),
                    m.cols()
                )));
            }
            if m.as_slice().iter().any(|x| !x.is_finite()) {
                return Err(VartaError::Domain(format!("A{} has non-finite entries", i + 1)));
            }
        }
        Ok(Self { a, sigma })
    }

    /// Independent white noise: `A = 0`, `Σ = I`.
    pub fn white_noise(p: usize, k: usize) -> Self {
        Self {
            a: vec![Matrix::zeros(p, p); k],
            sigma: CorrelationMatrix::identity(p),
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn order(&self) -> usize {
        self.a.len()
    }

    pub fn coefficients(&self) -> &[Matrix<T>] {
        &self.a
    }

    pub fn sigma(&self) -> &CorrelationMatrix<T> {
        &self.sigma
    }

    /// Full invariant check: stationary companion matrix and PD `Ω`.
    pub fn validate(&self) -> Result<()> {
        self.derive_omega().map(drop)
    }

    /// `kp x kp` companion matrix: `A_1 … A_k` across the first block row,
    /// identities on the block subdiagonal.
    pub fn companion(&self) -> Matrix<T> {
        let (p, k) = (self.dim(), self.order());
        let mut b = Matrix::zeros(k * p, k * p);
        for (i, ai) in self.a.iter().enumerate() {
            b.set_block(0, i * p, ai);
        }
        for i in 1..k {
            for d in 0..p {
                b[(i * p + d, (i - 1) * p + d)] = T::one();
            }
        }
        b
    }

    pub fn spectral_radius(&self) -> Result<T> {
        self.companion().spectral_radius()
    }

    fn check_stationary(&self) -> Result<()> {
        let r = self.spectral_radius()?;
        if r < T::one() {
            Ok(())
        } else {
            Err(VartaError::NonStationary { radius: r.as_f64() })
        }
    }

    /// `Γ_0 = Σ` and `Γ_1..Γ_{k-1}` from the Yule–Walker relations
    /// `Γ_s = Σ_i A_i Γ_{s-i}` (`Γ_{-j} = Γ_j'`), `s = 1..k-1`, solved as one
    /// linear system in the `(k-1)p²` unknown entries.
    pub fn solve_autocov(&self) -> Result<AutocovSequence<T>> {
        self.check_stationary()?;
        let (p, k) = (self.dim(), self.order());
        let gamma0 = self.sigma.matrix();
        if k == 1 {
            return Ok(AutocovSequence {
                gammas: vec![gamma0],
            });
        }
        let pp = p * p;
        let n_unknown = (k - 1) * pp;
        let var = |lag: usize, r: usize, c: usize| (lag - 1) * pp + r * p + c;
        let mut lhs = Matrix::zeros(n_unknown, n_unknown);
        let mut rhs = vec![T::zero(); n_unknown];

        for s in 1..k {
            for r in 0..p {
                for c in 0..p {
                    let eq = var(s, r, c);
                    lhs[(eq, eq)] = lhs[(eq, eq)] + T::one();
                    // Γ_s[r][c] - Σ_i Σ_m A_i[r][m] G(s-i)[m][c] = 0
                    for (i, ai) in self.a.iter().enumerate() {
                        let lag = s as isize - (i as isize + 1);
                        for m in 0..p {
                            let coef = ai[(r, m)];
                            if coef == T::zero() {
                                continue;
                            }
                            match lag {
                                0 => rhs[eq] = rhs[eq] + coef * gamma0[(m, c)],
                                l if l > 0 => {
                                    let u = var(l as usize, m, c);
                                    lhs[(eq, u)] = lhs[(eq, u)] - coef;
                                }
                                l => {
                                    // Γ_{-j}[m][c] = Γ_j[c][m]
                                    let u = var((-l) as usize, c, m);
                                    lhs[(eq, u)] = lhs[(eq, u)] - coef;
                                }
                            }
                        }
                    }
                }
            }
        }
        let sol = lhs.solve(&rhs)?;
        let mut gammas = Vec::with_capacity(k);
        gammas.push(gamma0);
        for s in 1..k {
            gammas.push(Matrix::from_vec(p, p, sol[(s - 1) * pp..s * pp].to_vec())?);
        }
        Ok(AutocovSequence { gammas })
    }

    /// Block-Toeplitz covariance `Σ_k` of the stacked state
    /// `(Z_t, …, Z_{t-k+1})`: block `(i, j)` is `Γ_{j-i}` above the diagonal
    /// and `Γ_{i-j}'` below.
    pub fn companion_covariance(&self) -> Result<Matrix<T>> {
        Ok(self.solve_autocov()?.stacked())
    }

    /// Innovation covariance `Ω` that makes every latent variance one.
    /// `k = 1`: `Σ - AΣA'`; otherwise the upper-left block of
    /// `Θ = Σ_k - BΣ_kB'`.
    pub fn derive_omega(&self) -> Result<Matrix<T>> {
        let p = self.dim();
        let mut omega = if self.order() == 1 {
            self.check_stationary()?;
            let s = self.sigma.matrix();
            let a = &self.a[0];
            &s - &(&(a * &s) * &a.transpose())
        } else {
            let sk = self.companion_covariance()?;
            let b = self.companion();
            let theta = &sk - &(&(&b * &sk) * &b.transpose());
            theta.block(0, 0, p, p)
        };
        omega.symmetrize();
        match omega.cholesky() {
            Ok(_) => Ok(omega),
            Err(_) => Err(VartaError::OmegaNotPd),
        }
    }

    /// `Ω` expanded block by block: `Γ_0 - Σ_r (Σ_i A_i C_{ir}) A_r'` with
    /// `C_{ir}` the `(i, r)` block of `Σ_k`. Kept as an independent route to
    /// the same matrix as [`VarParams::derive_omega`].
    pub fn omega_by_expansion(&self) -> Result<Matrix<T>> {
        let ac = self.solve_autocov()?;
        let k = self.order();
        let mut omega = ac.gammas[0].clone();
        for r in 0..k {
            let mut inner = Matrix::zeros(self.dim(), self.dim());
            for i in 0..k {
                inner = &inner + &(&self.a[i] * &ac.block(i, r));
            }
            omega = &omega - &(&inner * &self.a[r].transpose());
        }
        omega.symmetrize();
        Ok(omega)
    }
}

impl<T: Scalar> AutocovSequence<T> {
    /// Block `(i, j)` of the stacked covariance.
    pub fn block(&self, i: usize, j: usize) -> Matrix<T> {
        if j >= i {
            self.gammas[j - i].clone()
        } else {
            self.gammas[i - j].transpose()
        }
    }

    pub fn stacked(&self) -> Matrix<T> {
        let k = self.gammas.len();
        let p = self.gammas[0].rows();
        let mut s = Matrix::zeros(k * p, k * p);
        for i in 0..k {
            for j in 0..k {
                s.set_block(i * p, j * p, &self.block(i, j));
            }
        }
        s.symmetrize();
        s
    }
}
