//! Sample paths of the latent VAR and of the observed VARTA series.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VartaError};
use crate::likelihood::{delatentize, TimeSeriesData, VartaModel};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::var_model::VarParams;

/// Random stream specification.
///
/// The generator is xoshiro256++ seeded through `seed_from_u64(seed)` (a
/// SplitMix64 expansion of the seed). Stream `i` is that generator advanced
/// by `i` calls of `jump()` (2¹²⁸ steps each), so parallel consumers get
/// non-overlapping sequences. Normal variates come from the ziggurat
/// sampler of `rand_distr::StandardNormal`, drawn in `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
}

pub const RNG_ALGORITHM: &str = "xoshiro256++";

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    /// Generator positioned at the start of this stream.
    pub fn rng(&self) -> Xoshiro256PlusPlus {
        let mut r = Xoshiro256PlusPlus::seed_from_u64(self.seed);
        for _ in 0..self.stream {
            r.jump();
        }
        r
    }

    /// Spec of the `i`-th stream after this one.
    pub fn substream(&self, i: u64) -> Self {
        Self {
            seed: self.seed,
            stream: self.stream + i,
        }
    }

    /// Generators for streams `stream, stream+1, …` (`count` of them),
    /// produced with one jump each.
    pub fn streams(&self, count: usize) -> Vec<Xoshiro256PlusPlus> {
        let mut cur = self.rng();
        (0..count)
            .map(|_| {
                let r = cur.clone();
                cur.jump();
                r
            })
            .collect()
    }
}

pub(crate) fn normal_draw<T: Scalar>(rng: &mut Xoshiro256PlusPlus) -> T {
    let x: f64 = StandardNormal.sample(rng);
    T::lit(x)
}

/// How the first `k` latent vectors are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Initialization {
    /// Joint draw from `N(0, Σ_k)`: stationary from the first row.
    #[default]
    Stationary,
    /// Start at zero and discard this many steps.
    BurnIn(usize),
}

/// Latent path with its innovations; `eta` row `t` is `η_t` for `t ≥ k`
/// (rows before `k` are zero under stationary initialization).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath<T: Scalar> {
    pub z: Matrix<T>,
    pub eta: Matrix<T>,
}

/// `Σ_i A_i Z_{t-i}` for row `t` of `z`.
pub(crate) fn var_mean<T: Scalar>(a: &[Matrix<T>], z: &Matrix<T>, t: usize, out: &mut [T]) {
    out.iter_mut().for_each(|v| *v = T::zero());
    for (lag, al) in a.iter().enumerate() {
        let prev = z.row(t - lag - 1);
        for (r, o) in out.iter_mut().enumerate() {
            *o = *o + crate::linalg::dot(al.row(r), prev);
        }
    }
}

/// `L e` for lower-triangular `L`.
pub(crate) fn lower_mul<T: Scalar>(l: &Matrix<T>, e: &[T], out: &mut [T]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = (0..=i).fold(T::zero(), |acc, j| acc + l[(i, j)] * e[j]);
    }
}

pub fn simulate_latent_path<T: Scalar>(
    vp: &VarParams<T>,
    n: usize,
    rng: &RngSpec,
    init: Initialization,
) -> Result<LatentPath<T>> {
    if n == 0 {
        return Err(VartaError::Domain("path length must be at least 1".into()));
    }
    let (p, k) = (vp.dim(), vp.order());
    let omega_chol = vp.derive_omega()?.cholesky().map_err(|_| VartaError::OmegaNotPd)?;
    let mut g = rng.rng();
    let burn = match init {
        Initialization::Stationary => 0,
        Initialization::BurnIn(b) => b,
    };
    let total = n + burn + if burn > 0 { k } else { 0 };
    let mut z = Matrix::zeros(total.max(k), p);
    let mut eta = Matrix::zeros(total.max(k), p);
    if burn == 0 {
        let sk_chol = vp.companion_covariance()?.cholesky()?;
        let e: Vec<T> = (0..k * p).map(|_| normal_draw(&mut g)).collect();
        let mut w = vec![T::zero(); k * p];
        lower_mul(&sk_chol, &e, &mut w);
        // w stacks (Z_{k-1}, Z_{k-2}, …, Z_0)
        for b in 0..k {
            z.row_mut(k - 1 - b).copy_from_slice(&w[b * p..(b + 1) * p]);
        }
    }
    let mut mean = vec![T::zero(); p];
    let mut e = vec![T::zero(); p];
    let mut shock = vec![T::zero(); p];
    for t in k..total {
        var_mean(vp.coefficients(), &z, t, &mut mean);
        e.iter_mut().for_each(|v| *v = normal_draw(&mut g));
        lower_mul(&omega_chol, &e, &mut shock);
        eta.row_mut(t).copy_from_slice(&shock);
        for (zi, (m, s)) in z.row_mut(t).iter_mut().zip(mean.iter().zip(&shock)) {
            *zi = *m + *s;
        }
    }
    let start = total.max(k) - n;
    Ok(LatentPath {
        z: z.block(start, 0, n, p),
        eta: eta.block(start, 0, n, p),
    })
}

/// `n x p` latent path, stationary from the first row.
pub fn simulate_latent<T: Scalar>(vp: &VarParams<T>, n: usize, rng: &RngSpec) -> Result<Matrix<T>> {
    Ok(simulate_latent_path(vp, n, rng, Initialization::Stationary)?.z)
}

/// Observed series `X_it = F_i⁻¹(Φ(Z_it))` of a simulated latent path.
pub fn simulate_varta<T: Scalar>(model: &VartaModel<T>, n: usize, rng: &RngSpec) -> Result<TimeSeriesData<T>> {
    let z = simulate_latent(&model.var, n, rng)?;
    delatentize(&model.marginals, &z, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::CorrelationMatrix;
    use crate::likelihood::latentize;
    use crate::marginals::MarginalSpec;
    use rand::RngCore;

    fn trivariate() -> VarParams<f64> {
        let a = Matrix::from_rows(&[
            vec![0.7, 0.2, 0.1],
            vec![0.3, 0.5, 0.2],
            vec![0.1, 0.7, -0.2],
        ])
        .unwrap();
        VarParams::new(vec![a], CorrelationMatrix::new(3, vec![0.5, 0.3, 0.7]).unwrap()).unwrap()
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let s = RngSpec::new(42);
        let a: Vec<u64> = (0..4).map(|_| s.rng().next_u64()).collect();
        assert!(a.iter().all(|v| *v == a[0]));
        let mut gens = s.streams(3);
        let firsts: Vec<u64> = gens.iter_mut().map(|g| g.next_u64()).collect();
        assert_ne!(firsts[0], firsts[1]);
        assert_eq!(firsts[2], s.substream(2).rng().next_u64());
        assert_ne!(RngSpec::new(43).rng().next_u64(), firsts[0]);
    }

    #[test]
    fn reproducible_paths() {
        let m = VartaModel::new(trivariate(), vec![MarginalSpec::weibull(2.0, 3.0).unwrap(); 3]).unwrap();
        let a = simulate_varta(&m, 200, &RngSpec::new(7)).unwrap();
        let b = simulate_varta(&m, 200, &RngSpec::new(7)).unwrap();
        assert_eq!(a, b);
        assert!(a.values().as_slice().iter().all(|v| *v > 0.0));
        assert_ne!(a, simulate_varta(&m, 200, &RngSpec::new(8)).unwrap());
    }

    #[test]
    fn innovations_reproduce_path() {
        let vp = trivariate();
        let path = simulate_latent_path(&vp, 50, &RngSpec::new(3), Initialization::Stationary).unwrap();
        let a = &vp.coefficients()[0];
        for t in 1..50 {
            let pred = a.mul_vec(path.z.row(t - 1));
            for i in 0..3 {
                assert!((path.z[(t, i)] - pred[i] - path.eta[(t, i)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn gaussian_marginals_return_latent_path() {
        let vp = trivariate();
        let m = VartaModel::new(vp.clone(), vec![MarginalSpec::standard_normal(); 3]).unwrap();
        let z = simulate_latent(&vp, 100, &RngSpec::new(11)).unwrap();
        let x = simulate_varta(&m, 100, &RngSpec::new(11)).unwrap();
        assert_eq!(x.values(), &z);
    }

    #[test]
    fn latentize_recovers_path() {
        let vp = trivariate();
        let m = VartaModel::new(
            vp.clone(),
            vec![
                MarginalSpec::weibull(2.0, 3.0).unwrap(),
                MarginalSpec::weibull(2.0, 5.0).unwrap(),
                MarginalSpec::weibull(3.0, 1.0).unwrap(),
            ],
        )
        .unwrap();
        let z = simulate_latent(&vp, 500, &RngSpec::new(5)).unwrap();
        let x = simulate_varta(&m, 500, &RngSpec::new(5)).unwrap();
        assert!(latentize(&m, &x).unwrap().max_abs_diff(&z) < 1e-8);
    }

    #[test]
    fn burn_in_mode_and_short_paths() {
        let vp = trivariate();
        let z = simulate_latent_path(&vp, 10, &RngSpec::new(1), Initialization::BurnIn(1000)).unwrap();
        assert_eq!((z.z.rows(), z.z.cols()), (10, 3));
        let a1 = Matrix::from_rows(&[vec![0.5]]).unwrap();
        let a2 = Matrix::from_rows(&[vec![0.2]]).unwrap();
        let ar2 = VarParams::new(vec![a1, a2], CorrelationMatrix::identity(1)).unwrap();
        assert_eq!(simulate_latent(&ar2, 1, &RngSpec::new(1)).unwrap().rows(), 1);
        assert!(simulate_latent(&ar2, 0, &RngSpec::new(1)).is_err());
    }

    #[test]
    fn single_precision_path() {
        let vp = VarParams::<f32>::new(
            vec![Matrix::from_rows(&[vec![0.5f32]]).unwrap()],
            CorrelationMatrix::identity(1),
        )
        .unwrap();
        let z = simulate_latent(&vp, 20, &RngSpec::new(9)).unwrap();
        assert!(z.as_slice().iter().all(|v| v.is_finite()));
    }
}
