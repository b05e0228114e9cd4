mod common;

use common::{matmul, transpose};
use proptest::prelude::*;
use varta::simulation::simulate_latent;
use varta::{Mat, RngSpec, VarParams};

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.to_rows()
}

fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn omega_expansion_matches_companion_block(seed in any::<u64>(), p in 1usize..=4, k in 2usize..=3) {
        let vp = common::random_var(p, k, &mut common::rng(seed));
        let a = vp.derive_omega().unwrap();
        let b = vp.omega_by_expansion().unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-9, "{}", a.max_abs_diff(&b));
    }

    #[test]
    fn var1_fixed_point(seed in any::<u64>(), p in 1usize..=5) {
        let vp = common::random_var(p, 1, &mut common::rng(seed));
        let a = rows(&vp.coefficients()[0]);
        let s = common::sigma_of(vp.sigma());
        let asa = matmul(&matmul(&a, &s), &transpose(&a));
        let omega = rows(&vp.derive_omega().unwrap());
        let rebuilt: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| asa[i][j] + omega[i][j]).collect()).collect();
        prop_assert!(max_diff(&rebuilt, &s) < 1e-10);
        prop_assert!(vp.omega_by_expansion().unwrap().max_abs_diff(&vp.derive_omega().unwrap()) < 1e-12);
    }

    /// `Γ_0 = Σ_i A_i Γ_i' + Ω` and `Γ_s = Σ_i A_i Γ_{s-i}` for `0 < s < k`.
    #[test]
    fn yule_walker_relations(seed in any::<u64>(), p in 1usize..=3, k in 2usize..=3) {
        let vp = common::random_var(p, k, &mut common::rng(seed));
        // solved lags 0..k-1, extended to lag k by the recursion
        let all = autocov_to(&vp, k);
        let g = |s: isize| if s >= 0 { all[s as usize].clone() } else { transpose(&all[(-s) as usize]) };
        let omega = rows(&vp.derive_omega().unwrap());
        let a: Vec<Vec<Vec<f64>>> = vp.coefficients().iter().map(rows).collect();
        for s in 0..k as isize {
            let mut rhs = if s == 0 { omega.clone() } else { vec![vec![0.0; p]; p] };
            for (i, ai) in a.iter().enumerate() {
                let term = matmul(ai, &g(s - i as isize - 1));
                for r in 0..p {
                    for c in 0..p {
                        rhs[r][c] += term[r][c];
                    }
                }
            }
            prop_assert!(max_diff(&rhs, &g(s)) < 1e-10);
        }
        let sigma = common::sigma_of(vp.sigma());
        prop_assert!(max_diff(&g(0), &sigma) < 1e-15);
    }
}

/// `Γ_h` for `h = 0..=h_max` by the VAR recursion from the solved
/// initial lags.
fn autocov_to(vp: &VarParams, h_max: usize) -> Vec<Vec<Vec<f64>>> {
    let ac = vp.solve_autocov().unwrap();
    let k = vp.order();
    let p = vp.dim();
    let a: Vec<Vec<Vec<f64>>> = vp.coefficients().iter().map(rows).collect();
    let mut g: Vec<Vec<Vec<f64>>> = ac.gammas.iter().map(rows).collect();
    let at = |g: &Vec<Vec<Vec<f64>>>, s: isize| if s >= 0 { g[s as usize].clone() } else { transpose(&g[(-s) as usize]) };
    for h in k..=h_max {
        let mut next = vec![vec![0.0; p]; p];
        for (i, ai) in a.iter().enumerate() {
            let t = matmul(ai, &at(&g, h as isize - i as isize - 1));
            for r in 0..p {
                for c in 0..p {
                    next[r][c] += t[r][c];
                }
            }
        }
        g.push(next);
    }
    g
}

/// Sample `E[Z_{i,t} Z_{j,t-s}]` (known zero mean) against its theoretical
/// value, with Bartlett's large-sample standard error.
fn check_autocov(vp: &VarParams, n: usize, seed: u64, lags: &[usize]) {
    let z = simulate_latent(vp, n, &RngSpec::new(seed)).unwrap();
    let p = vp.dim();
    let h_max = 400;
    let g = autocov_to(vp, h_max + 10);
    let gam = |i: usize, j: usize, h: isize| -> f64 {
        if h >= 0 {
            g[h as usize][i][j]
        } else {
            g[(-h) as usize][j][i]
        }
    };
    for &s in lags {
        for i in 0..p {
            for j in 0..p {
                let est = (s..n).map(|t| z[(t, i)] * z[(t - s, j)]).sum::<f64>() / n as f64;
                let var: f64 = (-(h_max as isize)..=h_max as isize)
                    .map(|h| gam(i, i, h) * gam(j, j, h) + gam(i, j, h + s as isize) * gam(j, i, h - s as isize))
                    .sum::<f64>()
                    / n as f64;
                let se = var.sqrt();
                let truth = gam(i, j, s as isize);
                assert!(
                    (est - truth).abs() < 3.0 * se,
                    "lag {s} ({i},{j}): {est} vs {truth} (se {se})"
                );
            }
        }
    }
}

#[test]
fn stationarity_closure_var1() {
    let vp = common::trivariate().var;
    check_autocov(&vp, 1_000_000, 1, &[0, 1]);
    let a = rows(&vp.coefficients()[0]);
    let gamma1 = matmul(&a, &common::sigma_of(vp.sigma()));
    assert!(max_diff(&gamma1, &autocov_to(&vp, 1)[1]) < 1e-12);
}

#[test]
fn stationarity_closure_var2() {
    let vp = common::random_var(2, 2, &mut common::rng(2024));
    check_autocov(&vp, 1_000_000, 2, &[0, 1, 2]);
}
