//! A quick pass over the numerical invariants on small random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use srcscreen::linalg::{
    condition_number_sym, grothendieck_factorize, haar_orthonormal, inf_to_one_norm, principal_angle_distance,
    select_columns, stable_rank, sym_eigenvalues_desc, sym_spectral_norm, FactorizeOptions, NormMode,
};
use srcscreen::ratebounds::{sota_lower_general, sota_upper_general};
use srcscreen::screening::genie_search;
use srcscreen::simgen::{diversity_matrix, sample_heads_orthogonal};
use srcscreen::{DenseMatrix, HeadMatrix, RateInputs, ScreeningConfig};

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Check {
    match f() {
        Ok(detail) => Check {
            name,
            passed: true,
            detail,
        },
        Err(detail) => Check {
            name,
            passed: false,
            detail,
        },
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn sym_zero_diag(s: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let g = gaussian(s, s, rng);
    let mut h = (&g + g.transpose()) * 0.5;
    h.fill_diagonal(0.0);
    h
}

pub fn run_all() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f);
    vec![
        check("inf_to_one_bracket", || {
            for _ in 0..100 {
                let s = rng.random_range(1..=12);
                let h = gaussian(s, s, &mut rng);
                let exact = inf_to_one_norm(&h, NormMode::default())
                    .map_err(|e| e.to_string())?
                    .lower;
                let b = inf_to_one_norm(&h, NormMode::Bracket { restarts: 8, seed: 1 }).map_err(|e| e.to_string())?;
                let slack = 1e-9 * exact.max(1.0);
                if b.lower > exact + slack || exact > b.upper + slack {
                    return Err(format!("bracket [{}, {}] misses {exact}", b.lower, b.upper));
                }
            }
            Ok("100 matrices".into())
        }),
        check("grothendieck_factorization", || {
            let mut worst: f64 = 0.0;
            for _ in 0..20 {
                let s = rng.random_range(2..=10);
                let h = sym_zero_diag(s, &mut rng);
                let f = grothendieck_factorize(&h, &FactorizeOptions::default()).map_err(|e| e.to_string())?;
                let exact = inf_to_one_norm(&h, NormMode::default())
                    .map_err(|e| e.to_string())?
                    .lower;
                let trace = f.diag.norm_squared();
                let recon = (f.reconstruct() - &h).amax();
                let ratio = f.certified_norm_bound / exact;
                if (trace - 1.0).abs() > 1e-6 || recon > 1e-6 || ratio > 2.0 * (1.0 + 1e-4) {
                    return Err(format!("trace {trace}, reconstruction {recon:.2e}, ratio {ratio}"));
                }
                worst = worst.max(ratio);
            }
            Ok(format!("20 matrices, worst ‖T‖/‖H‖∞→1 = {worst:.3}"))
        }),
        check("stable_rank_rotation", || {
            for _ in 0..50 {
                let k = rng.random_range(1..=6);
                let d = rng.random_range(k..=20);
                let q = haar_orthonormal(d, k, &mut rng);
                let a = gaussian(k, 40, &mut rng);
                let lhs = stable_rank(&(&q * &a)).map_err(|e| e.to_string())?;
                let rhs = stable_rank(&a).map_err(|e| e.to_string())?;
                if (lhs - rhs).abs() > 1e-9 {
                    return Err(format!("{lhs} vs {rhs}"));
                }
            }
            Ok("50 pairs".into())
        }),
        check("principal_angle_symmetry", || {
            for _ in 0..50 {
                let b1 = haar_orthonormal(10, 3, &mut rng);
                let b2 = haar_orthonormal(10, 3, &mut rng);
                let r = haar_orthonormal(3, 3, &mut rng);
                let d12 = principal_angle_distance(&b1, &b2).map_err(|e| e.to_string())?;
                let d21 = principal_angle_distance(&b2, &b1).map_err(|e| e.to_string())?;
                let rot = principal_angle_distance(&(&b1 * &r), &b2).map_err(|e| e.to_string())?;
                if (d12 - d21).abs() > 1e-12 || !(0.0..=1.0).contains(&d12) || (rot - d12).abs() > 1e-9 {
                    return Err(format!("{d12} / {d21} / {rot}"));
                }
            }
            Ok("50 pairs".into())
        }),
        check("weyl_union", || {
            for _ in 0..200 {
                let a = gaussian(4, rng.random_range(4..12), &mut rng);
                let b = gaussian(4, rng.random_range(4..12), &mut rng);
                let (ga, gb) = (&a * a.transpose(), &b * b.transpose());
                let sum = condition_number_sym(&(&ga + &gb));
                let bound = condition_number_sym(&ga).max(condition_number_sym(&gb));
                if sum > bound + 1e-8 {
                    return Err(format!("κ(sum) = {sum} > {bound}"));
                }
            }
            Ok("200 pairs".into())
        }),
        check("orthogonal_spectrum", || {
            let mult = [12, 6, 2];
            let (a, _) = sample_heads_orthogonal(3, &mult, &mut rng).map_err(|e| e.to_string())?;
            let ev = sym_eigenvalues_desc(&diversity_matrix(&a, &[4; 20]).map_err(|e| e.to_string())?);
            for (e, m) in ev.iter().zip(mult) {
                if (e - m as f64 / 20.0).abs() > 1e-10 {
                    return Err(format!("eigenvalues {ev:?}"));
                }
            }
            Ok(format!("eigenvalues {ev:.3?}"))
        }),
        check("genie_certificates", || {
            let g = gaussian(6, 300, &mut rng);
            let heads = HeadMatrix::normalized(g).map_err(|e| e.to_string())?;
            let res = genie_search(&heads, &ScreeningConfig::default(), 0, &mut rng).map_err(|e| e.to_string())?;
            for b in &res.batches {
                let cols = select_columns(heads.matrix(), b);
                let dev = sym_spectral_norm(&(cols.tr_mul(&cols) - DenseMatrix::identity(b.len(), b.len())));
                if dev > 0.5 + 1e-6 {
                    return Err(format!("batch deviation {dev}"));
                }
            }
            Ok(format!("{} batches, {} sources", res.batches.len(), res.selected.len()))
        }),
        check("rate_bounds_order", || {
            for _ in 0..1000 {
                let m = rng.random_range(1..300);
                let lk: f64 = rng.random_range(1e-3..1.0);
                let inp = RateInputs {
                    d: rng.random_range(1..100),
                    k: 1,
                    m,
                    n: m + rng.random_range(0..10_000),
                    lambda1: lk * rng.random_range(1.0..20.0),
                    lambdak: lk,
                    s_size: m,
                    beta: vec![lk],
                };
                let lo = sota_lower_general(&inp).map_err(|e| e.to_string())?;
                let hi = sota_upper_general(&inp).map_err(|e| e.to_string())?;
                if lo > hi + 1e-12 {
                    return Err(format!("lower {lo} > upper {hi}"));
                }
            }
            Ok("1000 inputs".into())
        }),
    ]
}
