//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vnoma::{mcsim, CMatrix, C64};

/// Cofactor expansion of a 3×3 determinant.
pub fn det3(a: [[f64; 3]; 3]) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Adjugate inverse of a 3×3 matrix.
pub fn inv3(a: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let d = det3(a);
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / d
        })
    })
}

/// Eigenvalues of a real symmetric 3×3 matrix from the roots of its
/// characteristic polynomial (trigonometric form), descending.
pub fn sym3_eigs(a: [[f64; 3]; 3]) -> [f64; 3] {
    let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
    let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
    let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p == 0.0 {
        return [q; 3];
    }
    let mut b = a;
    for (i, row) in b.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (a[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let r = (det3(b) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e1 = q + 2.0 * p * phi.cos();
    let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [e1, 3.0 * q - e1 - e3, e3]
}

/// `F̃(x)` as the divided difference over `λ` of
/// `λ^(N−1) E[1 − e^(−x/(λU))]`, `U ~ Beta(N−M+1, M−1)`, by composite Simpson
/// quadrature and the Lagrange form of the divided difference.
pub fn f_tilde_quadrature(x: f64, lambdas: &[f64], m: usize) -> f64 {
    let n = lambdas.len();
    let h = |l: f64| -> f64 {
        let base = l.powi(n as i32 - 1);
        if m == 1 {
            return base * (1.0 - (-x / l).exp());
        }
        let (a, b) = ((n - m + 1) as i32, (m - 1) as i32);
        let f = |u: f64| {
            if u <= 0.0 {
                if a == 1 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (1.0 - (-x / (l * u)).exp()) * u.powi(a - 1) * (1.0 - u).powi(b - 1)
            }
        };
        let steps = 200_000;
        let dh = 1.0 / steps as f64;
        let mut s = f(0.0) + f(1.0);
        for i in 1..steps {
            s += f(i as f64 * dh) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let beta = fact(a - 1) * fact(b - 1) / fact(a + b - 1);
        base * s * dh / 3.0 / beta
    };
    lambdas
        .iter()
        .enumerate()
        .map(|(i, &li)| {
            let denom: f64 = lambdas.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, &lj)| li - lj).product();
            h(li) / denom
        })
        .sum()
}

fn fact(n: i32) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn cn<R: Rng>(rng: &mut R) -> C64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    C64::from_polar((-u1.ln()).sqrt(), std::f64::consts::TAU * u2)
}

/// Fraction of draws with `[(ZᴴZ)⁻¹]_11 > 1/x`, where column 1 of `Z` is
/// `CN(0, diag(λ))` and the other `M−1` columns are `CN(0, I)` when
/// `correlated_interferers` is false, `CN(0, diag(λ))` otherwise.
pub fn zf_tail_mc(x: f64, lambdas: &[f64], m: usize, n: usize, seed: u64, correlated_interferers: bool) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nr = lambdas.len();
    let mut hits = 0usize;
    let mut z = CMatrix::zeros(nr, m);
    for _ in 0..n {
        for j in 0..m {
            for i in 0..nr {
                let s = if j == 0 || correlated_interferers { lambdas[i].sqrt() } else { 1.0 };
                z[(i, j)] = cn(&mut rng) * s;
            }
        }
        if mcsim::zf_statistic(&z, 0).unwrap() > 1.0 / x {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Real part of a complex matrix as nested arrays (3×3).
pub fn real3(a: &CMatrix) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = a[(i, j)].re;
        }
    }
    out
}
