//! Top singular pairs by power iteration, and the SVD-based helpers behind the
//! nuclear-norm ball.
//!
//! Matrices are dense, row-major `rows × cols` slices.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::exec::Exec;
use crate::linalg::{dot, norm};
use crate::rng::Rng;

/// Row-parallel matvecs kick in above this many entries.
const PAR_MATVEC_MIN: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub struct SingularPair {
    pub u: Vec<f64>,
    pub s: f64,
    pub v: Vec<f64>,
    /// Both residuals `‖Av − su‖`, `‖Aᵀu − sv‖` are within `tol·s`.
    pub converged: bool,
    pub iterations: usize,
}

fn matvec(a: &[f64], rows: usize, cols: usize, v: &[f64], exec: Exec, out: &mut [f64]) {
    let exec = if rows * cols >= PAR_MATVEC_MIN {
        exec
    } else {
        Exec::Sequential
    };
    exec.fill(out, |i| dot(&a[i * cols..(i + 1) * cols], v));
}

fn matvec_t(a: &[f64], rows: usize, cols: usize, u: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..rows {
        let ui = u[i];
        if ui != 0.0 {
            for (o, aij) in out.iter_mut().zip(&a[i * cols..(i + 1) * cols]) {
                *o += ui * aij;
            }
        }
    }
}

/// Power iteration on `AᵀA` from the given start vector (need not be unit).
///
/// Each sweep sets `u = Av/‖Av‖`, `s = ‖Av‖`, which makes `‖Av − su‖ = 0`,
/// then certifies `‖Aᵀu − sv‖ ≤ tol·s` before moving `v` to `Aᵀu/‖Aᵀu‖`.
/// On exhaustion the last iterate is returned with `converged = false`.
/// A zero matrix yields `s = 0` and the canonical pair `(e₀, e₀)`.
pub fn power_iteration(
    a: &[f64],
    rows: usize,
    cols: usize,
    start: &[f64],
    tol: f64,
    max_iter: usize,
    exec: Exec,
) -> SingularPair {
    debug_assert_eq!(a.len(), rows * cols);
    let canonical = || {
        let mut u = vec![0.0; rows];
        let mut v = vec![0.0; cols];
        u[0] = 1.0;
        v[0] = 1.0;
        SingularPair {
            u,
            s: 0.0,
            v,
            converged: true,
            iterations: 0,
        }
    };
    if a.iter().all(|&x| x == 0.0) {
        return canonical();
    }

    let mut v = start.to_vec();
    let mut nv = norm(&v);
    if !(nv > 0.0) || !nv.is_finite() {
        v = vec![1.0; cols];
        nv = (cols as f64).sqrt();
    }
    v.iter_mut().for_each(|x| *x /= nv);

    let mut u = vec![0.0; rows];
    let mut w = vec![0.0; cols];
    let mut s = 0.0;
    for it in 1..=max_iter.max(1) {
        matvec(a, rows, cols, &v, exec, &mut u);
        s = norm(&u);
        if s == 0.0 {
            // start orthogonal to the row space; restart from all-ones
            v = vec![1.0 / (cols as f64).sqrt(); cols];
            continue;
        }
        u.iter_mut().for_each(|x| *x /= s);
        matvec_t(a, rows, cols, &u, &mut w);
        let resid: f64 = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - s * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if resid <= tol * s {
            return SingularPair {
                u,
                s,
                v,
                converged: true,
                iterations: it,
            };
        }
        let nw = norm(&w);
        v.iter_mut().zip(&w).for_each(|(vi, wi)| *vi = wi / nw);
    }
    SingularPair {
        u,
        s,
        v,
        converged: false,
        iterations: max_iter,
    }
}

/// Largest Krylov subspace built before an explicit restart.
const KRYLOV_DIM: usize = 64;

/// Ritz values are extracted every this many Lanczos steps.
const CHECK_EVERY: usize = 8;

fn orthogonalize(x: &mut [f64], basis: &[Vec<f64>]) {
    // two classical Gram-Schmidt passes
    for _ in 0..2 {
        for b in basis {
            let c = dot(x, b);
            x.iter_mut().zip(b).for_each(|(xi, bi)| *xi -= c * bi);
        }
    }
}

/// Top triplet `(σ, x, y)` of the upper bidiagonal matrix with diagonal
/// `alpha` and superdiagonal `beta`, so that `B y = σ x`.
fn bidiagonal_top(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let k = alpha.len();
    let mut b = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        b[(i, i)] = alpha[i];
        if i + 1 < k {
            b[(i, i + 1)] = beta[i];
        }
    }
    let pair = dense_top_pair_of(&b);
    (pair.s, pair.u, pair.v)
}

/// Golub–Kahan–Lanczos bidiagonalization with full reorthogonalization and
/// explicit restarts, started from `start`.
///
/// Ritz pairs are accepted with the same certificate as [`power_iteration`]:
/// with `u = Av/‖Av‖` and `s = ‖Av‖`, require `‖Aᵀu − sv‖ ≤ tol·s`.
/// `max_iter` bounds the number of `(A·, Aᵀ·)` product pairs; `iterations`
/// reports how many were used.
pub fn lanczos_top_pair(
    a: &[f64],
    rows: usize,
    cols: usize,
    start: &[f64],
    tol: f64,
    max_iter: usize,
    exec: Exec,
) -> SingularPair {
    debug_assert_eq!(a.len(), rows * cols);
    if a.iter().all(|&x| x == 0.0) {
        return power_iteration(a, rows, cols, start, tol, 1, exec);
    }
    let budget = max_iter.max(1);
    let krylov = KRYLOV_DIM.min(rows).min(cols).max(1);
    let mut used = 0usize;
    let mut v0 = start.to_vec();
    let mut best: Option<SingularPair> = None;

    while used < budget {
        let nv = norm(&v0);
        if !(nv > 0.0) || !nv.is_finite() {
            v0 = vec![1.0; cols];
        }
        let nv = norm(&v0);
        v0.iter_mut().for_each(|x| *x /= nv);

        let mut vs: Vec<Vec<f64>> = vec![v0.clone()];
        let mut us: Vec<Vec<f64>> = Vec::new();
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        let mut p = vec![0.0; rows];
        let mut r = vec![0.0; cols];
        let mut ritz: Option<(f64, Vec<f64>)> = None;
        for j in 0..krylov {
            matvec(a, rows, cols, &vs[j], exec, &mut p);
            if j > 0 {
                let bj = beta[j - 1];
                p.iter_mut()
                    .zip(&us[j - 1])
                    .for_each(|(pi, ui)| *pi -= bj * ui);
            }
            orthogonalize(&mut p, &us);
            let aj = norm(&p);
            used += 1;
            if aj == 0.0 {
                if j == 0 {
                    // start in the null space: restart on the heaviest column
                    let heaviest = (0..cols)
                        .map(|c| (0..rows).map(|i| a[i * cols + c].powi(2)).sum::<f64>())
                        .enumerate()
                        .fold((0, -1.0), |m, (c, w)| if w > m.1 { (c, w) } else { m })
                        .0;
                    v0 = vec![0.0; cols];
                    v0[heaviest] = 1.0;
                }
                break;
            }
            p.iter_mut().for_each(|x| *x /= aj);
            us.push(p.clone());
            alpha.push(aj);

            matvec_t(a, rows, cols, &us[j], &mut r);
            r.iter_mut().zip(&vs[j]).for_each(|(ri, vi)| *ri -= aj * vi);
            orthogonalize(&mut r, &vs);
            let bj = norm(&r);

            let last = j + 1 == krylov || bj <= f64::EPSILON * aj || used >= budget;
            if last || (j + 1) % CHECK_EVERY == 0 {
                let (sigma, x, y) = bidiagonal_top(&alpha, &beta);
                let v: Vec<f64> = (0..cols)
                    .map(|c| (0..=j).map(|i| y[i] * vs[i][c]).sum())
                    .collect();
                let small_resid = bj * x[j].abs() <= tol * sigma;
                ritz = Some((sigma, v));
                if small_resid || last || bj <= f64::EPSILON * sigma {
                    break;
                }
            }
            r.iter_mut().for_each(|x| *x /= bj);
            vs.push(r.clone());
            beta.push(bj);
        }

        if let Some((_, v)) = ritz {
            // certify the Ritz vector directly
            let mut pair = power_iteration(a, rows, cols, &v, tol, 1, exec);
            used += 1;
            pair.iterations = used;
            if pair.converged {
                return pair;
            }
            v0 = pair.v.clone();
            best = Some(pair);
        }
    }
    let mut pair = best.unwrap_or_else(|| power_iteration(a, rows, cols, &v0, tol, 1, exec));
    pair.converged = false;
    pair.iterations = used;
    pair
}

/// Top singular pair from a random Gaussian start drawn from `rng`.
pub fn top_singular_pair(
    a: &[f64],
    rows: usize,
    cols: usize,
    tol: f64,
    max_iter: usize,
    rng: &mut Rng,
) -> SingularPair {
    let start: Vec<f64> = (0..cols).map(|_| StandardNormal.sample(rng)).collect();
    lanczos_top_pair(a, rows, cols, &start, tol, max_iter, Exec::Sequential)
}

pub(crate) fn to_matrix(x: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, x)
}

fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(m[(i, j)]);
        }
    }
    out
}

pub fn singular_values(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut s: Vec<f64> = to_matrix(x, rows, cols)
        .singular_values()
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Exact top singular pair from a dense SVD.
pub fn dense_top_pair(a: &[f64], rows: usize, cols: usize) -> SingularPair {
    dense_top_pair_of(&to_matrix(a, rows, cols))
}

fn dense_top_pair_of(m: &DMatrix<f64>) -> SingularPair {
    let svd = m.clone().svd(true, true);
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .fold(0, |best, (i, s)| {
            if *s > svd.singular_values[best] {
                i
            } else {
                best
            }
        });
    let u = svd.u.expect("left singular vectors requested");
    let vt = svd.v_t.expect("right singular vectors requested");
    SingularPair {
        u: u.column(k).iter().copied().collect(),
        s: svd.singular_values[k],
        v: vt.row(k).iter().copied().collect(),
        converged: true,
        iterations: 0,
    }
}

pub fn nuclear_norm(x: &[f64], rows: usize, cols: usize) -> f64 {
    singular_values(x, rows, cols).iter().sum()
}

/// Euclidean projection onto `{X : ‖X‖_* ≤ radius}`: full SVD, then the
/// spectrum is projected onto the nonnegative ℓ1 ball.
pub fn project_nuclear(x: &[f64], rows: usize, cols: usize, radius: f64) -> Vec<f64> {
    let svd = to_matrix(x, rows, cols).svd(true, true);
    let s: Vec<f64> = svd.singular_values.iter().copied().collect();
    if s.iter().sum::<f64>() <= radius {
        return x.to_vec();
    }
    let projected = super::project_simplex(&s, radius);
    let u = svd.u.expect("left singular vectors requested");
    let vt = svd.v_t.expect("right singular vectors requested");
    let k = projected.len();
    let mut out = DMatrix::<f64>::zeros(rows, cols);
    for (r, &sr) in projected.iter().enumerate().take(k) {
        if sr > 0.0 {
            out += sr * u.column(r) * vt.row(r);
        }
    }
    to_row_major(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    #[test]
    fn lanczos_on_clustered_spectrum() {
        // top two singular values within 0.1%: power iteration needs
        // thousands of sweeps, the Krylov solver a few dozen products
        use rand_distr::{Distribution, StandardNormal};
        let n = 60;
        let mut rng = SeedTree::new(4).stream(0);
        let g: Vec<f64> = (0..n * n)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let q = to_matrix(&g, n, n).qr().q();
        let mut d = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            d[(i, i)] = 1.0 / (1.0 + i as f64);
        }
        d[(1, 1)] = 0.999;
        let a = to_row_major(&(&q * d * q.transpose()));
        let start: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = lanczos_top_pair(&a, n, n, &start, 1e-8, 10 * n, Exec::Sequential);
        assert!(p.converged, "used {}", p.iterations);
        assert!((p.s - 1.0).abs() < 1e-10);
        let slow = power_iteration(&a, n, n, &start, 1e-8, 10 * n, Exec::Sequential);
        assert!(!slow.converged);
        let pl = lanczos_top_pair(&a, n, n, &start, 1e-8, 10 * n, Exec::Parallel);
        assert_eq!(p, pl);
    }

    #[test]
    fn lanczos_rectangular_and_null_start() {
        let a = [0.0, 1.0, 0.0, 0.0, 2.0, 0.0];
        let p = lanczos_top_pair(&a, 2, 3, &[1.0, 0.0, 1.0], 1e-10, 50, Exec::Sequential);
        assert!(p.converged);
        assert!((p.s - 5f64.sqrt()).abs() < 1e-12);
        assert!((p.v[1].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_pair_matches_definition() {
        let a = [1.0, 2.0, 0.0, -1.0, 3.0, 1.0];
        let p = dense_top_pair(&a, 2, 3);
        let mut av = vec![0.0; 2];
        matvec(&a, 2, 3, &p.v, Exec::Sequential, &mut av);
        assert!((dot(&av, &p.u) - p.s).abs() < 1e-12);
        assert!((p.s - singular_values(&a, 2, 3)[0]).abs() < 1e-12);
    }

    #[test]
    fn diagonal_matrix() {
        let a = [3.0, 0.0, 0.0, 1.0];
        let mut rng = SeedTree::new(1).stream(0);
        let p = top_singular_pair(&a, 2, 2, 1e-10, 1000, &mut rng);
        assert!(p.converged);
        assert!((p.s - 3.0).abs() < 1e-9);
        assert!((p.u[0].abs() - 1.0).abs() < 1e-9);
        assert!((p.v[0].abs() - 1.0).abs() < 1e-9);
        assert!(p.u[0] * p.v[0] > 0.0);
    }

    #[test]
    fn rank_one_value() {
        let a_vec = [1.0, -2.0, 0.5];
        let b_vec = [2.0, 1.0];
        let a: Vec<f64> = a_vec
            .iter()
            .flat_map(|x| b_vec.iter().map(move |y| x * y))
            .collect();
        let mut rng = SeedTree::new(2).stream(0);
        let p = top_singular_pair(&a, 3, 2, 1e-10, 100, &mut rng);
        assert!((p.s - norm(&a_vec) * norm(&b_vec)).abs() < 1e-9);
    }

    #[test]
    fn random_square_against_full_svd() {
        use rand_distr::{Distribution, StandardNormal};
        let tree = SeedTree::new(11);
        let mut rng = tree.stream(0);
        let a: Vec<f64> = (0..400).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = top_singular_pair(&a, 20, 20, 1e-8, 200, &mut tree.stream(1));
        let top = singular_values(&a, 20, 20)[0];
        assert!(p.converged, "iterations {}", p.iterations);
        assert!((p.s - top).abs() / top <= 1e-6);

        // certified residuals
        let mut av = vec![0.0; 20];
        matvec(&a, 20, 20, &p.v, Exec::Sequential, &mut av);
        let r1: f64 = av
            .iter()
            .zip(&p.u)
            .map(|(x, y)| (x - p.s * y).powi(2))
            .sum::<f64>()
            .sqrt();
        let mut atu = vec![0.0; 20];
        matvec_t(&a, 20, 20, &p.u, &mut atu);
        let r2: f64 = atu
            .iter()
            .zip(&p.v)
            .map(|(x, y)| (x - p.s * y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(r1 <= 1e-8 * p.s && r2 <= 1e-8 * p.s);
    }

    #[test]
    fn zero_matrix_gives_canonical_pair() {
        let p = power_iteration(
            &[0.0; 6],
            2,
            3,
            &[1.0, 1.0, 1.0],
            1e-8,
            10,
            Exec::Sequential,
        );
        assert_eq!(p.s, 0.0);
        assert_eq!(p.u, vec![1.0, 0.0]);
        assert_eq!(p.v, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn exhausted_budget_is_flagged() {
        // nearly degenerate top pair, one sweep is not enough
        let a = [1.0, 0.0, 0.0, 0.999];
        let p = power_iteration(&a, 2, 2, &[1.0, 1.0], 1e-12, 2, Exec::Sequential);
        assert!(!p.converged);
        assert!(p.s > 0.0);
    }

    #[test]
    fn parallel_matvec_is_bitwise_sequential() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = SeedTree::new(5).stream(0);
        let (r, c) = (200, 200);
        let a: Vec<f64> = (0..r * c)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let start = vec![1.0; c];
        let p1 = power_iteration(&a, r, c, &start, 1e-8, 50, Exec::Sequential);
        let p2 = power_iteration(&a, r, c, &start, 1e-8, 50, Exec::Parallel);
        assert_eq!(p1, p2);
    }

    #[test]
    fn nuclear_projection_of_diag() {
        let x = [2.0, 0.0, 0.0, 0.0];
        let p = project_nuclear(&x, 2, 2, 1.0);
        for (a, b) in p.iter().zip([1.0, 0.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        // inside: unchanged
        let y = [0.3, 0.1, -0.2, 0.1];
        assert_eq!(project_nuclear(&y, 2, 2, 5.0), y.to_vec());
    }
}
