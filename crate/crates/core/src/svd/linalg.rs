//! Dense kernels for the randomized truncated SVD: column-major matrices,
//! sparse·dense products, Householder QR, and one-sided Jacobi.
//!
//! Determinism contract: every parallel region assigns each output column
//! (or column pair) to exactly one task and never reduces across tasks, so
//! results are bit-identical for any thread count and for the sequential
//! build.

use rand::Rng;

use crate::par;
use crate::ratings::Entry;

/// Column-major dense matrix.
#[derive(Debug, Clone)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for j in 0..n {
            m.data[j * n + j] = 1.0;
        }
        m
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[j * self.rows + i] = v;
    }

    /// Fills with standard normal samples, column by column.
    pub fn fill_gaussian<R: Rng>(&mut self, rng: &mut R) {
        for v in self.data.iter_mut() {
            *v = sample_standard_normal(rng);
        }
    }
}

/// Box-Muller standard normal sample.
fn sample_standard_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `S · x` for the sparse matrix given by `cells` (n_rows × n_cols) and a
/// dense `x` (n_cols × k). One task per output column.
pub fn sparse_times_dense(cells: &[Entry], n_rows: usize, x: &Mat) -> Mat {
    let mut out = Mat::zeros(n_rows, x.cols);
    let x_data = &x.data;
    let x_rows = x.rows;
    par::for_each_chunk_mut(&mut out.data, n_rows, |j, col| {
        let x_col = &x_data[j * x_rows..(j + 1) * x_rows];
        for e in cells {
            col[e.user as usize] += e.rating * x_col[e.item as usize];
        }
    });
    out
}

/// `Sᵀ · y` for the sparse matrix given by `cells` and a dense `y`
/// (n_rows × k); output is n_cols × k.
pub fn sparse_transpose_times_dense(cells: &[Entry], n_cols: usize, y: &Mat) -> Mat {
    let mut out = Mat::zeros(n_cols, y.cols);
    let y_data = &y.data;
    let y_rows = y.rows;
    par::for_each_chunk_mut(&mut out.data, n_cols, |j, col| {
        let y_col = &y_data[j * y_rows..(j + 1) * y_rows];
        for e in cells {
            col[e.item as usize] += e.rating * y_col[e.user as usize];
        }
    });
    out
}

/// Dense product `A · B`. One task per output column.
pub fn dense_times_dense(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.rows);
    let mut out = Mat::zeros(a.rows, b.cols);
    let a_rows = a.rows;
    par::for_each_chunk_mut(&mut out.data, a_rows, |j, col| {
        for t in 0..a.cols {
            let w = b.get(t, j);
            if w != 0.0 {
                let a_col = a.col(t);
                for (c, &av) in col.iter_mut().zip(a_col) {
                    *c += w * av;
                }
            }
        }
    });
    out
}

/// Thin Householder QR: returns an orthonormal basis (rows × cols) for the
/// column space of `a`, consuming `a`. Requires rows ≥ cols.
pub fn orthonormalize(mut a: Mat) -> Mat {
    let (m, n) = (a.rows, a.cols);
    assert!(m >= n, "orthonormalize expects a tall matrix");
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);

    for j in 0..n {
        let col = a.col(j);
        let tail = &col[j..];
        let norm = dot(tail, tail).sqrt();
        let mut v = tail.to_vec();
        if norm == 0.0 {
            v.iter_mut().for_each(|x| *x = 0.0);
            reflectors.push(v);
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let v_norm = dot(&v, &v).sqrt();
        if v_norm == 0.0 {
            v.iter_mut().for_each(|x| *x = 0.0);
        } else {
            v.iter_mut().for_each(|x| *x /= v_norm);
        }
        // Apply H = I − 2vvᵀ to the trailing columns, one task per column.
        let rows = a.rows;
        let start = (j + 1) * rows;
        let v_ref = &v;
        par::for_each_chunk_mut(&mut a.data[start..], rows, |_, c| {
            let tail = &mut c[j..];
            let proj = 2.0 * dot(v_ref, tail);
            for (t, vv) in tail.iter_mut().zip(v_ref) {
                *t -= proj * vv;
            }
        });
        reflectors.push(v);
    }

    // Q = H_0 · H_1 · … · H_{n−1} applied to the thin identity.
    let mut q = Mat::zeros(m, n);
    for j in 0..n {
        q.set(j, j, 1.0);
    }
    for j in (0..n).rev() {
        let v = &reflectors[j];
        if v.iter().all(|&x| x == 0.0) {
            continue;
        }
        let rows = q.rows;
        par::for_each_chunk_mut(&mut q.data, rows, |_, c| {
            let tail = &mut c[j..];
            let proj = 2.0 * dot(v, tail);
            for (t, vv) in tail.iter_mut().zip(v) {
                *t -= proj * vv;
            }
        });
    }
    q
}

/// Round-robin tournament schedule over `n` columns: each round pairs every
/// column at most once, and across a full cycle every pair meets exactly
/// once. Rounds are fixed, which keeps parallel rotation order deterministic.
fn tournament_rounds(n: usize) -> Vec<Vec<(usize, usize)>> {
    if n < 2 {
        return Vec::new();
    }
    let m = if n % 2 == 0 { n } else { n + 1 };
    let mut positions: Vec<usize> = (0..m).collect();
    let mut rounds = Vec::with_capacity(m - 1);
    for _ in 0..m - 1 {
        let mut pairs = Vec::with_capacity(m / 2);
        for i in 0..m / 2 {
            let (a, b) = (positions[i], positions[m - 1 - i]);
            if a < n && b < n {
                pairs.push((a, b));
            }
        }
        rounds.push(pairs);
        // Rotate all but the first position.
        positions[1..].rotate_right(1);
    }
    rounds
}

/// One-sided Jacobi SVD of a tall matrix `w` (rows ≥ cols is not required,
/// but columns beyond the rank come out with zero singular values).
///
/// Returns `(sigma, p, v)` with singular values in nonincreasing order,
/// `p` (rows × cols) holding orthonormal columns spanning the range, and
/// `v` (cols × cols) the accumulated rotations, such that
/// `w = p · diag(sigma) · vᵀ`.
pub fn jacobi_svd(mut w: Mat, tol: f64, max_sweeps: usize) -> (Vec<f64>, Mat, Mat) {
    let n = w.cols;
    let rows = w.rows;
    let mut v = Mat::identity(n);
    let rounds = tournament_rounds(n);

    for _ in 0..max_sweeps {
        let mut any_rotation = false;
        for pairs in &rounds {
            let rotated = par::map_disjoint_pairs2(
                &mut w.data,
                rows,
                &mut v.data,
                n,
                pairs,
                |wp, wq, vp, vq| {
                    let app = dot(wp, wp);
                    let aqq = dot(wq, wq);
                    let apq = dot(wp, wq);
                    if apq.abs() <= tol * (app * aqq).sqrt() || apq == 0.0 {
                        return false;
                    }
                    let zeta = (aqq - app) / (2.0 * apq);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    rotate(wp, wq, c, s);
                    rotate(vp, vq, c, s);
                    true
                },
            );
            any_rotation |= rotated.into_iter().any(|r| r);
        }
        if !any_rotation {
            break;
        }
    }

    // Extract singular values and normalize, then order by descending sigma.
    let mut sigma: Vec<f64> = (0..n).map(|j| dot(w.col(j), w.col(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap().then(a.cmp(&b)));

    let sigma_max = sigma.iter().cloned().fold(0.0, f64::max);
    let mut p = Mat::zeros(rows, n);
    let mut v_sorted = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let s = sigma[src];
        if s > sigma_max * 1e-300 && s > 0.0 {
            let src_col = w.col(src);
            let dst_col = p.col_mut(dst);
            for (d, &x) in dst_col.iter_mut().zip(src_col) {
                *d = x / s;
            }
        }
        v_sorted.col_mut(dst).copy_from_slice(v.col(src));
    }
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (sigma, p, v_sorted)
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xv, yv) in x.iter_mut().zip(y.iter_mut()) {
        let xi = *xv;
        let yi = *yv;
        *xv = c * xi - s * yi;
        *yv = s * xi + c * yi;
    }
}

/// Truncated SVD of the sparse matrix given by `cells` via randomized
/// subspace iteration: Gaussian range sampling with the given oversampling,
/// the given number of power iterations with QR re-orthonormalization, and a
/// one-sided Jacobi solve on the projected matrix.
///
/// Returns `(sigma, left, right)` truncated to rank `k`, with `left`
/// (n_rows × k) and `right` (n_cols × k) carrying orthonormal columns.
pub struct SubspaceParams {
    pub oversample: usize,
    pub power_iters: usize,
}

impl Default for SubspaceParams {
    fn default() -> Self {
        Self {
            oversample: 10,
            power_iters: 4,
        }
    }
}

pub fn truncated_svd<R: Rng>(
    cells: &[Entry],
    n_rows: usize,
    n_cols: usize,
    k: usize,
    params: &SubspaceParams,
    rng: &mut R,
) -> (Vec<f64>, Mat, Mat) {
    let min_dim = n_rows.min(n_cols);
    assert!(k >= 1 && k <= min_dim);
    let l = (k + params.oversample).min(min_dim);

    let mut omega = Mat::zeros(n_cols, l);
    omega.fill_gaussian(rng);

    let y = sparse_times_dense(cells, n_rows, &omega);
    let mut q = orthonormalize(y);
    for _ in 0..params.power_iters {
        let z = orthonormalize(sparse_transpose_times_dense(cells, n_cols, &q));
        q = orthonormalize(sparse_times_dense(cells, n_rows, &z));
    }

    // W = Sᵀ·Q is the transpose of the projected matrix B = Qᵀ·S; its SVD
    // W = P·Σ·Vᵀ gives S ≈ (Q·V)·Σ·Pᵀ.
    let w = sparse_transpose_times_dense(cells, n_cols, &q);
    let (sigma, p, v) = jacobi_svd(w, 1e-14, 30);
    let u = dense_times_dense(&q, &v);

    let mut left = Mat::zeros(n_rows, k);
    let mut right = Mat::zeros(n_cols, k);
    for j in 0..k {
        left.col_mut(j).copy_from_slice(u.col(j));
        right.col_mut(j).copy_from_slice(p.col(j));
    }
    (sigma[..k].to_vec(), left, right)
}
