//! Truncated-SVD completion baseline with configurable retained-spectrum
//! fractions.
//!
//! The sparse rating matrix is first centered by a damped-mean bias model
//! (global mean plus shrunk per-user and per-item offsets); the residual
//! table, zero at missing cells, is then decomposed by randomized subspace
//! iteration and truncated to `k = max(1, round(fraction · min_dim))`
//! singular triplets. Predictions are baseline plus rank-k reconstruction.

mod linalg;

pub use linalg::{jacobi_svd, Mat};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ratings::{Entry, SparseRatingMatrix};
use linalg::SubspaceParams;

/// Damping mass added to user/item rating counts when shrinking bias means.
pub const BIAS_DAMPING: f64 = 5.0;
/// Seed used by [`fit_svd`]; [`fit_svd_seeded`] accepts any other.
pub const DEFAULT_SVD_SEED: u64 = 0x5eed;

#[derive(Debug, Error)]
pub enum SvdError {
    #[error("matrix has no entries")]
    EmptyMatrix,
    #[error("retained fraction must lie in (0, 1], got {0}")]
    FractionOutOfRange(f64),
}

/// Damped-mean bias model: baseline(u, i) = global_mean + row_bias_u + col_bias_i.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub global_mean: f64,
    pub row_bias: Vec<f64>,
    pub col_bias: Vec<f64>,
}

impl Baseline {
    pub fn value(&self, u: usize, i: usize) -> f64 {
        self.global_mean + self.row_bias[u] + self.col_bias[i]
    }
}

/// The bias-centered residual table. Stored sparsely: missing cells are
/// exactly zero by construction.
#[derive(Debug, Clone)]
pub struct ResidualTable {
    pub n_users: usize,
    pub n_items: usize,
    pub cells: Vec<Entry>,
}

impl ResidualTable {
    /// Residual at (u, i): the centered rating on filled cells, 0 elsewhere.
    pub fn value_at(&self, u: usize, i: usize) -> f64 {
        self.cells
            .iter()
            .find(|e| e.user as usize == u && e.item as usize == i)
            .map(|e| e.rating)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_items]; self.n_users];
        for e in &self.cells {
            dense[e.user as usize][e.item as usize] = e.rating;
        }
        dense
    }
}

/// Centers the matrix by the damped bias model and returns the residual
/// table together with the baseline.
pub fn impute_baseline(matrix: &SparseRatingMatrix) -> Result<(ResidualTable, Baseline), SvdError> {
    if matrix.nnz() == 0 {
        return Err(SvdError::EmptyMatrix);
    }
    let n_users = matrix.n_users();
    let n_items = matrix.n_items();
    let global_mean =
        matrix.entries().iter().map(|e| e.rating).sum::<f64>() / matrix.nnz() as f64;

    let mut row_bias = vec![0.0; n_users];
    for u in 0..n_users {
        let n = matrix.row_len(u);
        if n > 0 {
            let sum: f64 = matrix.row(u).map(|(_, r)| r - global_mean).sum();
            row_bias[u] = sum / (n as f64 + BIAS_DAMPING);
        }
    }
    let mut col_bias = vec![0.0; n_items];
    for i in 0..n_items {
        let n = matrix.col_len(i);
        if n > 0 {
            let sum: f64 = matrix
                .col(i)
                .map(|(u, r)| r - global_mean - row_bias[u])
                .sum();
            col_bias[i] = sum / (n as f64 + BIAS_DAMPING);
        }
    }

    let baseline = Baseline {
        global_mean,
        row_bias,
        col_bias,
    };
    let cells = matrix
        .entries()
        .iter()
        .map(|e| Entry {
            user: e.user,
            item: e.item,
            rating: e.rating - baseline.value(e.user as usize, e.item as usize),
        })
        .collect();
    Ok((
        ResidualTable {
            n_users,
            n_items,
            cells,
        },
        baseline,
    ))
}

/// Number of singular triplets retained for a fraction of the spectrum.
pub fn retained_rank(fraction: f64, min_dim: usize) -> usize {
    ((fraction * min_dim as f64).round() as usize).clamp(1, min_dim)
}

/// Rank-k factor model over the bias-centered residual table.
/// Immutable; safe for concurrent prediction.
#[derive(Debug, Clone)]
pub struct SvdModel {
    n_users: usize,
    n_items: usize,
    k: usize,
    singular_values: Vec<f64>,
    /// Row-major n_users × k.
    left: Vec<f64>,
    /// Row-major n_items × k.
    right: Vec<f64>,
    baseline: Baseline,
    seed: u64,
}

/// Fits a truncated SVD retaining the given fraction of the spectrum, using
/// the crate's fixed default seed for the subspace sample.
pub fn fit_svd(matrix: &SparseRatingMatrix, fraction: f64) -> Result<SvdModel, SvdError> {
    fit_svd_seeded(matrix, fraction, DEFAULT_SVD_SEED)
}

/// As [`fit_svd`] with an explicit seed. The fit is deterministic for a
/// fixed (matrix, fraction, seed).
pub fn fit_svd_seeded(
    matrix: &SparseRatingMatrix,
    fraction: f64,
    seed: u64,
) -> Result<SvdModel, SvdError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SvdError::FractionOutOfRange(fraction));
    }
    let (residual, baseline) = impute_baseline(matrix)?;
    let min_dim = matrix.n_users().min(matrix.n_items());
    let k = retained_rank(fraction, min_dim);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sigma, left_cm, right_cm) = linalg::truncated_svd(
        &residual.cells,
        matrix.n_users(),
        matrix.n_items(),
        k,
        &SubspaceParams::default(),
        &mut rng,
    );

    Ok(SvdModel {
        n_users: matrix.n_users(),
        n_items: matrix.n_items(),
        k,
        singular_values: sigma,
        left: to_row_major(&left_cm),
        right: to_row_major(&right_cm),
        baseline,
        seed,
    })
}

fn to_row_major(m: &Mat) -> Vec<f64> {
    let mut out = vec![0.0; m.rows * m.cols];
    for j in 0..m.cols {
        for i in 0..m.rows {
            out[i * m.cols + j] = m.get(i, j);
        }
    }
    out
}

impl SvdModel {
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn rank(&self) -> usize {
        self.k
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn baseline(&self) -> &Baseline {
        &self.baseline
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Baseline plus rank-k reconstruction; unclamped.
    pub fn predict(&self, u: usize, i: usize) -> f64 {
        assert!(u < self.n_users && i < self.n_items, "index out of bounds");
        let lu = &self.left[u * self.k..(u + 1) * self.k];
        let ri = &self.right[i * self.k..(i + 1) * self.k];
        let interaction: f64 = self
            .singular_values
            .iter()
            .zip(lu.iter().zip(ri))
            .map(|(s, (l, r))| s * l * r)
            .sum();
        self.baseline.value(u, i) + interaction
    }

    /// Left/right factor columns as column-major matrices (for diagnostics
    /// and tests).
    pub fn factors(&self) -> (Mat, Mat) {
        let mut left = Mat::zeros(self.n_users, self.k);
        let mut right = Mat::zeros(self.n_items, self.k);
        for u in 0..self.n_users {
            for j in 0..self.k {
                left.set(u, j, self.left[u * self.k + j]);
            }
        }
        for i in 0..self.n_items {
            for j in 0..self.k {
                right.set(i, j, self.right[i * self.k + j]);
            }
        }
        (left, right)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "rankprefs-svd v1")?;
        writeln!(w, "n_users {}", self.n_users)?;
        writeln!(w, "n_items {}", self.n_items)?;
        writeln!(w, "k {}", self.k)?;
        writeln!(w, "seed {}", self.seed)?;
        writeln!(w, "global_mean {}", self.baseline.global_mean)?;
        writeln!(w, "singular_values")?;
        for s in &self.singular_values {
            writeln!(w, "{s}")?;
        }
        writeln!(w, "row_bias")?;
        for b in &self.baseline.row_bias {
            writeln!(w, "{b}")?;
        }
        writeln!(w, "col_bias")?;
        for b in &self.baseline.col_bias {
            writeln!(w, "{b}")?;
        }
        writeln!(w, "left")?;
        for u in 0..self.n_users {
            let row = &self.left[u * self.k..(u + 1) * self.k];
            writeln!(w, "{}", join_floats(row))?;
        }
        writeln!(w, "right")?;
        for i in 0..self.n_items {
            let row = &self.right[i * self.k..(i + 1) * self.k];
            writeln!(w, "{}", join_floats(row))?;
        }
        Ok(())
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn read_from<R: BufRead>(r: &mut R) -> Result<Self, SvdIoError> {
        let mut lines = r.lines().enumerate();
        let mut next_line = || -> Result<(usize, String), SvdIoError> {
            match lines.next() {
                Some((idx, Ok(line))) => Ok((idx + 1, line.trim_end().to_owned())),
                Some((_, Err(e))) => Err(SvdIoError::Io(e)),
                None => Err(SvdIoError::Parse {
                    line: 0,
                    reason: "unexpected end of file".into(),
                }),
            }
        };
        let (line_no, header) = next_line()?;
        if header != "rankprefs-svd v1" {
            return Err(SvdIoError::Parse {
                line: line_no,
                reason: format!("unexpected header {header:?}"),
            });
        }
        let mut field = |name: &str| -> Result<String, SvdIoError> {
            let (line_no, line) = next_line()?;
            match line.strip_prefix(name).map(str::trim) {
                Some(rest) if !rest.is_empty() => Ok(rest.to_owned()),
                _ => Err(SvdIoError::Parse {
                    line: line_no,
                    reason: format!("expected `{name} <value>`, got {line:?}"),
                }),
            }
        };
        let parse_err = |what: &str| SvdIoError::Parse {
            line: 0,
            reason: format!("unparseable {what}"),
        };
        let n_users: usize = field("n_users")?.parse().map_err(|_| parse_err("n_users"))?;
        let n_items: usize = field("n_items")?.parse().map_err(|_| parse_err("n_items"))?;
        let k: usize = field("k")?.parse().map_err(|_| parse_err("k"))?;
        let seed: u64 = field("seed")?.parse().map_err(|_| parse_err("seed"))?;
        let global_mean: f64 = field("global_mean")?
            .parse()
            .map_err(|_| parse_err("global_mean"))?;

        let mut section = |name: &str, count: usize| -> Result<Vec<String>, SvdIoError> {
            let (line_no, line) = next_line()?;
            if line != name {
                return Err(SvdIoError::Parse {
                    line: line_no,
                    reason: format!("expected section {name:?}, got {line:?}"),
                });
            }
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                out.push(next_line()?.1);
            }
            Ok(out)
        };
        let floats = |raw: Vec<String>, what: &str| -> Result<Vec<f64>, SvdIoError> {
            raw.into_iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| SvdIoError::Parse {
                        line: 0,
                        reason: format!("unparseable {what} value {s:?}"),
                    })
                })
                .collect()
        };
        let float_rows = |raw: Vec<String>, width: usize, what: &str| -> Result<Vec<f64>, SvdIoError> {
            let mut out = Vec::with_capacity(raw.len() * width);
            for s in raw {
                let row: Result<Vec<f64>, _> = s
                    .split_whitespace()
                    .map(|tok| tok.parse::<f64>())
                    .collect();
                let row = row.map_err(|_| SvdIoError::Parse {
                    line: 0,
                    reason: format!("unparseable {what} row {s:?}"),
                })?;
                if row.len() != width {
                    return Err(SvdIoError::Parse {
                        line: 0,
                        reason: format!("{what} row has {} values, expected {width}", row.len()),
                    });
                }
                out.extend(row);
            }
            Ok(out)
        };

        let singular_values = floats(section("singular_values", k)?, "singular value")?;
        let row_bias = floats(section("row_bias", n_users)?, "row_bias")?;
        let col_bias = floats(section("col_bias", n_items)?, "col_bias")?;
        let left = float_rows(section("left", n_users)?, k, "left")?;
        let right = float_rows(section("right", n_items)?, k, "right")?;

        Ok(SvdModel {
            n_users,
            n_items,
            k,
            singular_values,
            left,
            right,
            baseline: Baseline {
                global_mean,
                row_bias,
                col_bias,
            },
            seed,
        })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, SvdIoError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Error)]
pub enum SvdIoError {
    #[error("model io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratings::RatingScale;

    fn matrix(
        n_users: usize,
        n_items: usize,
        triples: &[(usize, usize, f64)],
    ) -> SparseRatingMatrix {
        SparseRatingMatrix::from_dense_triples(
            n_users,
            n_items,
            triples,
            RatingScale::default(),
        )
        .unwrap()
    }

    #[test]
    fn baseline_constant_matrix() {
        let triples: Vec<(usize, usize, f64)> = (0..3)
            .flat_map(|u| (0..4).map(move |i| (u, i, 3.0)))
            .collect();
        let m = matrix(3, 4, &triples);
        let (residual, baseline) = impute_baseline(&m).unwrap();
        assert_eq!(baseline.global_mean, 3.0);
        assert!(baseline.row_bias.iter().all(|&b| b == 0.0));
        assert!(baseline.col_bias.iter().all(|&b| b == 0.0));
        assert!(residual.cells.iter().all(|e| e.rating == 0.0));
    }

    #[test]
    fn baseline_damping_single_user() {
        // One user rating {1, 5}: mean 3, centered sum 0, so the damped
        // row bias is 0/(2+5) = 0.
        let m = matrix(1, 2, &[(0, 0, 1.0), (0, 1, 5.0)]);
        let (_, baseline) = impute_baseline(&m).unwrap();
        assert_eq!(baseline.global_mean, 3.0);
        assert_eq!(baseline.row_bias[0], 0.0);
        assert!((baseline.col_bias[0] - (-2.0 / 6.0)).abs() < 1e-15);
        assert!((baseline.col_bias[1] - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn retained_rank_arithmetic() {
        assert_eq!(retained_rank(0.25, 3706), 927);
        assert_eq!(retained_rank(1.0, 4), 4);
        assert_eq!(retained_rank(0.001, 50), 1);
    }

    #[test]
    fn fraction_out_of_range_rejected() {
        let m = matrix(2, 2, &[(0, 0, 3.0), (1, 1, 4.0)]);
        assert!(matches!(
            fit_svd(&m, 0.0),
            Err(SvdError::FractionOutOfRange(_))
        ));
        assert!(matches!(
            fit_svd(&m, 1.5),
            Err(SvdError::FractionOutOfRange(_))
        ));
    }

    #[test]
    fn constant_matrix_predicts_constant() {
        let triples: Vec<(usize, usize, f64)> = (0..4)
            .flat_map(|u| (0..4).map(move |i| (u, i, 2.0)))
            .collect();
        let m = matrix(4, 4, &triples);
        let model = fit_svd(&m, 0.5).unwrap();
        for u in 0..4 {
            for i in 0..4 {
                assert!((model.predict(u, i) - 2.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn full_fraction_reconstructs_residual() {
        // With k = min_dim the reconstruction matches the imputed table, so
        // filled cells round-trip exactly and missing cells return baseline.
        let m = matrix(
            3,
            3,
            &[
                (0, 0, 2.0),
                (0, 1, 4.0),
                (0, 2, 1.0),
                (1, 0, 3.0),
                (1, 2, 5.0),
                (2, 1, 2.0),
                (2, 2, 4.0),
            ],
        );
        let model = fit_svd(&m, 1.0).unwrap();
        assert_eq!(model.rank(), 3);
        for e in m.entries() {
            let got = model.predict(e.user as usize, e.item as usize);
            assert!(
                (got - e.rating).abs() < 1e-9,
                "({}, {}) -> {got} != {}",
                e.user,
                e.item,
                e.rating
            );
        }
        let (_, baseline) = impute_baseline(&m).unwrap();
        assert!((model.predict(1, 1) - baseline.value(1, 1)).abs() < 1e-9);
        assert!((model.predict(2, 0) - baseline.value(2, 0)).abs() < 1e-9);
    }

    #[test]
    fn reconstruction_error_nonincreasing_in_k() {
        let mut triples = Vec::new();
        let mut state = 88172645463325252u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for u in 0..8 {
            for i in 0..6 {
                if next() < 0.8 {
                    triples.push((u, i, 1.0 + (next() * 4.0).round()));
                }
            }
        }
        let m = matrix(8, 6, &triples);
        let (residual, _) = impute_baseline(&m).unwrap();
        let dense = residual.to_dense();
        let mut last = f64::INFINITY;
        for k in 1..=6 {
            let fraction = k as f64 / 6.0;
            let model = fit_svd(&m, fraction).unwrap();
            let (_, baseline) = impute_baseline(&m).unwrap();
            let mut err = 0.0;
            for (u, row) in dense.iter().enumerate() {
                for (i, &res) in row.iter().enumerate() {
                    let approx = model.predict(u, i) - baseline.value(u, i);
                    err += (approx - res) * (approx - res);
                }
            }
            assert!(err <= last + 1e-9, "k={k}: {err} > {last}");
            last = err;
        }
    }

    #[test]
    fn factor_columns_orthonormal() {
        let mut triples = Vec::new();
        let mut state = 0x12345678u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for u in 0..15 {
            for i in 0..10 {
                if next() < 0.7 {
                    triples.push((u, i, 1.0 + (next() * 4.0).round()));
                }
            }
        }
        let m = matrix(15, 10, &triples);
        let model = fit_svd(&m, 0.4).unwrap();
        let (left, right) = model.factors();
        for mat in [&left, &right] {
            for a in 0..mat.cols {
                for b in 0..mat.cols {
                    let d: f64 = mat.col(a).iter().zip(mat.col(b)).map(|(x, y)| x * y).sum();
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((d - expect).abs() < 1e-8, "[{a}][{b}] = {d}");
                }
            }
        }
        let sv = model.singular_values();
        assert!(sv.windows(2).all(|w| w[0] >= w[1]));
        assert!(sv.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn serialization_round_trips_predictions() {
        let m = matrix(
            4,
            3,
            &[
                (0, 0, 2.0),
                (0, 1, 4.0),
                (1, 0, 3.0),
                (1, 2, 5.0),
                (2, 2, 1.0),
                (3, 1, 4.0),
            ],
        );
        let model = fit_svd_seeded(&m, 0.5, 7).unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let back = SvdModel::read_from(&mut &buf[..]).unwrap();
        assert_eq!(back.rank(), model.rank());
        assert_eq!(back.seed(), 7);
        for u in 0..4 {
            for i in 0..3 {
                assert_eq!(model.predict(u, i).to_bits(), back.predict(u, i).to_bits());
            }
        }
    }
}
