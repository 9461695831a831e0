//! Shift-consistent (SC) and unit-consistent (UC) matrix completion via
//! row/column balancing.
//!
//! Both methods fit one parameter per user and one per item. SC finds shifts
//! α, β minimizing Σ (r_ui − α_u − β_i)² over filled entries by alternating
//! row-mean/column-mean updates; predictions are α_u + β_i. UC is the same
//! fit applied to the elementwise natural log of the ratings, predicting
//! exp(λ_u + μ_i). Fitting costs O(nnz) per sweep and prediction is O(1).
//!
//! The parameter split between rows and columns carries one degree of
//! freedom per connected component of the bipartite rating graph. Reported
//! parameters are gauged so the mean row parameter within each component is
//! zero; predictions do not depend on the gauge.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::par;
use crate::ratings::{ComponentLabeling, SparseRatingMatrix};

/// Default convergence tolerance on the balancing residual.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default cap on balancing sweeps.
pub const DEFAULT_MAX_ITER: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Additive row/column shifts; prediction α_u + β_i.
    Shift,
    /// Multiplicative row/column scales; prediction exp(λ_u + μ_i).
    Unit,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Shift => "shift",
            ModelKind::Unit => "unit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitStats {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("matrix has no entries")]
    EmptyMatrix,
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("unit-consistent fit requires strictly positive ratings; found {value} at user {user}, item {item}")]
    NonPositiveRating { user: usize, item: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PredictError {
    #[error("cold start: user {0} has no filled entries")]
    ColdStartUser(usize),
    #[error("cold start: item {0} has no filled entries")]
    ColdStartItem(usize),
    #[error("user {user} and item {item} lie in different connected components")]
    CrossComponent { user: usize, item: usize },
}

/// A fitted consistency model. Immutable; safe for concurrent prediction.
#[derive(Debug, Clone)]
pub struct ConsistencyModel {
    kind: ModelKind,
    row_param: Vec<f64>,
    col_param: Vec<f64>,
    components: ComponentLabeling,
    tol: f64,
    fit_stats: FitStats,
}

/// Fits per-user and per-item shifts minimizing the squared error of the
/// additive model on filled entries. Returns the model even when the sweep
/// cap is reached; `fit_stats.converged` records which case occurred.
pub fn fit_sc(
    matrix: &SparseRatingMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<ConsistencyModel, FitError> {
    fit(matrix, ModelKind::Shift, tol, max_iter)
}

/// Fits per-user and per-item scale factors: the shift fit applied to
/// log-ratings. All ratings must be strictly positive.
pub fn fit_uc(
    matrix: &SparseRatingMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<ConsistencyModel, FitError> {
    for e in matrix.entries() {
        if e.rating <= 0.0 {
            return Err(FitError::NonPositiveRating {
                user: e.user as usize,
                item: e.item as usize,
                value: e.rating,
            });
        }
    }
    fit(matrix, ModelKind::Unit, tol, max_iter)
}

fn fit(
    matrix: &SparseRatingMatrix,
    kind: ModelKind,
    tol: f64,
    max_iter: usize,
) -> Result<ConsistencyModel, FitError> {
    if matrix.nnz() == 0 {
        return Err(FitError::EmptyMatrix);
    }
    if !(tol > 0.0) {
        return Err(FitError::InvalidTolerance(tol));
    }

    let n_users = matrix.n_users();
    let n_items = matrix.n_items();
    let value = |r: f64| match kind {
        ModelKind::Shift => r,
        ModelKind::Unit => r.ln(),
    };

    let mut alpha = vec![0.0f64; n_users];
    let mut beta = vec![0.0f64; n_items];

    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        for u in 0..n_users {
            let n = matrix.row_len(u);
            if n == 0 {
                continue;
            }
            let sum: f64 = matrix.row(u).map(|(i, r)| value(r) - beta[i]).sum();
            alpha[u] = sum / n as f64;
        }
        for i in 0..n_items {
            let n = matrix.col_len(i);
            if n == 0 {
                continue;
            }
            let sum: f64 = matrix.col(i).map(|(u, r)| value(r) - alpha[u]).sum();
            beta[i] = sum / n as f64;
        }

        residual = 0.0f64;
        for u in 0..n_users {
            let n = matrix.row_len(u);
            if n == 0 {
                continue;
            }
            let dev: f64 = matrix
                .row(u)
                .map(|(i, r)| value(r) - alpha[u] - beta[i])
                .sum::<f64>()
                / n as f64;
            residual = residual.max(dev.abs());
        }
        for i in 0..n_items {
            let n = matrix.col_len(i);
            if n == 0 {
                continue;
            }
            let dev: f64 = matrix
                .col(i)
                .map(|(u, r)| value(r) - alpha[u] - beta[i])
                .sum::<f64>()
                / n as f64;
            residual = residual.max(dev.abs());
        }
        if residual <= tol {
            converged = true;
            break;
        }
    }

    let components = matrix.connected_components();

    // Gauge: zero the mean row parameter within each component.
    let mut comp_sum = vec![0.0f64; components.n_components];
    let mut comp_count = vec![0usize; components.n_components];
    for u in 0..n_users {
        if matrix.row_len(u) > 0 {
            let c = components.component_of_user[u];
            comp_sum[c] += alpha[u];
            comp_count[c] += 1;
        }
    }
    for (u, a) in alpha.iter_mut().enumerate() {
        if matrix.row_len(u) > 0 {
            let c = components.component_of_user[u];
            *a -= comp_sum[c] / comp_count[c] as f64;
        } else {
            *a = f64::NAN;
        }
    }
    for (i, b) in beta.iter_mut().enumerate() {
        if matrix.col_len(i) > 0 {
            let c = components.component_of_item[i];
            // Items only share components with users when an edge exists,
            // so comp_count is nonzero here.
            *b += comp_sum[c] / comp_count[c] as f64;
        } else {
            *b = f64::NAN;
        }
    }

    Ok(ConsistencyModel {
        kind,
        row_param: alpha,
        col_param: beta,
        components,
        tol,
        fit_stats: FitStats {
            iterations,
            final_residual: residual,
            converged,
        },
    })
}

impl ConsistencyModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_users(&self) -> usize {
        self.row_param.len()
    }

    pub fn n_items(&self) -> usize {
        self.col_param.len()
    }

    pub fn fit_stats(&self) -> FitStats {
        self.fit_stats
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn row_param(&self) -> &[f64] {
        &self.row_param
    }

    pub fn col_param(&self) -> &[f64] {
        &self.col_param
    }

    pub fn components(&self) -> &ComponentLabeling {
        &self.components
    }

    /// Predicts the rating of user `u` for item `i` in O(1). The result is
    /// not clamped to the rating scale.
    ///
    /// Indices must be within bounds. Users or items without any filled
    /// entries yield a cold-start error; pairs in different connected
    /// components carry no information path and are rejected.
    pub fn predict(&self, u: usize, i: usize) -> Result<f64, PredictError> {
        assert!(u < self.n_users() && i < self.n_items(), "index out of bounds");
        if self.row_param[u].is_nan() {
            return Err(PredictError::ColdStartUser(u));
        }
        if self.col_param[i].is_nan() {
            return Err(PredictError::ColdStartItem(i));
        }
        if self.components.component_of_user[u] != self.components.component_of_item[i] {
            return Err(PredictError::CrossComponent { user: u, item: i });
        }
        let combined = self.row_param[u] + self.col_param[i];
        Ok(match self.kind {
            ModelKind::Shift => combined,
            ModelKind::Unit => combined.exp(),
        })
    }

    /// Batch form of [`predict`](Self::predict) over a requested entry list.
    /// Failing entries are flagged individually; the rest are returned.
    pub fn complete_all(&self, requests: &[(usize, usize)]) -> Vec<Result<f64, PredictError>> {
        par::map_indices(requests.len(), |idx| {
            let (u, i) = requests[idx];
            self.predict(u, i)
        })
    }

    /// Writes the model in the versioned text format.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "rankprefs-consistency v1")?;
        writeln!(w, "kind {}", self.kind.as_str())?;
        writeln!(w, "n_users {}", self.n_users())?;
        writeln!(w, "n_items {}", self.n_items())?;
        writeln!(w, "tol {}", self.tol)?;
        writeln!(w, "iterations {}", self.fit_stats.iterations)?;
        writeln!(w, "residual {}", self.fit_stats.final_residual)?;
        writeln!(w, "converged {}", self.fit_stats.converged)?;
        writeln!(w, "n_components {}", self.components.n_components)?;
        writeln!(w, "row_param")?;
        for v in &self.row_param {
            writeln!(w, "{v}")?;
        }
        writeln!(w, "col_param")?;
        for v in &self.col_param {
            writeln!(w, "{v}")?;
        }
        writeln!(w, "row_component")?;
        for c in &self.components.component_of_user {
            writeln!(w, "{c}")?;
        }
        writeln!(w, "col_component")?;
        for c in &self.components.component_of_item {
            writeln!(w, "{c}")?;
        }
        Ok(())
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }

    pub fn read_from<R: BufRead>(r: &mut R) -> Result<Self, ModelIoError> {
        let mut lines = r.lines().enumerate();
        let mut next_line = || -> Result<(usize, String), ModelIoError> {
            match lines.next() {
                Some((idx, Ok(line))) => Ok((idx + 1, line.trim_end().to_owned())),
                Some((_, Err(e))) => Err(ModelIoError::Io(e)),
                None => Err(ModelIoError::Parse {
                    line: 0,
                    reason: "unexpected end of file".into(),
                }),
            }
        };

        let (line_no, header) = next_line()?;
        if header != "rankprefs-consistency v1" {
            return Err(ModelIoError::Parse {
                line: line_no,
                reason: format!("unexpected header {header:?}"),
            });
        }

        let mut field = |name: &str| -> Result<String, ModelIoError> {
            let (line_no, line) = next_line()?;
            match line.strip_prefix(name).map(str::trim) {
                Some(rest) if !rest.is_empty() => Ok(rest.to_owned()),
                _ => Err(ModelIoError::Parse {
                    line: line_no,
                    reason: format!("expected `{name} <value>`, got {line:?}"),
                }),
            }
        };

        let kind = match field("kind")?.as_str() {
            "shift" => ModelKind::Shift,
            "unit" => ModelKind::Unit,
            other => {
                return Err(ModelIoError::Parse {
                    line: 2,
                    reason: format!("unknown kind {other:?}"),
                })
            }
        };
        let parse_err = |line: usize, what: &str| ModelIoError::Parse {
            line,
            reason: format!("unparseable {what}"),
        };
        let n_users: usize = field("n_users")?.parse().map_err(|_| parse_err(3, "n_users"))?;
        let n_items: usize = field("n_items")?.parse().map_err(|_| parse_err(4, "n_items"))?;
        let tol: f64 = field("tol")?.parse().map_err(|_| parse_err(5, "tol"))?;
        let iterations: usize = field("iterations")?
            .parse()
            .map_err(|_| parse_err(6, "iterations"))?;
        let residual: f64 = field("residual")?.parse().map_err(|_| parse_err(7, "residual"))?;
        let converged: bool = field("converged")?
            .parse()
            .map_err(|_| parse_err(8, "converged"))?;
        let n_components: usize = field("n_components")?
            .parse()
            .map_err(|_| parse_err(9, "n_components"))?;

        let mut section = |name: &str, count: usize| -> Result<Vec<String>, ModelIoError> {
            let (line_no, line) = next_line()?;
            if line != name {
                return Err(ModelIoError::Parse {
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

        let parse_floats = |raw: Vec<String>, what: &str| -> Result<Vec<f64>, ModelIoError> {
            raw.into_iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| ModelIoError::Parse {
                        line: 0,
                        reason: format!("unparseable {what} value {s:?}"),
                    })
                })
                .collect()
        };
        let parse_ids = |raw: Vec<String>, what: &str| -> Result<Vec<usize>, ModelIoError> {
            raw.into_iter()
                .map(|s| {
                    s.parse::<usize>().map_err(|_| ModelIoError::Parse {
                        line: 0,
                        reason: format!("unparseable {what} value {s:?}"),
                    })
                })
                .collect()
        };

        let row_param = parse_floats(section("row_param", n_users)?, "row_param")?;
        let col_param = parse_floats(section("col_param", n_items)?, "col_param")?;
        let component_of_user = parse_ids(section("row_component", n_users)?, "row_component")?;
        let component_of_item = parse_ids(section("col_component", n_items)?, "col_component")?;

        Ok(ConsistencyModel {
            kind,
            row_param,
            col_param,
            components: ComponentLabeling {
                component_of_user,
                component_of_item,
                n_components,
            },
            tol,
            fit_stats: FitStats {
                iterations,
                final_residual: residual,
                converged,
            },
        })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, ModelIoError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("model io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratings::{RatingScale, SparseRatingMatrix};

    fn matrix(
        n_users: usize,
        n_items: usize,
        triples: &[(usize, usize, f64)],
        scale: (f64, f64),
    ) -> SparseRatingMatrix {
        SparseRatingMatrix::from_dense_triples(
            n_users,
            n_items,
            triples,
            RatingScale::new(scale.0, scale.1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn constant_matrix_predicts_constant() {
        let m = matrix(
            3,
            3,
            &[
                (0, 0, 3.0),
                (0, 1, 3.0),
                (1, 1, 3.0),
                (1, 2, 3.0),
                (2, 0, 3.0),
            ],
            (1.0, 5.0),
        );
        let sc = fit_sc(&m, 1e-12, 1000).unwrap();
        let uc = fit_uc(&m, 1e-12, 1000).unwrap();
        for u in 0..3 {
            for i in 0..3 {
                assert!((sc.predict(u, i).unwrap() - 3.0).abs() < 1e-9);
                assert!((uc.predict(u, i).unwrap() - 3.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sc_completes_three_entry_square() {
        // Exact additive solve: alpha_1 + beta_1 = 3 + 4 - 2.
        let m = matrix(2, 2, &[(0, 0, 2.0), (0, 1, 4.0), (1, 0, 3.0)], (1.0, 5.0));
        let model = fit_sc(&m, 1e-12, 5000).unwrap();
        assert!(model.fit_stats().converged);
        assert!((model.predict(1, 1).unwrap() - 5.0).abs() < 1e-8);
    }

    #[test]
    fn uc_completes_three_entry_square() {
        // Exact multiplicative solve: 3 * 4 / 2.
        let m = matrix(2, 2, &[(0, 0, 2.0), (0, 1, 4.0), (1, 0, 3.0)], (1.0, 5.0));
        let model = fit_uc(&m, 1e-12, 5000).unwrap();
        assert!((model.predict(1, 1).unwrap() - 6.0).abs() < 1e-8);
    }

    #[test]
    fn sc_shifted_row_example() {
        // Bob's row sits one unit below Alice's; Bob rates a new item 7,
        // so Alice's prediction there is 8.
        let alice = 0;
        let bob = 1;
        let m = matrix(
            2,
            4,
            &[
                (alice, 0, 5.0),
                (alice, 1, 7.0),
                (alice, 2, 3.0),
                (bob, 0, 4.0),
                (bob, 1, 6.0),
                (bob, 2, 2.0),
                (bob, 3, 7.0),
            ],
            (1.0, 10.0),
        );
        let model = fit_sc(&m, 1e-12, 5000).unwrap();
        assert!((model.predict(alice, 3).unwrap() - 8.0).abs() < 1e-8);
    }

    #[test]
    fn uc_scaled_row_example() {
        // Alice rates 10% above Bob; Bob rates a new item 70, Alice gets 77.
        let alice = 0;
        let bob = 1;
        let m = matrix(
            2,
            4,
            &[
                (alice, 0, 22.0),
                (alice, 1, 55.0),
                (alice, 2, 88.0),
                (bob, 0, 20.0),
                (bob, 1, 50.0),
                (bob, 2, 80.0),
                (bob, 3, 70.0),
            ],
            (1.0, 100.0),
        );
        let model = fit_uc(&m, 1e-12, 5000).unwrap();
        assert!((model.predict(alice, 3).unwrap() - 77.0).abs() < 1e-6);
    }

    #[test]
    fn cold_start_user_is_error() {
        let m = matrix(2, 2, &[(0, 0, 2.0), (0, 1, 4.0), (1, 0, 3.0)], (1.0, 5.0));
        let reduced = m.remove_entries(&[(1, 0)]).unwrap();
        let model = fit_sc(&reduced, 1e-10, 1000).unwrap();
        assert_eq!(model.predict(1, 1), Err(PredictError::ColdStartUser(1)));
    }

    #[test]
    fn cross_component_is_error() {
        let m = matrix(2, 2, &[(0, 0, 2.0), (1, 1, 4.0)], (1.0, 5.0));
        let model = fit_sc(&m, 1e-10, 1000).unwrap();
        assert_eq!(
            model.predict(0, 1),
            Err(PredictError::CrossComponent { user: 0, item: 1 })
        );
        assert!(model.predict(0, 0).is_ok());
    }

    #[test]
    fn complete_all_flags_failures_individually() {
        let m = matrix(2, 2, &[(0, 0, 2.0), (1, 1, 4.0)], (1.0, 5.0));
        let model = fit_sc(&m, 1e-10, 1000).unwrap();
        let out = model.complete_all(&[(0, 0), (0, 1), (1, 1)]);
        assert!(out[0].is_ok());
        assert_eq!(out[1], Err(PredictError::CrossComponent { user: 0, item: 1 }));
        assert!(out[2].is_ok());
        assert!(model.complete_all(&[]).is_empty());
    }

    #[test]
    fn uc_rejects_nonpositive_ratings() {
        let m = matrix(1, 2, &[(0, 0, -1.0), (0, 1, 2.0)], (-5.0, 5.0));
        assert!(matches!(
            fit_uc(&m, 1e-10, 100),
            Err(FitError::NonPositiveRating { value, .. }) if value == -1.0
        ));
    }

    #[test]
    fn gauge_mean_row_param_zero_per_component() {
        let m = matrix(
            4,
            4,
            &[
                (0, 0, 2.0),
                (0, 1, 4.0),
                (1, 0, 3.0),
                (2, 2, 5.0),
                (2, 3, 1.0),
                (3, 3, 2.0),
            ],
            (1.0, 5.0),
        );
        let model = fit_sc(&m, 1e-12, 5000).unwrap();
        let labels = model.components();
        assert_eq!(labels.n_components, 2);
        for c in 0..labels.n_components {
            let alphas: Vec<f64> = (0..4)
                .filter(|&u| labels.component_of_user[u] == c && !model.row_param()[u].is_nan())
                .map(|u| model.row_param()[u])
                .collect();
            if !alphas.is_empty() {
                let mean = alphas.iter().sum::<f64>() / alphas.len() as f64;
                assert!(mean.abs() < 1e-9, "component {c} gauge mean {mean}");
            }
        }
    }

    #[test]
    fn non_convergence_is_flagged_not_fatal() {
        let m = matrix(2, 2, &[(0, 0, 2.0), (0, 1, 4.0), (1, 0, 3.0)], (1.0, 5.0));
        let model = fit_sc(&m, 1e-13, 1).unwrap();
        assert!(!model.fit_stats().converged);
        assert_eq!(model.fit_stats().iterations, 1);
        assert!(model.predict(1, 1).is_ok());
    }

    #[test]
    fn serialization_round_trips_predictions() {
        let m = matrix(
            3,
            3,
            &[
                (0, 0, 2.0),
                (0, 1, 4.0),
                (1, 0, 3.0),
                (1, 2, 5.0),
                (2, 2, 1.0),
            ],
            (1.0, 5.0),
        );
        let model = fit_uc(&m, 1e-11, 5000).unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let back = ConsistencyModel::read_from(&mut &buf[..]).unwrap();
        assert_eq!(back.kind(), ModelKind::Unit);
        assert_eq!(back.fit_stats(), model.fit_stats());
        for u in 0..3 {
            for i in 0..3 {
                assert_eq!(model.predict(u, i), back.predict(u, i));
            }
        }
    }
}
