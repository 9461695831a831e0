//! Deterministic synthetic rating data.
//!
//! Ratings follow a planted structure: a global mean plus per-user and
//! per-item effects, a low-rank user×item interaction, and independent
//! noise, rounded to the integer grid of the rating scale. The generators
//! are seeded and fully reproducible, which makes them usable as fixtures
//! for tests, benchmarks, and desk-scale experiment runs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ratings::{DataError, RatingScale, SparseRatingMatrix};

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_items: usize,
    /// Target mean number of ratings per user; actual counts vary by user.
    pub avg_ratings_per_user: f64,
    pub seed: u64,
    pub mean: f64,
    pub user_sd: f64,
    pub item_sd: f64,
    pub noise_sd: f64,
    pub interaction_rank: usize,
    pub interaction_sd: f64,
    pub scale: RatingScale,
}

/// Dimensions and density in the ballpark of the smaller MovieLens release.
impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_users: 943,
            n_items: 1682,
            avg_ratings_per_user: 106.0,
            seed: 42,
            mean: 3.0,
            user_sd: 0.45,
            item_sd: 0.55,
            noise_sd: 0.6,
            interaction_rank: 4,
            interaction_sd: 0.5,
            scale: RatingScale { min: 1.0, max: 5.0 },
        }
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

/// Generates a rating matrix from the planted-effects model.
pub fn generate(spec: &SynthSpec) -> SparseRatingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_users = spec.n_users;
    let n_items = spec.n_items;

    let user_effect: Vec<f64> = (0..n_users).map(|_| spec.user_sd * gaussian(&mut rng)).collect();
    let item_effect: Vec<f64> = (0..n_items).map(|_| spec.item_sd * gaussian(&mut rng)).collect();
    let rank = spec.interaction_rank;
    let user_vec: Vec<f64> = (0..n_users * rank).map(|_| gaussian(&mut rng)).collect();
    let item_vec: Vec<f64> = (0..n_items * rank).map(|_| gaussian(&mut rng)).collect();
    let interaction_scale = if rank > 0 {
        spec.interaction_sd / (rank as f64).sqrt()
    } else {
        0.0
    };

    let mut pool: Vec<u32> = (0..n_items as u32).collect();
    let mut triples: Vec<(usize, usize, f64)> = Vec::new();
    for u in 0..n_users {
        // Heterogeneous per-user activity, lognormal-ish around the target.
        let count = (spec.avg_ratings_per_user * (0.35 * gaussian(&mut rng)).exp())
            .round()
            .max(4.0) as usize;
        let count = count.min(n_items);
        // Partial Fisher-Yates; undo the swaps afterwards so the pool stays
        // cheap to reuse across users.
        for slot in 0..count {
            let pick = rng.gen_range(slot..n_items);
            pool.swap(slot, pick);
        }
        for &item in pool[..count].iter() {
            let i = item as usize;
            let interaction: f64 = (0..rank)
                .map(|t| user_vec[u * rank + t] * item_vec[i * rank + t])
                .sum::<f64>()
                * interaction_scale;
            let value = spec.mean
                + user_effect[u]
                + item_effect[i]
                + interaction
                + spec.noise_sd * gaussian(&mut rng);
            let rating = spec.scale.clamp(value.round());
            triples.push((u, i, rating));
        }
        pool.sort_unstable_by(|a, b| a.cmp(b));
    }

    SparseRatingMatrix::from_dense_triples(n_users, n_items, &triples, spec.scale)
        .expect("generated triples are unique and in scale")
}

/// Writes a MovieLens-format ratings file with exactly `n_entries` unique
/// (user, item) pairs over the given dimensions. Item ids are spread out so
/// the external-id space is non-contiguous, as in the real dataset.
pub fn write_movielens_file<P: AsRef<Path>>(
    path: P,
    n_users: usize,
    n_items: usize,
    n_entries: usize,
    seed: u64,
) -> Result<(), DataError> {
    assert!(n_entries <= n_users * n_items, "too many entries requested");
    let path_str = path.as_ref().display().to_string();
    let file = File::create(path.as_ref()).map_err(|source| DataError::Io {
        path: path_str.clone(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let base = n_entries / n_users;
    let extra = n_entries % n_users;
    let mut pool: Vec<u32> = (0..n_items as u32).collect();
    let io_err = |source| DataError::Io {
        path: path_str.clone(),
        source,
    };
    for u in 0..n_users {
        let count = base + usize::from(u < extra);
        let count = count.min(n_items);
        for slot in 0..count {
            let pick = rng.gen_range(slot..n_items);
            pool.swap(slot, pick);
        }
        for &item in pool[..count].iter() {
            let rating = rng.gen_range(1..=5);
            writeln!(
                w,
                "{}::{}::{}::978300760",
                u + 1,
                item as usize * 2 + 1,
                rating
            )
            .map_err(io_err)?;
        }
        pool.sort_unstable();
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generate_is_deterministic_and_in_scale() {
        let spec = SynthSpec {
            n_users: 40,
            n_items: 60,
            avg_ratings_per_user: 12.0,
            ..SynthSpec::default()
        };
        let a = generate(&spec);
        let b = generate(&spec);
        assert_eq!(a.nnz(), b.nnz());
        for (ea, eb) in a.entries().iter().zip(b.entries()) {
            assert_eq!(ea, eb);
        }
        assert!(a
            .entries()
            .iter()
            .all(|e| e.rating >= 1.0 && e.rating <= 5.0 && e.rating.fract() == 0.0));
    }

    #[test]
    fn generate_covers_scale_extremes() {
        let m = generate(&SynthSpec {
            n_users: 200,
            n_items: 300,
            avg_ratings_per_user: 40.0,
            ..SynthSpec::default()
        });
        let hist = m.rating_histogram();
        let values: Vec<f64> = hist.iter().map(|&(v, _)| v).collect();
        assert!(values.contains(&1.0));
        assert!(values.contains(&5.0));
    }

    #[test]
    fn movielens_file_has_exact_entry_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ratings.dat");
        write_movielens_file(&path, 25, 40, 500, 7).unwrap();
        let m = crate::ratings::load_movielens(&path).unwrap();
        assert_eq!(m.nnz(), 500);
        assert_eq!(m.n_users(), 25);
    }
}
