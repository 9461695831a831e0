//! Sparse rating matrix storage, dataset ingestion, withholding edits, and
//! bipartite connectivity analysis.
//!
//! External user/item ids are remapped to dense 0-based indices at load time;
//! all downstream math works on dense indices. A [`SparseRatingMatrix`] is
//! immutable after construction — withholding produces a new value via
//! [`SparseRatingMatrix::remove_entries`] — so it is safe to share across
//! concurrent readers.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

/// Inclusive bounds for valid rating values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl RatingScale {
    pub fn new(min: f64, max: f64) -> Result<Self, DataError> {
        if !(min < max) {
            return Err(DataError::InvalidScale { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }
}

/// The 1–5 scale used by the MovieLens and Douban datasets.
impl Default for RatingScale {
    fn default() -> Self {
        Self { min: 1.0, max: 5.0 }
    }
}

/// One filled cell of the rating matrix, in dense indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
}

/// Bidirectional map between external ids and dense 0-based indices.
#[derive(Debug, Clone, Default)]
pub struct IdMap {
    to_index: HashMap<String, u32>,
    labels: Vec<String>,
}

impl IdMap {
    fn intern(&mut self, id: &str) -> u32 {
        if let Some(&idx) = self.to_index.get(id) {
            return idx;
        }
        let idx = self.labels.len() as u32;
        self.to_index.insert(id.to_owned(), idx);
        self.labels.push(id.to_owned());
        idx
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.to_index.get(id).map(|&i| i as usize)
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Sparse user×item rating matrix in triplet form with row and column
/// indexes over the same entry storage.
///
/// Entries are sorted by (user, item); `row_start[u]..row_start[u+1]` slices
/// the entries of user `u`, and `col_entries`/`col_start` hold the
/// column-major permutation of entry offsets, so iterating either side
/// enumerates the same triple set.
#[derive(Debug, Clone)]
pub struct SparseRatingMatrix {
    n_users: usize,
    n_items: usize,
    entries: Vec<Entry>,
    row_start: Vec<usize>,
    col_entries: Vec<u32>,
    col_start: Vec<usize>,
    scale: RatingScale,
    user_ids: IdMap,
    item_ids: IdMap,
}

/// Connected components of the bipartite user–item graph whose edges are the
/// filled entries. Users and items with no ratings form singleton components.
#[derive(Debug, Clone)]
pub struct ComponentLabeling {
    pub component_of_user: Vec<usize>,
    pub component_of_item: Vec<usize>,
    pub n_components: usize,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed line: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: rating {value} outside scale [{min}, {max}]")]
    RatingOutsideScale {
        path: String,
        line: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("duplicate rating for user {user}, item {item}{}", fmt_line(*.line))]
    DuplicatePair {
        user: String,
        item: String,
        line: Option<usize>,
    },
    #[error("no entries in {path}")]
    NoEntries { path: String },
    #[error("cannot remove absent entry (user {user}, item {item})")]
    RemovalAbsent { user: usize, item: usize },
    #[error("invalid rating scale: min {min} must be below max {max}")]
    InvalidScale { min: f64, max: f64 },
    #[error("rating {value} for user {user}, item {item} outside scale [{min}, {max}]")]
    ValueOutsideScale {
        user: String,
        item: String,
        value: f64,
        min: f64,
        max: f64,
    },
}

fn fmt_line(line: Option<usize>) -> String {
    match line {
        Some(n) => format!(" (line {n})"),
        None => String::new(),
    }
}

impl SparseRatingMatrix {
    /// Builds a matrix from external-id triples, interning ids in first
    /// appearance order. Duplicate (user, item) pairs are a hard error.
    pub fn from_labeled_triples<S: AsRef<str>>(
        triples: &[(S, S, f64)],
        scale: RatingScale,
    ) -> Result<Self, DataError> {
        let mut user_ids = IdMap::default();
        let mut item_ids = IdMap::default();
        let mut entries = Vec::with_capacity(triples.len());
        for (user, item, rating) in triples {
            if !scale.contains(*rating) {
                return Err(DataError::ValueOutsideScale {
                    user: user.as_ref().to_owned(),
                    item: item.as_ref().to_owned(),
                    value: *rating,
                    min: scale.min,
                    max: scale.max,
                });
            }
            entries.push(Entry {
                user: user_ids.intern(user.as_ref()),
                item: item_ids.intern(item.as_ref()),
                rating: *rating,
            });
        }
        Self::assemble(user_ids, item_ids, entries, scale, None)
    }

    /// Builds a matrix with explicit dimensions from dense-index triples.
    /// External ids are the decimal indices.
    pub fn from_dense_triples(
        n_users: usize,
        n_items: usize,
        triples: &[(usize, usize, f64)],
        scale: RatingScale,
    ) -> Result<Self, DataError> {
        let mut user_ids = IdMap::default();
        for u in 0..n_users {
            user_ids.intern(&u.to_string());
        }
        let mut item_ids = IdMap::default();
        for i in 0..n_items {
            item_ids.intern(&i.to_string());
        }
        let mut entries = Vec::with_capacity(triples.len());
        for &(user, item, rating) in triples {
            assert!(user < n_users && item < n_items, "triple out of bounds");
            if !scale.contains(rating) {
                return Err(DataError::ValueOutsideScale {
                    user: user.to_string(),
                    item: item.to_string(),
                    value: rating,
                    min: scale.min,
                    max: scale.max,
                });
            }
            entries.push(Entry {
                user: user as u32,
                item: item as u32,
                rating,
            });
        }
        Self::assemble(user_ids, item_ids, entries, scale, None)
    }

    fn assemble(
        user_ids: IdMap,
        item_ids: IdMap,
        mut entries: Vec<Entry>,
        scale: RatingScale,
        lines: Option<Vec<usize>>,
    ) -> Result<Self, DataError> {
        let n_users = user_ids.len();
        let n_items = item_ids.len();

        // Sort by (user, item), keeping source line numbers attached when
        // available so duplicate reports can cite the offending line.
        match lines {
            Some(lines) => {
                let mut tagged: Vec<(Entry, usize)> =
                    entries.iter().copied().zip(lines).collect();
                tagged.sort_by_key(|(e, _)| (e.user, e.item));
                for w in tagged.windows(2) {
                    if w[0].0.user == w[1].0.user && w[0].0.item == w[1].0.item {
                        return Err(DataError::DuplicatePair {
                            user: user_ids.label(w[1].0.user as usize).to_owned(),
                            item: item_ids.label(w[1].0.item as usize).to_owned(),
                            line: Some(w[1].1),
                        });
                    }
                }
                entries = tagged.into_iter().map(|(e, _)| e).collect();
            }
            None => {
                entries.sort_by_key(|e| (e.user, e.item));
                for w in entries.windows(2) {
                    if w[0].user == w[1].user && w[0].item == w[1].item {
                        return Err(DataError::DuplicatePair {
                            user: user_ids.label(w[1].user as usize).to_owned(),
                            item: item_ids.label(w[1].item as usize).to_owned(),
                            line: None,
                        });
                    }
                }
            }
        }

        let mut row_start = vec![0usize; n_users + 1];
        for e in &entries {
            row_start[e.user as usize + 1] += 1;
        }
        for u in 0..n_users {
            row_start[u + 1] += row_start[u];
        }

        let mut col_start = vec![0usize; n_items + 1];
        for e in &entries {
            col_start[e.item as usize + 1] += 1;
        }
        for i in 0..n_items {
            col_start[i + 1] += col_start[i];
        }
        let mut cursor = col_start.clone();
        let mut col_entries = vec![0u32; entries.len()];
        for (offset, e) in entries.iter().enumerate() {
            let slot = cursor[e.item as usize];
            col_entries[slot] = offset as u32;
            cursor[e.item as usize] += 1;
        }

        Ok(Self {
            n_users,
            n_items,
            entries,
            row_start,
            col_entries,
            col_start,
            scale,
            user_ids,
            item_ids,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn sparsity(&self) -> f64 {
        if self.n_users == 0 || self.n_items == 0 {
            return 0.0;
        }
        1.0 - self.nnz() as f64 / (self.n_users as f64 * self.n_items as f64)
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn user_ids(&self) -> &IdMap {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &IdMap {
        &self.item_ids
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Filled entries of user `u` as (item, rating), ascending by item.
    pub fn row(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries[self.row_start[u]..self.row_start[u + 1]]
            .iter()
            .map(|e| (e.item as usize, e.rating))
    }

    /// Filled entries of item `i` as (user, rating), ascending by user.
    pub fn col(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.col_entries[self.col_start[i]..self.col_start[i + 1]]
            .iter()
            .map(|&off| {
                let e = &self.entries[off as usize];
                (e.user as usize, e.rating)
            })
    }

    pub fn row_len(&self, u: usize) -> usize {
        self.row_start[u + 1] - self.row_start[u]
    }

    pub fn col_len(&self, i: usize) -> usize {
        self.col_start[i + 1] - self.col_start[i]
    }

    pub fn get(&self, u: usize, i: usize) -> Option<f64> {
        let row = &self.entries[self.row_start[u]..self.row_start[u + 1]];
        row.binary_search_by_key(&(i as u32), |e| e.item)
            .ok()
            .map(|pos| row[pos].rating)
    }

    /// Histogram of rating values, ascending by value.
    pub fn rating_histogram(&self) -> Vec<(f64, usize)> {
        let mut values: Vec<f64> = self.entries.iter().map(|e| e.rating).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut hist: Vec<(f64, usize)> = Vec::new();
        for v in values {
            match hist.last_mut() {
                Some((last, count)) if *last == v => *count += 1,
                _ => hist.push((v, 1)),
            }
        }
        hist
    }

    /// Returns a new matrix with exactly the given (user, item) entries
    /// absent. Dimensions, id maps, and scale are preserved, so rows or
    /// columns may become empty.
    pub fn remove_entries(&self, removals: &[(usize, usize)]) -> Result<Self, DataError> {
        let mut to_remove: Vec<(u32, u32)> = Vec::with_capacity(removals.len());
        for &(u, i) in removals {
            if u >= self.n_users || i >= self.n_items || self.get(u, i).is_none() {
                return Err(DataError::RemovalAbsent { user: u, item: i });
            }
            to_remove.push((u as u32, i as u32));
        }
        to_remove.sort_unstable();
        if to_remove.windows(2).any(|w| w[0] == w[1]) {
            let dup = to_remove
                .windows(2)
                .find(|w| w[0] == w[1])
                .unwrap()[0];
            return Err(DataError::RemovalAbsent {
                user: dup.0 as usize,
                item: dup.1 as usize,
            });
        }
        let entries: Vec<Entry> = self
            .entries
            .iter()
            .filter(|e| to_remove.binary_search(&(e.user, e.item)).is_err())
            .copied()
            .collect();
        Self::assemble(
            self.user_ids.clone(),
            self.item_ids.clone(),
            entries,
            self.scale,
            None,
        )
    }

    /// Labels connected components of the bipartite rating graph by
    /// union-find over users and items. O(nnz + n_users + n_items).
    pub fn connected_components(&self) -> ComponentLabeling {
        let n = self.n_users + self.n_items;
        let mut uf = UnionFind::new(n);
        for e in &self.entries {
            uf.union(e.user as usize, self.n_users + e.item as usize);
        }
        // Compress roots to component ids in first-seen order (users first)
        // so labeling is deterministic.
        let mut id_of_root: HashMap<usize, usize> = HashMap::new();
        let mut component_of_user = Vec::with_capacity(self.n_users);
        let mut component_of_item = Vec::with_capacity(self.n_items);
        for v in 0..n {
            let root = uf.find(v);
            let next = id_of_root.len();
            let id = *id_of_root.entry(root).or_insert(next);
            if v < self.n_users {
                component_of_user.push(id);
            } else {
                component_of_item.push(id);
            }
        }
        ComponentLabeling {
            component_of_user,
            component_of_item,
            n_components: id_of_root.len(),
        }
    }

    /// Writes the matrix as `user_id,item_id,rating` CSV with a header.
    /// Reloading with [`load_csv`] yields an identical triple set.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), DataError> {
        let path_str = path.as_ref().display().to_string();
        let file = File::create(path.as_ref()).map_err(|source| DataError::Io {
            path: path_str.clone(),
            source,
        })?;
        let mut w = BufWriter::new(file);
        let io_err = |source| DataError::Io {
            path: path_str.clone(),
            source,
        };
        writeln!(w, "user_id,item_id,rating").map_err(io_err)?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{}",
                self.user_ids.label(e.user as usize),
                self.item_ids.label(e.item as usize),
                e.rating
            )
            .map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}

impl fmt::Display for SparseRatingMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} users x {} items, {} entries, sparsity {:.2}%",
            self.n_users,
            self.n_items,
            self.nnz(),
            100.0 * self.sparsity()
        )
    }
}

struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let grandparent = self.parent[self.parent[x] as usize];
            self.parent[x] = grandparent;
            x = grandparent as usize;
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let mut ra = self.find(a);
        let mut rb = self.find(b);
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
    }
}

/// Loads a MovieLens `.dat` ratings file: `UserID::MovieID::Rating::Timestamp`
/// per line, integer fields, `::` separator. Timestamps are parsed and
/// discarded.
pub fn load_movielens<P: AsRef<Path>>(path: P) -> Result<SparseRatingMatrix, DataError> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|source| DataError::Io {
        path: path_str.clone(),
        source,
    })?;
    let reader = BufReader::new(file);
    let scale = RatingScale::default();

    let mut user_ids = IdMap::default();
    let mut item_ids = IdMap::default();
    let mut entries = Vec::new();
    let mut lines = Vec::new();

    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line.map_err(|source| DataError::Io {
            path: path_str.clone(),
            source,
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split("::");
        let (user, item, rating_raw, timestamp) = match (
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
        ) {
            (Some(u), Some(i), Some(r), Some(t), None) => (u, i, r, t),
            _ => {
                return Err(DataError::MalformedLine {
                    path: path_str,
                    line: line_no,
                    reason: "expected UserID::MovieID::Rating::Timestamp".into(),
                })
            }
        };
        let malformed = |reason: String| DataError::MalformedLine {
            path: path_str.clone(),
            line: line_no,
            reason,
        };
        user.parse::<i64>()
            .map_err(|_| malformed(format!("non-integer user id {user:?}")))?;
        item.parse::<i64>()
            .map_err(|_| malformed(format!("non-integer movie id {item:?}")))?;
        let rating = rating_raw
            .parse::<i64>()
            .map_err(|_| malformed(format!("non-integer rating {rating_raw:?}")))?;
        timestamp
            .parse::<i64>()
            .map_err(|_| malformed(format!("non-integer timestamp {timestamp:?}")))?;
        if !scale.contains(rating as f64) {
            return Err(DataError::RatingOutsideScale {
                path: path_str,
                line: line_no,
                value: rating as f64,
                min: scale.min,
                max: scale.max,
            });
        }
        entries.push(Entry {
            user: user_ids.intern(user),
            item: item_ids.intern(item),
            rating: rating as f64,
        });
        lines.push(line_no);
    }
    if entries.is_empty() {
        return Err(DataError::NoEntries { path: path_str });
    }
    SparseRatingMatrix::assemble(user_ids, item_ids, entries, scale, Some(lines))
}

/// Loads a generic `user_id,item_id,rating` CSV (UTF-8, LF or CRLF,
/// optional single header row).
pub fn load_csv<P: AsRef<Path>>(
    path: P,
    has_header: bool,
) -> Result<SparseRatingMatrix, DataError> {
    load_csv_with_scale(path, has_header, RatingScale::default())
}

pub fn load_csv_with_scale<P: AsRef<Path>>(
    path: P,
    has_header: bool,
    scale: RatingScale,
) -> Result<SparseRatingMatrix, DataError> {
    let path_str = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|source| DataError::Io {
        path: path_str.clone(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut user_ids = IdMap::default();
    let mut item_ids = IdMap::default();
    let mut entries = Vec::new();
    let mut lines = Vec::new();

    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line.map_err(|source| DataError::Io {
            path: path_str.clone(),
            source,
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || (has_header && line_no == 1) {
            continue;
        }
        let mut fields = line.split(',');
        let (user, item, rating_raw) =
            match (fields.next(), fields.next(), fields.next(), fields.next()) {
                (Some(u), Some(i), Some(r), None) => (u.trim(), i.trim(), r.trim()),
                _ => {
                    return Err(DataError::MalformedLine {
                        path: path_str,
                        line: line_no,
                        reason: "expected user_id,item_id,rating".into(),
                    })
                }
            };
        let rating = rating_raw.parse::<f64>().map_err(|_| DataError::MalformedLine {
            path: path_str.clone(),
            line: line_no,
            reason: format!("unparseable rating {rating_raw:?}"),
        })?;
        if !scale.contains(rating) {
            return Err(DataError::RatingOutsideScale {
                path: path_str,
                line: line_no,
                value: rating,
                min: scale.min,
                max: scale.max,
            });
        }
        entries.push(Entry {
            user: user_ids.intern(user),
            item: item_ids.intern(item),
            rating,
        });
        lines.push(line_no);
    }
    if entries.is_empty() {
        return Err(DataError::NoEntries { path: path_str });
    }
    SparseRatingMatrix::assemble(user_ids, item_ids, entries, scale, Some(lines))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn movielens_singleton() {
        let f = write_temp("1::10::5::978300760\n");
        let m = load_movielens(f.path()).unwrap();
        assert_eq!(m.n_users(), 1);
        assert_eq!(m.n_items(), 1);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 0), Some(5.0));
        assert_eq!(m.user_ids().label(0), "1");
        assert_eq!(m.item_ids().label(0), "10");
    }

    #[test]
    fn movielens_rating_outside_scale() {
        let f = write_temp("1::10::9::0\n");
        let err = load_movielens(f.path()).unwrap_err();
        assert!(matches!(err, DataError::RatingOutsideScale { line: 1, .. }));
        assert!(err.to_string().contains("outside scale"));
    }

    #[test]
    fn movielens_malformed_line_reports_number() {
        let f = write_temp("1::10::5::11\n1::oops::5::11\n");
        let err = load_movielens(f.path()).unwrap_err();
        match err {
            DataError::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn movielens_duplicate_pair_is_error() {
        let f = write_temp("1::10::5::0\n2::10::3::0\n1::10::4::0\n");
        let err = load_movielens(f.path()).unwrap_err();
        match err {
            DataError::DuplicatePair { user, item, line } => {
                assert_eq!(user, "1");
                assert_eq!(item, "10");
                assert_eq!(line, Some(3));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_header_only_is_no_entries() {
        let f = write_temp("user_id,item_id,rating\n");
        let err = load_csv(f.path(), true).unwrap_err();
        assert!(matches!(err, DataError::NoEntries { .. }));
    }

    #[test]
    fn csv_duplicate_rows_rejected() {
        let f = write_temp("u1,i1,4\nu1,i1,2\n");
        let err = load_csv(f.path(), false).unwrap_err();
        assert!(matches!(err, DataError::DuplicatePair { .. }));
    }

    #[test]
    fn csv_crlf_and_header() {
        let f = write_temp("user_id,item_id,rating\r\na,x,3\r\nb,y,4.0\r\n");
        let m = load_csv(f.path(), true).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 0), Some(3.0));
        assert_eq!(m.get(1, 1), Some(4.0));
    }

    #[test]
    fn row_col_indexes_are_transposes() {
        let m = SparseRatingMatrix::from_dense_triples(
            3,
            4,
            &[
                (0, 0, 2.0),
                (0, 3, 4.0),
                (1, 0, 3.0),
                (2, 2, 5.0),
                (1, 2, 1.0),
            ],
            RatingScale::default(),
        )
        .unwrap();
        let mut from_rows: Vec<(usize, usize, f64)> = (0..m.n_users())
            .flat_map(|u| m.row(u).map(move |(i, r)| (u, i, r)))
            .collect();
        let mut from_cols: Vec<(usize, usize, f64)> = (0..m.n_items())
            .flat_map(|i| m.col(i).map(move |(u, r)| (u, i, r)))
            .collect();
        from_rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        from_cols.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(from_rows, from_cols);
    }

    #[test]
    fn remove_entries_keeps_others_intact() {
        let m = SparseRatingMatrix::from_dense_triples(
            3,
            3,
            &[
                (0, 0, 1.0),
                (0, 1, 2.0),
                (1, 1, 3.0),
                (2, 0, 4.0),
                (2, 2, 5.0),
            ],
            RatingScale::default(),
        )
        .unwrap();
        let reduced = m.remove_entries(&[(0, 1), (2, 2)]).unwrap();
        assert_eq!(reduced.nnz(), 3);
        assert_eq!(reduced.get(0, 0), Some(1.0));
        assert_eq!(reduced.get(1, 1), Some(3.0));
        assert_eq!(reduced.get(2, 0), Some(4.0));
        assert_eq!(reduced.get(0, 1), None);
        // the original is untouched
        assert_eq!(m.nnz(), 5);
        assert_eq!(m.get(0, 1), Some(2.0));
    }

    #[test]
    fn remove_absent_entry_is_error() {
        let m = SparseRatingMatrix::from_dense_triples(
            2,
            2,
            &[(0, 0, 1.0)],
            RatingScale::default(),
        )
        .unwrap();
        assert!(matches!(
            m.remove_entries(&[(1, 1)]),
            Err(DataError::RemovalAbsent { user: 1, item: 1 })
        ));
    }

    #[test]
    fn remove_only_entry_of_user_leaves_empty_row() {
        let m = SparseRatingMatrix::from_dense_triples(
            2,
            2,
            &[(0, 0, 1.0), (1, 0, 2.0), (1, 1, 3.0)],
            RatingScale::default(),
        )
        .unwrap();
        let reduced = m.remove_entries(&[(0, 0)]).unwrap();
        assert_eq!(reduced.n_users(), 2);
        assert_eq!(reduced.row_len(0), 0);
    }

    #[test]
    fn components_fully_filled_is_one() {
        let triples: Vec<(usize, usize, f64)> = (0..3)
            .flat_map(|u| (0..3).map(move |i| (u, i, 3.0)))
            .collect();
        let m =
            SparseRatingMatrix::from_dense_triples(3, 3, &triples, RatingScale::default()).unwrap();
        assert_eq!(m.connected_components().n_components, 1);
    }

    #[test]
    fn components_block_diagonal_is_two() {
        let m = SparseRatingMatrix::from_dense_triples(
            2,
            2,
            &[(0, 0, 1.0), (1, 1, 2.0)],
            RatingScale::default(),
        )
        .unwrap();
        let labels = m.connected_components();
        assert_eq!(labels.n_components, 2);
        assert_eq!(labels.component_of_user[0], labels.component_of_item[0]);
        assert_eq!(labels.component_of_user[1], labels.component_of_item[1]);
        assert_ne!(labels.component_of_user[0], labels.component_of_user[1]);
    }

    #[test]
    fn csv_round_trip_identical_triples() {
        let m = SparseRatingMatrix::from_labeled_triples(
            &[("u7", "a", 1.5), ("u2", "b", 4.0), ("u7", "b", 5.0)],
            RatingScale::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        m.write_csv(&path).unwrap();
        let back = load_csv(&path, true).unwrap();
        assert_eq!(back.nnz(), m.nnz());
        for e in m.entries() {
            let user = m.user_ids().label(e.user as usize);
            let item = m.item_ids().label(e.item as usize);
            let u2 = back.user_ids().index_of(user).unwrap();
            let i2 = back.item_ids().index_of(item).unwrap();
            assert_eq!(back.get(u2, i2), Some(e.rating));
        }
    }

    #[test]
    fn table_sparsity_arithmetic() {
        // Sparsity derived from published dataset dimensions.
        let ml = 1.0 - 1_000_209.0 / (6040.0 * 3706.0);
        assert!((ml * 100.0 - 95.53).abs() < 0.01);
        let douban = 1.0 - 136_000.0 / (3000.0 * 3000.0);
        assert!((douban * 100.0 - 98.49).abs() < 0.01);
    }
}
