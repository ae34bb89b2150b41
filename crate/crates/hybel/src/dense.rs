//! Dot-product ranking over precomputed entity vectors: exact search, an
//! optional inverted-file approximate mode, and a brute-force oracle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::candidate::{clean_score, Method, ScoredCandidate};
use crate::encode::{Vector, VectorTable};
use crate::error::{Error, Result};

/// Configuration for the inverted-file approximate mode.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IvfConfig {
    /// Number of coarse cells; defaults to ceil(sqrt(count)) when absent.
    pub n_cells: Option<usize>,
    /// Cells scanned per query.
    pub nprobe: usize,
    /// Lloyd iterations for the coarse k-means.
    pub kmeans_iters: usize,
    /// Seed for centroid initialization.
    pub seed: u64,
    /// Build fails when measured recall@16 against exact search drops below
    /// this floor.
    pub recall_floor: f64,
    /// Held-out query sample size for the recall measurement.
    pub recall_sample: usize,
}

impl Default for IvfConfig {
    fn default() -> Self {
        IvfConfig {
            n_cells: None,
            nprobe: 8,
            kmeans_iters: 10,
            seed: 42,
            recall_floor: 0.95,
            recall_sample: 64,
        }
    }
}

const RECALL_K: usize = 16;

#[derive(Debug, Clone)]
struct Ivf {
    assignments: Vec<u32>,
    centroids: Vec<f32>, // n_cells x dim
    cells: Vec<Vec<u32>>,
    nprobe: usize,
    measured_recall: f64,
}

/// Immutable dense index: ids plus a count x dim matrix, searched by dot
/// product with score-descending, id-ascending ordering.
#[derive(Debug, Clone)]
pub struct DenseIndex {
    ids: Vec<String>,
    matrix: Vec<f32>,
    dim: usize,
    ivf: Option<Ivf>,
}

impl DenseIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_approximate(&self) -> bool {
        self.ivf.is_some()
    }

    /// Measured recall@16 of the approximate mode against exact search on
    /// the build-time query sample; 1.0 for exact indexes.
    pub fn measured_recall(&self) -> f64 {
        self.ivf.as_ref().map_or(1.0, |ivf| ivf.measured_recall)
    }

    pub fn set_nprobe(&mut self, nprobe: usize) {
        if let Some(ivf) = &mut self.ivf {
            ivf.nprobe = nprobe.max(1);
        }
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }
}

/// Build an exact index over a vector table. Errors on an empty table;
/// mixed dims cannot occur because the table enforces one width.
pub fn build_dense_index(table: &VectorTable) -> Result<DenseIndex> {
    let mut index = from_table(table)?;
    index.ivf = None;
    Ok(index)
}

fn from_table(table: &VectorTable) -> Result<DenseIndex> {
    if table.is_empty() {
        return Err(Error::InvalidInput(
            "cannot build a dense index from an empty table".into(),
        ));
    }
    let dim = table.dim();
    let mut ids = Vec::with_capacity(table.len());
    let mut matrix = Vec::with_capacity(table.len() * dim);
    for (id, row) in table.iter() {
        ids.push(id.to_string());
        matrix.extend_from_slice(row);
    }
    Ok(DenseIndex {
        ids,
        matrix,
        dim,
        ivf: None,
    })
}

/// Build an inverted-file approximate index: coarse k-means cells scanned
/// `nprobe` at a time. The build measures recall@16 against exact search on
/// a deterministic sample of the indexed vectors and fails loudly below the
/// configured floor.
pub fn build_approximate_index(table: &VectorTable, cfg: &IvfConfig) -> Result<DenseIndex> {
    let mut index = from_table(table)?;
    let count = index.len();
    let n_cells = cfg
        .n_cells
        .unwrap_or_else(|| (count as f64).sqrt().ceil() as usize)
        .clamp(1, count);
    let (centroids, assignments) = kmeans(&index, n_cells, cfg.kmeans_iters, cfg.seed);
    let cells = group_cells(&assignments, n_cells);
    index.ivf = Some(Ivf {
        assignments,
        centroids,
        cells,
        nprobe: cfg.nprobe.max(1),
        measured_recall: 0.0,
    });
    let recall = measure_recall(&index, cfg.recall_sample);
    if recall < cfg.recall_floor {
        return Err(Error::RecallFloor {
            measured: recall,
            floor: cfg.recall_floor,
        });
    }
    if let Some(ivf) = &mut index.ivf {
        ivf.measured_recall = recall;
    }
    Ok(index)
}

fn group_cells(assignments: &[u32], n_cells: usize) -> Vec<Vec<u32>> {
    let mut cells = vec![Vec::new(); n_cells];
    for (i, &c) in assignments.iter().enumerate() {
        cells[c as usize].push(i as u32);
    }
    cells
}

fn kmeans(index: &DenseIndex, n_cells: usize, iters: usize, seed: u64) -> (Vec<f32>, Vec<u32>) {
    let count = index.len();
    let dim = index.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = rand::seq::index::sample(&mut rng, count, n_cells);
    let mut centroids = vec![0f32; n_cells * dim];
    for (c, i) in init.iter().enumerate() {
        centroids[c * dim..(c + 1) * dim].copy_from_slice(index.row(i));
    }
    let mut assignments = vec![0u32; count];
    for _ in 0..iters.max(1) {
        for i in 0..count {
            assignments[i] = nearest_cell(index.row(i), &centroids, dim);
        }
        let mut sums = vec![0f64; n_cells * dim];
        let mut sizes = vec![0usize; n_cells];
        for i in 0..count {
            let c = assignments[i] as usize;
            sizes[c] += 1;
            for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(index.row(i)) {
                *s += f64::from(v);
            }
        }
        for c in 0..n_cells {
            if sizes[c] == 0 {
                continue; // empty cell keeps its previous centroid
            }
            for d in 0..dim {
                centroids[c * dim + d] = (sums[c * dim + d] / sizes[c] as f64) as f32;
            }
        }
    }
    // final assignment against the last centroid update
    for i in 0..count {
        assignments[i] = nearest_cell(index.row(i), &centroids, dim);
    }
    (centroids, assignments)
}

fn nearest_cell(v: &[f32], centroids: &[f32], dim: usize) -> u32 {
    let n_cells = centroids.len() / dim;
    let mut best = 0u32;
    let mut best_dist = f64::INFINITY;
    for c in 0..n_cells {
        let mut dist = 0f64;
        for (x, y) in v.iter().zip(&centroids[c * dim..(c + 1) * dim]) {
            let d = f64::from(*x) - f64::from(*y);
            dist += d * d;
        }
        if dist < best_dist {
            best_dist = dist;
            best = c as u32;
        }
    }
    best
}

fn measure_recall(index: &DenseIndex, sample: usize) -> f64 {
    let count = index.len();
    let n = sample.clamp(1, count);
    let mut total = 0f64;
    for s in 0..n {
        let i = s * count / n;
        let query = index.row(i).to_vec();
        let query = Vector::new(query);
        let exact = exact_search(index, &query, RECALL_K);
        let approx = approximate_search(index, &query, RECALL_K);
        if exact.is_empty() {
            continue;
        }
        let exact_ids: std::collections::HashSet<&str> =
            exact.iter().map(|c| c.id.as_str()).collect();
        let hit = approx.iter().filter(|c| exact_ids.contains(c.id.as_str())).count();
        total += hit as f64 / exact.len() as f64;
    }
    total / n as f64
}

struct HeapEntry<'a> {
    score: f64,
    id: &'a str,
}

impl PartialEq for HeapEntry<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry<'_> {}
impl PartialOrd for HeapEntry<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry<'_> {
    // "greater" = better: higher score, then lower id
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.id.cmp(self.id))
    }
}

fn top_k<'a>(entries: impl Iterator<Item = HeapEntry<'a>>, k: usize) -> Vec<HeapEntry<'a>> {
    let mut heap: BinaryHeap<std::cmp::Reverse<HeapEntry>> = BinaryHeap::with_capacity(k + 1);
    for e in entries {
        heap.push(std::cmp::Reverse(e));
        if heap.len() > k {
            heap.pop(); // drops the worst
        }
    }
    heap.into_sorted_vec().into_iter().map(|r| r.0).collect()
}

fn exact_search(index: &DenseIndex, query: &Vector, k: usize) -> Vec<ScoredCandidate> {
    let q = query.values();
    let entries = (0..index.len()).map(|i| HeapEntry {
        score: clean_score(crate::encode::vectors::dot_slices(index.row(i), q)),
        id: &index.ids[i],
    });
    top_k(entries, k)
        .into_iter()
        .map(|e| ScoredCandidate::new(e.id, e.score, Method::Dense))
        .collect()
}

fn approximate_search(index: &DenseIndex, query: &Vector, k: usize) -> Vec<ScoredCandidate> {
    let ivf = index.ivf.as_ref().expect("approximate index");
    let q = query.values();
    let dim = index.dim;
    let n_cells = ivf.cells.len();
    let mut ranked: Vec<(f64, usize)> = (0..n_cells)
        .map(|c| {
            let score = crate::encode::vectors::dot_slices(&ivf.centroids[c * dim..(c + 1) * dim], q);
            (clean_score(score), c)
        })
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    let entries = ranked
        .iter()
        .take(ivf.nprobe)
        .flat_map(|&(_, c)| ivf.cells[c].iter())
        .map(|&i| {
            let i = i as usize;
            HeapEntry {
                score: clean_score(crate::encode::vectors::dot_slices(index.row(i), q)),
                id: &index.ids[i],
            }
        });
    top_k(entries, k)
        .into_iter()
        .map(|e| ScoredCandidate::new(e.id, e.score, Method::Dense))
        .collect()
}

/// Top-k entities by dot product against `query`. Exact mode returns the
/// true top-k; approximate mode scans the `nprobe` most promising cells.
pub fn knn_search(index: &DenseIndex, query: &Vector, k: usize) -> Result<Vec<ScoredCandidate>> {
    if query.dim() != index.dim {
        return Err(Error::DimMismatch {
            expected: index.dim,
            got: query.dim(),
        });
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    Ok(match &index.ivf {
        None => exact_search(index, query, k),
        Some(_) => approximate_search(index, query, k),
    })
}

/// Full-scan oracle: computes every dot product, sorts, truncates. Shares no
/// selection machinery with [`knn_search`].
pub fn brute_force_search(
    table: &VectorTable,
    query: &Vector,
    k: usize,
) -> Result<Vec<ScoredCandidate>> {
    if query.dim() != table.dim() {
        return Err(Error::DimMismatch {
            expected: table.dim(),
            got: query.dim(),
        });
    }
    let q = query.values();
    let mut scored: Vec<(f64, &str)> = table
        .iter()
        .map(|(id, row)| {
            let mut acc = 0f64;
            for (x, y) in row.iter().zip(q.iter()) {
                acc += f64::from(*x) * f64::from(*y);
            }
            (clean_score(acc), id)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.truncate(k);
    Ok(scored
        .into_iter()
        .map(|(score, id)| ScoredCandidate::new(id, score, Method::Dense))
        .collect())
}

impl DenseIndex {
    /// Persist as the vector-file format plus a trailing cell section:
    /// u32 cell count, then one u32 cell id per vector. Exact indexes write
    /// zero cells.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file =
            File::create(path).map_err(|e| Error::io_path(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        crate::encode::vectors::write_records(
            w,
            self.dim,
            self.len() as u64,
            (0..self.len()).map(|i| (self.ids[i].as_str(), self.row(i))),
        )?;
        match &self.ivf {
            None => w.write_u32::<LittleEndian>(0)?,
            Some(ivf) => {
                w.write_u32::<LittleEndian>(ivf.cells.len() as u32)?;
                for &a in &ivf.assignments {
                    w.write_u32::<LittleEndian>(a)?;
                }
            }
        }
        Ok(())
    }

    /// Load a persisted index. Approximate-mode centroids are not stored;
    /// they are recomputed as per-cell means of the stored assignments,
    /// which reproduces the build exactly.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io_path(path.display().to_string(), e))?;
        let mut r = BufReader::new(file);
        Self::read_from(&mut r, &path.display().to_string())
    }

    pub fn read_from(r: &mut impl Read, path: &str) -> Result<Self> {
        let table = VectorTable::read_from(r, path)?;
        let n_cells = r.read_u32::<LittleEndian>().map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Truncated {
                    path: path.to_string(),
                    msg: "missing cell-count section".into(),
                }
            } else {
                Error::io_path(path, e)
            }
        })? as usize;
        let mut index = from_table(&table)?;
        if n_cells > 0 {
            let count = index.len();
            let mut assignments = vec![0u32; count];
            for (i, a) in assignments.iter_mut().enumerate() {
                *a = r.read_u32::<LittleEndian>().map_err(|e| {
                    if e.kind() == std::io::ErrorKind::UnexpectedEof {
                        Error::Truncated {
                            path: path.to_string(),
                            msg: format!("cell assignment {i} missing"),
                        }
                    } else {
                        Error::io_path(path, e)
                    }
                })?;
                if *a as usize >= n_cells {
                    return Err(Error::malformed(
                        path,
                        0,
                        format!("cell id {} out of range ({n_cells} cells)", *a),
                    ));
                }
            }
            let dim = index.dim;
            let cells = group_cells(&assignments, n_cells);
            let mut centroids = vec![0f32; n_cells * dim];
            for (c, members) in cells.iter().enumerate() {
                if members.is_empty() {
                    continue;
                }
                let mut sums = vec![0f64; dim];
                for &i in members {
                    for (s, &v) in sums.iter_mut().zip(index.row(i as usize)) {
                        *s += f64::from(v);
                    }
                }
                for d in 0..dim {
                    centroids[c * dim + d] = (sums[d] / members.len() as f64) as f32;
                }
            }
            index.ivf = Some(Ivf {
                assignments,
                centroids,
                cells,
                nprobe: IvfConfig::default().nprobe,
                measured_recall: 0.0,
            });
            let recall = measure_recall(&index, IvfConfig::default().recall_sample);
            if let Some(ivf) = &mut index.ivf {
                ivf.measured_recall = recall;
            }
        }
        Ok(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn table(rows: &[(&str, &[f32])]) -> VectorTable {
        let mut t = VectorTable::new(rows[0].1.len()).unwrap();
        for (id, v) in rows {
            t.insert(id, v).unwrap();
        }
        t
    }

    fn random_table(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> VectorTable {
        let mut t = VectorTable::new(dim).unwrap();
        for i in 0..count {
            let v: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            t.insert(&format!("v{i:05}"), &v).unwrap();
        }
        t
    }

    #[test]
    fn builds_with_matching_count() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0]), ("c", &[1.0, 1.0])]);
        let idx = build_dense_index(&t).unwrap();
        assert_eq!(idx.len(), 3);
    }

    #[test]
    fn empty_table_is_an_error() {
        let t = VectorTable::new(2).unwrap();
        assert!(build_dense_index(&t).is_err());
    }

    #[test]
    fn k_equal_to_count_returns_everything() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0]), ("c", &[1.0, 1.0])]);
        let idx = build_dense_index(&t).unwrap();
        let res = knn_search(&idx, &Vector::new(vec![0.5, 0.5]), 3).unwrap();
        assert_eq!(res.len(), 3);
    }

    #[test]
    fn k_zero_is_empty() {
        let t = table(&[("a", &[1.0, 0.0])]);
        let idx = build_dense_index(&t).unwrap();
        assert!(knn_search(&idx, &Vector::new(vec![1.0, 0.0]), 0).unwrap().is_empty());
    }

    #[test]
    fn single_vector_scores_self_dot() {
        let t = table(&[("a", &[3.0, 4.0])]);
        let idx = build_dense_index(&t).unwrap();
        let res = knn_search(&idx, &Vector::new(vec![3.0, 4.0]), 1).unwrap();
        assert_eq!(res[0].id, "a");
        assert_eq!(res[0].score, 25.0);
        assert_eq!(res[0].method, Method::Dense);
    }

    #[test]
    fn orthogonal_basis_example() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let res = brute_force_search(&t, &Vector::new(vec![1.0, 0.0]), 2).unwrap();
        assert_eq!(res[0].id, "a");
        assert_eq!(res[0].score, 1.0);
        assert_eq!(res[1].id, "b");
        assert_eq!(res[1].score, 0.0);
    }

    #[test]
    fn ties_order_by_ascending_id() {
        let t = table(&[("z", &[1.0, 0.0]), ("a", &[1.0, 0.0]), ("m", &[1.0, 0.0])]);
        for res in [
            brute_force_search(&t, &Vector::new(vec![1.0, 0.0]), 3).unwrap(),
            knn_search(&build_dense_index(&t).unwrap(), &Vector::new(vec![1.0, 0.0]), 3).unwrap(),
        ] {
            let ids: Vec<_> = res.iter().map(|c| c.id.as_str()).collect();
            assert_eq!(ids, ["a", "m", "z"]);
        }
    }

    #[test]
    fn dim_mismatch_is_an_error() {
        let t = table(&[("a", &[1.0, 0.0])]);
        let idx = build_dense_index(&t).unwrap();
        assert!(matches!(
            knn_search(&idx, &Vector::new(vec![1.0]), 1),
            Err(Error::DimMismatch { .. })
        ));
        assert!(matches!(
            brute_force_search(&t, &Vector::new(vec![1.0, 2.0, 3.0]), 1),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn exact_matches_brute_force_on_random_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = random_table(&mut rng, 200, 16);
        let idx = build_dense_index(&t).unwrap();
        for _ in 0..25 {
            let q = Vector::new((0..16).map(|_| rng.gen_range(-1.0f32..1.0)).collect());
            for k in [1, 5, 16] {
                let a = knn_search(&idx, &q, k).unwrap();
                let b = brute_force_search(&t, &q, k).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn approximate_mode_reports_recall_and_respects_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = random_table(&mut rng, 300, 8);
        // probing every cell makes the search exhaustive, so recall is 1.0
        let cfg = IvfConfig {
            n_cells: Some(4),
            nprobe: 4,
            ..IvfConfig::default()
        };
        let idx = build_approximate_index(&t, &cfg).unwrap();
        assert!(idx.is_approximate());
        assert_eq!(idx.measured_recall(), 1.0);

        // an impossible floor fails the build loudly
        let strict = IvfConfig {
            n_cells: Some(32),
            nprobe: 1,
            recall_floor: 1.01,
            ..IvfConfig::default()
        };
        assert!(matches!(
            build_approximate_index(&t, &strict),
            Err(Error::RecallFloor { .. })
        ));
    }

    #[test]
    fn persistence_round_trips_exact_and_approximate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_table(&mut rng, 120, 8);
        let q = Vector::new((0..8).map(|_| rng.gen_range(-1.0f32..1.0)).collect());

        let exact = build_dense_index(&t).unwrap();
        let mut buf = Vec::new();
        exact.write_to(&mut buf).unwrap();
        let back = DenseIndex::read_from(&mut std::io::Cursor::new(&buf), "mem").unwrap();
        assert!(!back.is_approximate());
        assert_eq!(
            knn_search(&back, &q, 10).unwrap(),
            knn_search(&exact, &q, 10).unwrap()
        );

        let approx = build_approximate_index(
            &t,
            &IvfConfig {
                n_cells: Some(6),
                nprobe: 6,
                ..IvfConfig::default()
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        approx.write_to(&mut buf).unwrap();
        let back = DenseIndex::read_from(&mut std::io::Cursor::new(&buf), "mem").unwrap();
        assert!(back.is_approximate());
        let mut back = back;
        back.set_nprobe(6);
        assert_eq!(
            knn_search(&back, &q, 10).unwrap(),
            knn_search(&approx, &q, 10).unwrap()
        );
    }

    #[test]
    fn concurrent_queries_match_serial_results() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_table(&mut rng, 100, 8);
        let idx = std::sync::Arc::new(build_dense_index(&t).unwrap());
        let queries: Vec<Vector> = (0..8)
            .map(|_| Vector::new((0..8).map(|_| rng.gen_range(-1.0f32..1.0)).collect()))
            .collect();
        let serial: Vec<_> = queries
            .iter()
            .map(|q| knn_search(&idx, q, 5).unwrap())
            .collect();
        let handles: Vec<_> = queries
            .iter()
            .cloned()
            .map(|q| {
                let idx = idx.clone();
                std::thread::spawn(move || knn_search(&idx, &q, 5).unwrap())
            })
            .collect();
        for (h, expected) in handles.into_iter().zip(serial) {
            assert_eq!(h.join().unwrap(), expected);
        }
    }
}
