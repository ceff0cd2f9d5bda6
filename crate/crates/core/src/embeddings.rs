//! Word vectors, question/answer embeddings and exact nearest-neighbor search.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::io::BufRead;

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("embedding dimension must be positive")]
    ZeroDimension,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token → vector table with a fixed dimension.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    dim: usize,
    rows: HashMap<String, usize>,
    data: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDimension);
        }
        Ok(EmbeddingTable { dim, rows: HashMap::new(), data: Vec::new() })
    }

    /// Inserts or replaces a vector. Panics if the length is not `dim`.
    pub fn insert(&mut self, token: impl Into<String>, vector: &[f32]) {
        assert_eq!(vector.len(), self.dim, "vector length must equal table dimension");
        let token = token.into();
        match self.rows.get(&token) {
            Some(&row) => self.data[row * self.dim..(row + 1) * self.dim].copy_from_slice(vector),
            None => {
                self.rows.insert(token, self.data.len() / self.dim);
                self.data.extend_from_slice(vector);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.rows.get(token).map(|&row| &self.data[row * self.dim..(row + 1) * self.dim])
    }
}

/// Reads the plain-text vector format: `token f1 f2 ... fd` per line.
/// Later duplicates of a token replace earlier ones.
pub fn load_embedding_table<R: BufRead>(reader: R, expected_dim: usize) -> Result<EmbeddingTable, EmbeddingError> {
    let mut table = EmbeddingTable::new(expected_dim)?;
    let mut buf = Vec::with_capacity(expected_dim);
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().expect("non-blank line has a field");
        buf.clear();
        for field in fields {
            let value: f32 = field.parse().map_err(|_| EmbeddingError::MalformedLine {
                line: line_no,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !value.is_finite() {
                return Err(EmbeddingError::MalformedLine {
                    line: line_no,
                    message: format!("non-finite component {field:?}"),
                });
            }
            buf.push(value);
        }
        if buf.len() != expected_dim {
            return Err(EmbeddingError::DimensionMismatch { line: line_no, expected: expected_dim, found: buf.len() });
        }
        table.insert(token, &buf);
    }
    Ok(table)
}

/// Question representation: the vectors of the first three tokens followed
/// by the mean vector of the remaining tokens (length `4 * dim`).
#[derive(Clone, Debug, PartialEq)]
pub struct QuestionEmbedding(pub Vec<f32>);

impl QuestionEmbedding {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

fn accumulate_mean<'a>(tokens: impl Iterator<Item = &'a String>, table: &EmbeddingTable, out: &mut [f32]) {
    let mut sum = vec![0f64; table.dim()];
    let mut n = 0usize;
    for token in tokens {
        n += 1;
        if let Some(v) = table.get(token) {
            for (s, &x) in sum.iter_mut().zip(v) {
                *s += x as f64;
            }
        }
    }
    if n > 0 {
        for (o, s) in out.iter_mut().zip(sum) {
            *o = (s / n as f64) as f32;
        }
    }
}

/// Out-of-table tokens and missing leading slots contribute zero vectors.
pub fn embed_question(tokens: &[String], table: &EmbeddingTable) -> QuestionEmbedding {
    let d = table.dim();
    let mut vec = vec![0f32; 4 * d];
    for (slot, token) in tokens.iter().take(3).enumerate() {
        if let Some(v) = table.get(token) {
            vec[slot * d..(slot + 1) * d].copy_from_slice(v);
        }
    }
    accumulate_mean(tokens.iter().skip(3), table, &mut vec[3 * d..]);
    QuestionEmbedding(vec)
}

/// Mean token vector of an answer; the zero vector when empty.
pub fn embed_answer_mean(tokens: &[String], table: &EmbeddingTable) -> Vec<f32> {
    let mut out = vec![0f32; table.dim()];
    accumulate_mean(tokens.iter(), table, &mut out);
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IndexError {
    #[error("duplicate id {0} in neighbor index")]
    DuplicateId(u64),
    #[error("row for id {id} has width {found}, expected {expected}")]
    WidthMismatch { id: u64, expected: usize, found: usize },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KnnError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {k} exceeds index size {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("query width {found} does not match index width {expected}")]
    WidthMismatch { expected: usize, found: usize },
}

/// Dense row store searched by exact Euclidean distance.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    width: usize,
    ids: Vec<u64>,
    data: Vec<f32>,
}

impl NeighborIndex {
    pub fn build<I, V>(width: usize, rows: I) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = (u64, V)>,
        V: AsRef<[f32]>,
    {
        let mut seen = HashSet::new();
        let mut ids = Vec::new();
        let mut data = Vec::new();
        for (id, row) in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(IndexError::WidthMismatch { id, expected: width, found: row.len() });
            }
            if !seen.insert(id) {
                return Err(IndexError::DuplicateId(id));
            }
            ids.push(id);
            data.extend_from_slice(row);
        }
        Ok(NeighborIndex { width, ids, data })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: u64,
    pub distance: f64,
}

/// Squared Euclidean distance accumulated in f64, left to right.
pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    id: u64,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2.total_cmp(&other.dist2).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const BLOCK_ROWS: usize = 8192;

fn top_k_in_block(
    query: &[f32],
    index: &NeighborIndex,
    rows: std::ops::Range<usize>,
    k: usize,
) -> BinaryHeap<Candidate> {
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for i in rows {
        let c = Candidate { dist2: squared_distance(query, index.row(i)), id: index.ids[i] };
        if heap.len() < k {
            heap.push(c);
        } else if c < *heap.peek().expect("heap is full") {
            heap.pop();
            heap.push(c);
        }
    }
    heap
}

/// Exact k nearest rows, ascending by distance with ties broken by id.
pub fn knn(query: &[f32], index: &NeighborIndex, k: usize) -> Result<Vec<Neighbor>, KnnError> {
    if k == 0 {
        return Err(KnnError::ZeroK);
    }
    if k > index.len() {
        return Err(KnnError::KTooLarge { k, size: index.len() });
    }
    if query.len() != index.width {
        return Err(KnnError::WidthMismatch { expected: index.width, found: query.len() });
    }
    let n = index.len();
    let mut best: Vec<Candidate> = if n <= BLOCK_ROWS {
        top_k_in_block(query, index, 0..n, k).into_vec()
    } else {
        (0..n.div_ceil(BLOCK_ROWS))
            .into_par_iter()
            .map(|b| top_k_in_block(query, index, b * BLOCK_ROWS..((b + 1) * BLOCK_ROWS).min(n), k))
            .reduce(BinaryHeap::new, |mut a, b| {
                for c in b {
                    if a.len() < k {
                        a.push(c);
                    } else if c < *a.peek().expect("heap is full") {
                        a.pop();
                        a.push(c);
                    }
                }
                a
            })
            .into_vec()
    };
    best.sort_unstable();
    Ok(best.into_iter().map(|c| Neighbor { id: c.id, distance: c.dist2.sqrt() }).collect())
}

/// Runs [`knn`] for many queries in parallel; output order follows input order.
pub fn knn_batch<Q: AsRef<[f32]> + Sync>(
    queries: &[Q],
    index: &NeighborIndex,
    k: usize,
) -> Result<Vec<Vec<Neighbor>>, KnnError> {
    queries.par_iter().map(|q| knn(q.as_ref(), index, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_table() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2).unwrap();
        t.insert("a", &[1.0, 0.0]);
        t.insert("b", &[0.0, 1.0]);
        t.insert("c", &[2.0, 2.0]);
        t.insert("d", &[4.0, -2.0]);
        t.insert("e", &[-1.0, 6.0]);
        t
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn load_three_lines() {
        let input = "cat 0.5 1\ndog -1 2.25\nfish 3 4\n";
        let t = load_embedding_table(input.as_bytes(), 2).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.dim(), 2);
        assert_eq!(t.get("dog"), Some(&[-1.0f32, 2.25][..]));
    }

    #[test]
    fn load_dimension_mismatch_reports_line() {
        let input = "cat 0.5 1\ndog -1 2.25 7\n";
        match load_embedding_table(input.as_bytes(), 2).unwrap_err() {
            EmbeddingError::DimensionMismatch { line, expected, found } => {
                assert_eq!((line, expected, found), (2, 2, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_malformed_and_duplicates() {
        assert!(matches!(
            load_embedding_table("x 1 zz\n".as_bytes(), 2),
            Err(EmbeddingError::MalformedLine { line: 1, .. })
        ));
        assert!(matches!(
            load_embedding_table("x 1 inf\n".as_bytes(), 2),
            Err(EmbeddingError::MalformedLine { line: 1, .. })
        ));
        let t = load_embedding_table("x 1 1\nx 2 3\n".as_bytes(), 2).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get("x"), Some(&[2.0f32, 3.0][..]));
    }

    #[test]
    fn three_token_question_has_zero_tail() {
        let t = toy_table();
        let e = embed_question(&s(&["a", "b", "c"]), &t);
        assert_eq!(e.0, vec![1.0, 0.0, 0.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_question_is_zero() {
        let e = embed_question(&[], &toy_table());
        assert_eq!(e.0, vec![0.0; 8]);
    }

    #[test]
    fn five_token_question_hand_computed() {
        // [a; b; c; (d + e) / 2] = [1,0; 0,1; 2,2; 1.5,2]
        let e = embed_question(&s(&["a", "b", "c", "d", "e"]), &toy_table());
        assert_eq!(e.0, vec![1.0, 0.0, 0.0, 1.0, 2.0, 2.0, 1.5, 2.0]);
    }

    #[test]
    fn oov_tokens_are_zero_but_counted_in_mean() {
        let e = embed_question(&s(&["zz", "a", "zz", "d", "zz"]), &toy_table());
        assert_eq!(e.0, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0, -1.0]);
    }

    #[test]
    fn answer_means() {
        let t = toy_table();
        assert_eq!(embed_answer_mean(&s(&["c"]), &t), vec![2.0, 2.0]);
        assert_eq!(embed_answer_mean(&[], &t), vec![0.0, 0.0]);
        // (a + b + c + d) / 4 = (7/4, 1/4)
        assert_eq!(embed_answer_mean(&s(&["a", "b", "c", "d"]), &t), vec![1.75, 0.25]);
    }

    fn grid_index() -> NeighborIndex {
        NeighborIndex::build(2, (0..6u64).map(|i| (10 - i, vec![i as f32, 0.0]))).unwrap()
    }

    #[test]
    fn knn_self_first() {
        let idx = grid_index();
        let res = knn(&[3.0, 0.0], &idx, 1).unwrap();
        assert_eq!(res, vec![Neighbor { id: 7, distance: 0.0 }]);
    }

    #[test]
    fn knn_full_and_ties() {
        let idx = grid_index();
        let res = knn(&[2.5, 0.0], &idx, idx.len()).unwrap();
        let ids: Vec<u64> = res.iter().map(|n| n.id).collect();
        // x=2 (id 8) and x=3 (id 7) tie; lower id first.
        assert_eq!(ids, vec![7, 8, 6, 9, 5, 10]);
        assert!(res.windows(2).all(|w| w[0].distance <= w[1].distance));
    }

    #[test]
    fn knn_errors() {
        let idx = grid_index();
        assert_eq!(knn(&[0.0, 0.0], &idx, 7), Err(KnnError::KTooLarge { k: 7, size: 6 }));
        assert_eq!(knn(&[0.0, 0.0], &idx, 0), Err(KnnError::ZeroK));
        assert!(matches!(knn(&[0.0], &idx, 1), Err(KnnError::WidthMismatch { .. })));
        assert_eq!(
            NeighborIndex::build(1, vec![(1u64, vec![0.0f32]), (1, vec![1.0])]).unwrap_err(),
            IndexError::DuplicateId(1)
        );
    }

    #[test]
    fn blocked_path_matches_single_block() {
        let n = BLOCK_ROWS * 2 + 17;
        let idx = NeighborIndex::build(1, (0..n as u64).map(|i| (i, vec![((i * 7919) % 1000) as f32]))).unwrap();
        let res = knn(&[500.0], &idx, 50).unwrap();
        let mut all: Vec<(f64, u64)> = (0..n).map(|i| (squared_distance(&[500.0], idx.row(i)), idx.ids()[i])).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let expect: Vec<u64> = all[..50].iter().map(|x| x.1).collect();
        assert_eq!(res.iter().map(|n| n.id).collect::<Vec<_>>(), expect);
    }
}
