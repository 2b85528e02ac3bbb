use std::io::{BufRead, Write};

use ndarray::{Array2, ArrayView2, ArrayViewMut2, Zip};

use super::{Graphop, GraphopMetadata, NetworkSpace, SpaceKind};
use crate::error::{invalid, Error, Result};

/// Graphs up to this many nodes are stored as dense bitsets.
pub const DENSE_LIMIT: usize = 4096;

/// Undirected simple graph on `0..nodes`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Adjacency {
    Complete { nodes: usize },
    Dense { nodes: usize, words: usize, bits: Vec<u64> },
    Sparse { offsets: Vec<usize>, neighbors: Vec<u32> },
}

impl Adjacency {
    pub fn complete(nodes: usize) -> Self {
        Adjacency::Complete { nodes }
    }

    pub fn empty(nodes: usize) -> Self {
        Self::from_edges(nodes, &[]).expect("no edges to validate")
    }

    /// Builds from undirected edges; each pair may appear once in either
    /// orientation. Dense storage is chosen up to [`DENSE_LIMIT`] nodes.
    pub fn from_edges(nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        for &(i, j) in edges {
            if i >= nodes || j >= nodes {
                return Err(invalid("edges", format!("edge ({i}, {j}) outside 0..{nodes}")));
            }
            if i == j {
                return Err(invalid("edges", format!("self-loop at node {i}")));
            }
        }
        if nodes <= DENSE_LIMIT {
            let words = nodes.div_ceil(64);
            let mut bits = vec![0u64; nodes * words];
            for &(i, j) in edges {
                bits[i * words + j / 64] |= 1 << (j % 64);
                bits[j * words + i / 64] |= 1 << (i % 64);
            }
            Ok(Adjacency::Dense { nodes, words, bits })
        } else {
            let mut lists: Vec<Vec<u32>> = vec![Vec::new(); nodes];
            for &(i, j) in edges {
                lists[i].push(j as u32);
                lists[j].push(i as u32);
            }
            let mut offsets = Vec::with_capacity(nodes + 1);
            let mut neighbors = Vec::new();
            offsets.push(0);
            for mut list in lists {
                list.sort_unstable();
                list.dedup();
                neighbors.extend(list);
                offsets.push(neighbors.len());
            }
            Ok(Adjacency::Sparse { offsets, neighbors })
        }
    }

    /// Builds from a full 0/1 matrix, rejecting asymmetry, self-loops and
    /// entries other than 0 or 1.
    pub fn from_matrix(matrix: ArrayView2<'_, u8>) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(Error::Dimension {
                context: "adjacency matrix (square)",
                expected: n,
                found: matrix.ncols(),
            });
        }
        let mut edges = Vec::new();
        for ((i, j), &v) in matrix.indexed_iter() {
            if v > 1 {
                return Err(invalid("adjacency", format!("entry ({i}, {j}) = {v} is not 0/1")));
            }
            if v != matrix[[j, i]] {
                return Err(Error::Asymmetric {
                    what: "adjacency matrix",
                    defect: 1.0,
                });
            }
            if i == j && v != 0 {
                return Err(invalid("adjacency", format!("nonzero diagonal at node {i}")));
            }
            if i < j && v == 1 {
                edges.push((i, j));
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn nodes(&self) -> usize {
        match self {
            Adjacency::Complete { nodes } | Adjacency::Dense { nodes, .. } => *nodes,
            Adjacency::Sparse { offsets, .. } => offsets.len() - 1,
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        match self {
            Adjacency::Complete { .. } => i != j,
            Adjacency::Dense { words, bits, .. } => bits[i * words + j / 64] >> (j % 64) & 1 == 1,
            Adjacency::Sparse { offsets, neighbors } => {
                neighbors[offsets[i]..offsets[i + 1]].binary_search(&(j as u32)).is_ok()
            }
        }
    }

    pub fn degree(&self, i: usize) -> usize {
        match self {
            Adjacency::Complete { nodes } => nodes - 1,
            Adjacency::Dense { words, bits, .. } => bits[i * words..(i + 1) * words]
                .iter()
                .map(|w| w.count_ones() as usize)
                .sum(),
            Adjacency::Sparse { offsets, .. } => offsets[i + 1] - offsets[i],
        }
    }

    pub fn edge_count(&self) -> usize {
        (0..self.nodes()).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    /// Calls `f(j)` for every neighbor `j` of `i` in increasing order.
    pub fn for_each_neighbor(&self, i: usize, mut f: impl FnMut(usize)) {
        match self {
            Adjacency::Complete { nodes } => (0..*nodes).filter(|&j| j != i).for_each(f),
            Adjacency::Dense { words, bits, .. } => {
                for (w, &word) in bits[i * words..(i + 1) * words].iter().enumerate() {
                    let mut word = word;
                    while word != 0 {
                        let b = word.trailing_zeros() as usize;
                        f(w * 64 + b);
                        word &= word - 1;
                    }
                }
            }
            Adjacency::Sparse { offsets, neighbors } => {
                neighbors[offsets[i]..offsets[i + 1]].iter().for_each(|&j| f(j as usize))
            }
        }
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.nodes() {
            self.for_each_neighbor(i, |j| {
                if i < j {
                    out.push((i, j))
                }
            });
        }
        out
    }

    /// `out = scale * Adj · input` along axis 0.
    pub(crate) fn matmul_rows(&self, scale: f64, input: ArrayView2<'_, f64>, mut output: ArrayViewMut2<'_, f64>) {
        match self {
            Adjacency::Complete { .. } => {
                let total = input.sum_axis(ndarray::Axis(0));
                Zip::from(output.rows_mut()).and(input.rows()).for_each(|mut out, row| {
                    Zip::from(&mut out)
                        .and(&row)
                        .and(&total)
                        .for_each(|o, &r, &t| *o = scale * (t - r));
                });
            }
            _ => {
                for (i, mut out) in output.rows_mut().into_iter().enumerate() {
                    out.fill(0.0);
                    self.for_each_neighbor(i, |j| out.scaled_add(1.0, &input.row(j)));
                    out *= scale;
                }
            }
        }
    }
}

/// `(A f)_i = (1/(N r_N)) Σ_j A^{ij} f_j` on `N` nodes of weight `1/N`.
#[derive(Clone, Debug)]
pub struct EmpiricalGraphop {
    space: NetworkSpace,
    adjacency: Adjacency,
    r_n: f64,
}

pub fn empirical_graphop(adjacency: Adjacency, r_n: f64) -> Result<EmpiricalGraphop> {
    if !(r_n > 0.0 && r_n <= 1.0) {
        return Err(invalid("r_N", format!("must lie in (0, 1], got {r_n}")));
    }
    let space = NetworkSpace::uniform(SpaceKind::FiniteGraph, adjacency.nodes())?;
    Ok(EmpiricalGraphop {
        space,
        adjacency,
        r_n,
    })
}

impl EmpiricalGraphop {
    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn r_n(&self) -> f64 {
        self.r_n
    }

    fn scale(&self) -> f64 {
        1.0 / (self.adjacency.nodes() as f64 * self.r_n)
    }
}

impl Graphop for EmpiricalGraphop {
    fn space(&self) -> &NetworkSpace {
        &self.space
    }

    fn apply_rows(&self, input: ArrayView2<'_, f64>, output: ArrayViewMut2<'_, f64>) {
        self.adjacency.matmul_rows(self.scale(), input, output);
    }

    fn label(&self) -> String {
        format!(
            "empirical({} nodes, {} edges, r_N = {})",
            self.adjacency.nodes(),
            self.adjacency.edge_count(),
            self.r_n
        )
    }

    fn metadata(&self) -> GraphopMetadata {
        let n = self.adjacency.nodes();
        let degrees: Vec<usize> = (0..n).map(|i| self.adjacency.degree(i)).collect();
        let regular = degrees.windows(2).all(|w| w[0] == w[1]);
        GraphopMetadata {
            regularity: regular.then(|| degrees.first().copied().unwrap_or(0) as f64 * self.scale()),
            norm_bound: degrees.iter().max().map(|&d| d as f64 * self.scale()),
        }
    }

    fn to_dense(&self) -> Array2<f64> {
        let n = self.adjacency.nodes();
        let scale = self.scale();
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            self.adjacency.for_each_neighbor(i, |j| out[[i, j]] = scale);
        }
        out
    }
}

/// Reads whitespace-separated `i j` lines (0-based, undirected). Blank lines
/// and lines starting with `#` are skipped; repeated edges are merged. The
/// node count defaults to one past the largest index.
pub fn read_edge_list<R: BufRead>(reader: R, nodes: Option<usize>) -> Result<Adjacency> {
    let mut edges = Vec::new();
    let mut max_index = None;
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_error = |message: String| Error::Parse {
            line: index + 1,
            message,
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_error(format!("expected two indices, found {}", fields.len())));
        }
        let mut pair = [0usize; 2];
        for (slot, field) in pair.iter_mut().zip(&fields) {
            *slot = field
                .parse()
                .map_err(|_| parse_error(format!("`{field}` is not a node index")))?;
        }
        if pair[0] == pair[1] {
            return Err(parse_error(format!("self-loop at node {}", pair[0])));
        }
        max_index = max_index.max(Some(pair[0].max(pair[1])));
        edges.push((pair[0].min(pair[1]), pair[0].max(pair[1])));
    }
    edges.sort_unstable();
    edges.dedup();
    let inferred = max_index.map_or(0, |m| m + 1);
    let nodes = match nodes {
        Some(n) if n < inferred => {
            return Err(invalid("nodes", format!("{n} nodes given but edge list uses index {}", inferred - 1)))
        }
        Some(n) => n,
        None => inferred,
    };
    Adjacency::from_edges(nodes, &edges)
}

pub fn write_edge_list<W: Write>(mut out: W, adjacency: &Adjacency) -> Result<()> {
    for (i, j) in adjacency.edges() {
        writeln!(out, "{i} {j}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::{check_c_regular, norm_infty_to_1, numerical_radius, self_adjoint_defect};
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn complete_graph_examples() {
        let op = empirical_graphop(Adjacency::complete(10), 1.0).unwrap();
        for v in op.apply(&[1.0; 10]) {
            assert_abs_diff_eq!(v, 0.9, epsilon = 1e-15);
        }
        let f: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let af = op.apply(&f);
        for (i, v) in af.iter().enumerate() {
            assert_abs_diff_eq!(*v, (45.0 - i as f64) / 10.0, epsilon = 1e-13);
        }
        assert_abs_diff_eq!(norm_infty_to_1(&op).unwrap(), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(check_c_regular(&op, 1e-12).unwrap(), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn storage_variants_agree() {
        let edges = [(0, 1), (1, 2), (2, 5), (0, 5), (3, 4)];
        let dense = Adjacency::from_edges(6, &edges).unwrap();
        let mut csr_lists: Vec<Vec<u32>> = vec![Vec::new(); 6];
        for &(i, j) in &edges {
            csr_lists[i].push(j as u32);
            csr_lists[j].push(i as u32);
        }
        let mut offsets = vec![0];
        let mut neighbors = Vec::new();
        for mut l in csr_lists {
            l.sort_unstable();
            neighbors.extend(l);
            offsets.push(neighbors.len());
        }
        let sparse = Adjacency::Sparse { offsets, neighbors };
        let a = empirical_graphop(dense, 0.5).unwrap();
        let b = empirical_graphop(sparse, 0.5).unwrap();
        assert_eq!(a.to_dense(), b.to_dense());
        let f = [0.3, -1.0, 2.0, 0.0, 5.0, 1.5];
        assert_eq!(a.apply(&f), b.apply(&f));
        assert_eq!(a.adjacency().edges(), b.adjacency().edges());
        let complete = empirical_graphop(Adjacency::complete(6), 1.0).unwrap();
        let full: Vec<(usize, usize)> = (0..6).flat_map(|i| (i + 1..6).map(move |j| (i, j))).collect();
        let explicit = empirical_graphop(Adjacency::from_edges(6, &full).unwrap(), 1.0).unwrap();
        let c = complete.apply(&f);
        for (x, y) in c.iter().zip(explicit.apply(&f)) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn empty_graph_is_zero() {
        let op = empirical_graphop(Adjacency::empty(7), 1.0).unwrap();
        assert!(op.apply(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]).iter().all(|v| *v == 0.0));
        assert_eq!(numerical_radius(&op, 1e-12).unwrap().value, 0.0);
    }

    #[test]
    fn matrix_validation() {
        let ok = ndarray::array![[0u8, 1, 0], [1, 0, 1], [0, 1, 0]];
        let adj = Adjacency::from_matrix(ok.view()).unwrap();
        assert_eq!(adj.edges(), vec![(0, 1), (1, 2)]);
        let skew = ndarray::array![[0u8, 1], [0, 0]];
        assert!(matches!(Adjacency::from_matrix(skew.view()), Err(Error::Asymmetric { .. })));
        let looped = ndarray::array![[1u8, 0], [0, 0]];
        assert!(Adjacency::from_matrix(looped.view()).is_err());
        assert!(Adjacency::from_edges(3, &[(0, 3)]).is_err());
        assert!(empirical_graphop(Adjacency::complete(3), 0.0).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let text = "# comment\n0 3\n3 0\n\n1  2\n";
        let adj = read_edge_list(text.as_bytes(), None).unwrap();
        assert_eq!(adj.nodes(), 4);
        assert_eq!(adj.edges(), vec![(0, 3), (1, 2)]);
        let mut buf = Vec::new();
        write_edge_list(&mut buf, &adj).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 3\n1 2\n");
        let padded = read_edge_list(text.as_bytes(), Some(9)).unwrap();
        assert_eq!(padded.nodes(), 9);
        let op = empirical_graphop(padded, 1.0).unwrap();
        assert!(self_adjoint_defect(&op, 5) < 1e-14);
    }

    #[test]
    fn edge_list_errors_carry_line_numbers() {
        match read_edge_list("0 1\n2 x\n".as_bytes(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(read_edge_list("4 4\n".as_bytes(), None), Err(Error::Parse { line: 1, .. })));
        assert!(read_edge_list("0 1 2\n".as_bytes(), None).is_err());
        assert!(read_edge_list("0 5\n".as_bytes(), Some(3)).is_err());
    }
}
