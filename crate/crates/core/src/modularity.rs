//! Newman modularity on undirected simple graphs.
//!
//! [`best_partition`] is the leading-eigenvector method: recursive spectral
//! bisection of the (generalized) modularity matrix, each split tuned by a
//! Kernighan–Lin style vertex-moving pass. [`brute_force_partition`] enumerates
//! every set partition and is only meant as an exactness oracle.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues and split gains at or below this are treated as zero.
const SPLIT_TOLERANCE: f64 = 1e-10;
/// Q differences at or below this count as ties.
const Q_TIE: f64 = 1e-12;

pub const DEFAULT_BRUTE_FORCE_LIMIT: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Edges are unordered; self-loops and repeated pairs are rejected.
    pub fn new(nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a >= nodes || b >= nodes {
                return Err(Error::Graph(format!("edge ({a}, {b}) references a node >= {nodes}")));
            }
            if a == b {
                return Err(Error::Graph(format!("self-loop on node {a}")));
            }
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::Graph(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(Graph { nodes, edges })
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }
}

/// Module label per node, dense from 0 in order of first appearance, plus
/// the Q-score of that division.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    module_of: Vec<usize>,
    q: f64,
}

impl Partition {
    /// Relabels `labels` canonically and scores them on `graph`.
    pub fn from_labels(graph: &Graph, labels: &[usize]) -> Result<Self> {
        let module_of = canonical_labels(labels);
        let q = q_score(graph, &module_of)?;
        Ok(Partition { module_of, q })
    }

    fn singletons(graph: &Graph) -> Self {
        Partition { module_of: (0..graph.node_count()).collect(), q: 0.0 }
    }

    pub fn module_of(&self) -> &[usize] {
        &self.module_of
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn module_count(&self) -> usize {
        self.module_of.iter().max().map_or(0, |&m| m + 1)
    }
}

fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// `Q = sum_c (e_c / m - (d_c / 2m)^2)`; zero for an edgeless graph.
/// Modules are summed in order of first appearance, so any renaming of the
/// labels gives the same value to the last bit.
pub fn q_score(graph: &Graph, module_of: &[usize]) -> Result<f64> {
    if module_of.len() != graph.node_count() {
        return Err(Error::Dimension { expected: graph.node_count(), actual: module_of.len() });
    }
    let m = graph.edge_count();
    if m == 0 {
        return Ok(0.0);
    }
    let module_of = &canonical_labels(module_of);
    let k = module_of.iter().max().map_or(0, |&x| x + 1);
    let mut inside = vec![0usize; k];
    let mut degree = vec![0usize; k];
    for &(a, b) in graph.edges() {
        degree[module_of[a]] += 1;
        degree[module_of[b]] += 1;
        if module_of[a] == module_of[b] {
            inside[module_of[a]] += 1;
        }
    }
    let m = m as f64;
    Ok(inside
        .iter()
        .zip(&degree)
        .map(|(&e, &d)| e as f64 / m - (d as f64 / (2.0 * m)).powi(2))
        .sum())
}

/// Approximate max-Q division. Isolated nodes are singleton modules; an
/// edgeless graph is all singletons.
pub fn best_partition(graph: &Graph) -> Partition {
    let m = graph.edge_count();
    if m == 0 {
        return Partition::singletons(graph);
    }
    let n = graph.node_count();
    let deg = graph.degrees();
    let mut adj = Square::zeros(n);
    for &(a, b) in graph.edges() {
        adj.set(a, b, 1.0);
        adj.set(b, a, 1.0);
    }
    let two_m = 2.0 * m as f64;

    let mut labels = vec![usize::MAX; n];
    let mut next_label = 0;
    let mut pending = components(graph, &deg);
    pending.reverse();
    let mut finished: Vec<Vec<usize>> = Vec::new();

    while let Some(group) = pending.pop() {
        match bisect(&group, &adj, &deg, two_m) {
            Some((plus, minus)) => {
                // popped last-in-first-out, so push `minus` first to split `plus` first
                pending.push(minus);
                pending.push(plus);
            }
            None => finished.push(group),
        }
    }
    for group in finished {
        for node in group {
            labels[node] = next_label;
        }
        next_label += 1;
    }
    for l in labels.iter_mut() {
        if *l == usize::MAX {
            *l = next_label;
            next_label += 1;
        }
    }
    Partition::from_labels(graph, &labels).expect("labels sized from graph")
}

/// Connected components with at least one edge, each sorted, ordered by
/// smallest node. No max-Q module spans two components, so they seed the
/// recursive splitting.
fn components(graph: &Graph, deg: &[usize]) -> Vec<Vec<usize>> {
    let n = graph.node_count();
    let mut neighbors = vec![Vec::new(); n];
    for &(a, b) in graph.edges() {
        neighbors[a].push(b);
        neighbors[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] || deg[start] == 0 {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &w in &neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    stack.push(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Dense symmetric matrix, row-major.
#[derive(Clone)]
struct Square {
    n: usize,
    data: Vec<f64>,
}

impl Square {
    fn zeros(n: usize) -> Self {
        Square { n, data: vec![0.0; n * n] }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `s^T A s`.
    fn quadratic_form(&self, s: &[f64]) -> f64 {
        (0..self.n).map(|i| s[i] * self.row(i).iter().zip(s).map(|(a, b)| a * b).sum::<f64>()).sum()
    }
}

/// Largest algebraic eigenvalue of `b` and a unit eigenvector. The first
/// of several equal maxima wins.
fn leading_eigenpair(b: &Square) -> (f64, Vec<f64>) {
    // symmetric, so the row-major buffer reads the same column-major
    let eig = SymmetricEigen::new(DMatrix::from_vec(b.n, b.n, b.data.clone()));
    let (lead, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |best, cur| if *cur.1 > *best.1 { cur } else { best });
    (lambda, eig.eigenvectors.column(lead).iter().copied().collect())
}

/// Generalized modularity matrix of `group`:
/// `B_ij - delta_ij * sum_{k in group} B_ik`.
fn group_matrix(group: &[usize], adj: &Square, deg: &[usize], two_m: f64) -> Square {
    let g = group.len();
    let mut b = Square::zeros(g);
    for (x, &i) in group.iter().enumerate() {
        for (y, &j) in group.iter().enumerate() {
            b.set(x, y, adj.at(i, j) - (deg[i] * deg[j]) as f64 / two_m);
        }
    }
    for x in 0..g {
        let row_sum: f64 = b.row(x).iter().sum();
        b.data[x * g + x] -= row_sum;
    }
    b
}

fn bisect(group: &[usize], adj: &Square, deg: &[usize], two_m: f64) -> Option<(Vec<usize>, Vec<usize>)> {
    if group.len() < 2 {
        return None;
    }
    let b = group_matrix(group, adj, deg, two_m);
    let (lambda, mut v) = leading_eigenpair(&b);
    if lambda <= SPLIT_TOLERANCE {
        return None;
    }
    // fix the arbitrary eigenvector sign: first clearly nonzero entry positive
    if let Some(first) = v.iter().find(|x| x.abs() > SPLIT_TOLERANCE) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let mut s: Vec<f64> = v.iter().map(|&x| if x >= -SPLIT_TOLERANCE { 1.0 } else { -1.0 }).collect();
    refine_split(&b, &mut s);

    let gain = b.quadratic_form(&s) / (2.0 * two_m);
    let plus: Vec<usize> = group.iter().zip(&s).filter(|(_, &x)| x > 0.0).map(|(&i, _)| i).collect();
    let minus: Vec<usize> = group.iter().zip(&s).filter(|(_, &x)| x < 0.0).map(|(&i, _)| i).collect();
    if gain <= SPLIT_TOLERANCE || plus.is_empty() || minus.is_empty() {
        return None;
    }
    Some((plus, minus))
}

/// Vertex-moving passes: flip every vertex once in greedy order of gain in
/// `s^T B s`, keep the best intermediate state, repeat while it improves.
fn refine_split(b: &Square, s: &mut [f64]) {
    let n = s.len();
    let mut r = vec![0.0; n];
    let mut moved = vec![false; n];
    let mut order = Vec::with_capacity(n);
    loop {
        for (i, ri) in r.iter_mut().enumerate() {
            *ri = b.row(i).iter().zip(s.iter()).map(|(a, c)| a * c).sum();
        }
        moved.iter_mut().for_each(|m| *m = false);
        order.clear();
        let mut current = 0.0;
        let mut best = 0.0;
        let mut best_step = 0;
        for step in 1..=n {
            let mut pick = None;
            let mut pick_gain = f64::NEG_INFINITY;
            for i in 0..n {
                if moved[i] {
                    continue;
                }
                let gain = -4.0 * s[i] * (r[i] - b.at(i, i) * s[i]);
                if gain > pick_gain + Q_TIE {
                    pick = Some(i);
                    pick_gain = gain;
                }
            }
            let i = pick.expect("an unmoved vertex remains");
            let old = s[i];
            s[i] = -old;
            moved[i] = true;
            order.push(i);
            // symmetric: column i equals row i
            for (rj, bij) in r.iter_mut().zip(b.row(i)) {
                *rj -= 2.0 * bij * old;
            }
            current += pick_gain;
            if current > best + Q_TIE {
                best = current;
                best_step = step;
            }
        }
        for &i in &order[best_step..] {
            s[i] = -s[i];
        }
        if best_step == 0 {
            break;
        }
    }
}

/// Exact max-Q partition by enumerating restricted growth strings. Ties go
/// to fewer modules, then to the lexicographically smallest labeling. An
/// edgeless graph gives all singletons.
pub fn brute_force_partition(graph: &Graph, max_nodes: usize) -> Result<Partition> {
    let n = graph.node_count();
    if n > max_nodes {
        return Err(Error::TooLarge { nodes: n, limit: max_nodes });
    }
    if graph.edge_count() == 0 || n == 0 {
        return Ok(Partition::singletons(graph));
    }
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for_each_set_partition(n, |labels| {
        let q = q_score(graph, labels).expect("labels sized from graph");
        let k = labels.iter().max().unwrap() + 1;
        let better = match &best {
            None => true,
            Some((bq, bk, _)) => q > bq + Q_TIE || ((q - bq).abs() <= Q_TIE && k < *bk),
        };
        if better {
            best = Some((q, k, labels.to_vec()));
        }
    });
    let (_, _, labels) = best.expect("at least one partition");
    Partition::from_labels(graph, &labels)
}

/// Calls `f` with every set partition of `0..n` as a restricted growth
/// string, in lexicographic order.
pub fn for_each_set_partition(n: usize, mut f: impl FnMut(&[usize])) {
    if n == 0 {
        f(&[]);
        return;
    }
    let mut a = vec![0usize; n];
    let mut max_prefix = vec![0usize; n];
    loop {
        f(&a);
        let mut i = n - 1;
        loop {
            if i == 0 {
                return;
            }
            if a[i] <= max_prefix[i - 1] {
                a[i] += 1;
                break;
            }
            i -= 1;
        }
        max_prefix[i] = max_prefix[i - 1].max(a[i]);
        for j in i + 1..n {
            a[j] = 0;
            max_prefix[j] = max_prefix[i];
        }
    }
}
