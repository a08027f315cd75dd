//! Directed weighted influence graphs.
//!
//! An edge `(i, j, w)` means node `j` influences node `i` with weight `w`
//! (row `i`, column `j` of the influence matrix). Self-weights are kept
//! apart as per-node stubbornness.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FermentError, Result};

const KARATE_EDGES: &str = include_str!("../data/karate.txt");

/// Number of restarts allowed for the random regular generator.
const REGULAR_MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    stubbornness: Vec<f64>,
}

impl InfluenceGraph {
    /// Builds and validates a graph. Edges are sorted by `(i, j)`.
    pub fn new(n: usize, mut edges: Vec<(usize, usize, f64)>, stubbornness: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(FermentError::InvalidGraph("graph must have at least one node".into()));
        }
        if stubbornness.len() != n {
            return Err(FermentError::InvalidGraph(format!(
                "stubbornness has {} entries for {} nodes",
                stubbornness.len(),
                n
            )));
        }
        edges.sort_by_key(|a| (a.0, a.1));
        let mut row_sums = stubbornness.clone();
        for (k, &(i, j, w)) in edges.iter().enumerate() {
            if i >= n || j >= n {
                return Err(FermentError::InvalidGraph(format!("edge ({i},{j}) out of range for n={n}")));
            }
            if i == j {
                return Err(FermentError::InvalidGraph(format!(
                    "self edge ({i},{i}); self-weight belongs in stubbornness"
                )));
            }
            if k > 0 && edges[k - 1].0 == i && edges[k - 1].1 == j {
                return Err(FermentError::InvalidGraph(format!("duplicate edge ({i},{j})")));
            }
            if !(0.0..1.0).contains(&w) {
                return Err(FermentError::InvalidGraph(format!("edge ({i},{j}) weight {w} outside [0,1)")));
            }
            row_sums[i] += w;
        }
        for (i, &s) in stubbornness.iter().enumerate() {
            if !(0.0..1.0).contains(&s) {
                return Err(FermentError::InvalidGraph(format!("stubbornness of node {i} is {s}, outside [0,1)")));
            }
        }
        for (i, &rs) in row_sums.iter().enumerate() {
            if rs >= 1.0 {
                return Err(FermentError::InvalidGraph(format!(
                    "row {i} sums to {rs}; influence matrix must be substochastic"
                )));
            }
        }
        Ok(Self { n, edges, stubbornness })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn stubbornness(&self) -> &[f64] {
        &self.stubbornness
    }

    /// Dense influence matrix `A` with stubbornness on the diagonal.
    pub fn influence_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (i, &s) in self.stubbornness.iter().enumerate() {
            a[(i, i)] = s;
        }
        for &(i, j, w) in &self.edges {
            a[(i, j)] = w;
        }
        a
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = self.stubbornness.clone();
        for &(i, _, w) in &self.edges {
            sums[i] += w;
        }
        sums
    }

    /// For each node `k`, the nodes it directly influences (positive weight).
    pub fn out_neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n];
        for &(i, j, w) in &self.edges {
            if w > 0.0 {
                out[j].push(i);
            }
        }
        out
    }

    /// Out-degree of node `j`: number of nodes `i` with a positive `(i, j)` edge.
    pub fn out_degrees(&self) -> Vec<usize> {
        self.out_neighbors().iter().map(Vec::len).collect()
    }

    /// Hop distances from `source` along the influence direction; `None` when unreachable.
    pub fn hop_distances_from(&self, source: usize) -> Vec<Option<usize>> {
        bfs(&self.out_neighbors(), source)
    }

    /// Serializes to the plain edge-file format (stubbornness is not representable there).
    pub fn to_edge_file(&self) -> String {
        let mut s = format!("n {}\n", self.n);
        for &(i, j, w) in &self.edges {
            s.push_str(&format!("{i} {j} {w:?}\n"));
        }
        s
    }
}

fn bfs(out: &[Vec<usize>], source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; out.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap_or(0);
        for &w in &out[v] {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphFamily {
    ErdosRenyi,
    BarabasiAlbert,
    KRegular,
    Karate,
    EdgeFile,
}

/// Self-weight rule. `None` in a config means the equal-split rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StubbornnessPolicy {
    Uniform(f64),
    PerNode(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub family: GraphFamily,
    /// Node count. Ignored for `karate` (always 34) and `edge-file`.
    #[serde(default)]
    pub n: usize,
    /// ER edge probability, BA attachment count, or regular degree.
    #[serde(default)]
    pub param: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_row_sum")]
    pub row_sum: f64,
    #[serde(default)]
    pub stubbornness: Option<StubbornnessPolicy>,
    #[serde(default)]
    pub edge_file: Option<PathBuf>,
}

fn default_row_sum() -> f64 {
    0.9
}

impl GraphSpec {
    pub fn new(family: GraphFamily, n: usize, param: f64, seed: u64) -> Self {
        Self {
            family,
            n,
            param,
            seed,
            row_sum: default_row_sum(),
            stubbornness: None,
            edge_file: None,
        }
    }

    pub fn karate() -> Self {
        Self::new(GraphFamily::Karate, 34, 0.0, 0)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// ER edge probability giving the requested expected average degree.
pub fn er_probability_for_degree(n: usize, average_degree: f64) -> f64 {
    if n < 2 {
        0.0
    } else {
        (average_degree / (n as f64 - 1.0)).clamp(0.0, 1.0)
    }
}

/// Generates an influence graph. Undirected topologies are symmetrized and
/// weighted by the equal-split rule unless a stubbornness policy is given.
pub fn generate(spec: &GraphSpec) -> Result<InfluenceGraph> {
    if !(spec.row_sum > 0.0 && spec.row_sum < 1.0) {
        return Err(FermentError::InvalidParameter(format!("row_sum {} must lie in (0,1)", spec.row_sum)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, adjacency) = match spec.family {
        GraphFamily::ErdosRenyi => {
            let p = spec.param;
            if !(0.0..=1.0).contains(&p) {
                return Err(FermentError::InvalidParameter(format!("ER probability {p} outside [0,1]")));
            }
            require_nodes(spec.n)?;
            (spec.n, erdos_renyi(spec.n, p, &mut rng))
        }
        GraphFamily::BarabasiAlbert => {
            let attach = integer_param(spec.param, "BA attachment count")?;
            require_nodes(spec.n)?;
            if attach == 0 || attach >= spec.n {
                return Err(FermentError::InvalidParameter(format!(
                    "BA attachment count {attach} must be in 1..{}",
                    spec.n
                )));
            }
            (spec.n, barabasi_albert(spec.n, attach, &mut rng))
        }
        GraphFamily::KRegular => {
            let k = integer_param(spec.param, "regular degree")?;
            require_nodes(spec.n)?;
            if k >= spec.n || !(k * spec.n).is_multiple_of(2) {
                return Err(FermentError::InvalidParameter(format!(
                    "k-regular needs k < n and k*n even (k={k}, n={})",
                    spec.n
                )));
            }
            (spec.n, random_regular(spec.n, k, &mut rng)?)
        }
        GraphFamily::Karate => (34, karate_adjacency()),
        GraphFamily::EdgeFile => {
            let path = spec
                .edge_file
                .as_ref()
                .ok_or_else(|| FermentError::InvalidParameter("edge-file family needs `edge_file`".into()))?;
            let g = read_edge_file(path)?;
            let stubbornness = match &spec.stubbornness {
                None => vec![0.0; g.n],
                Some(policy) => policy_values(policy, g.n)?,
            };
            return InfluenceGraph::new(g.n, g.edges, stubbornness);
        }
    };
    weighted_from_undirected(n, &adjacency, spec.row_sum, spec.stubbornness.as_ref())
}

fn require_nodes(n: usize) -> Result<()> {
    if n == 0 {
        Err(FermentError::InvalidParameter("n must be positive".into()))
    } else {
        Ok(())
    }
}

fn integer_param(value: f64, what: &str) -> Result<usize> {
    if value < 0.0 || value.fract() != 0.0 {
        return Err(FermentError::InvalidParameter(format!("{what} must be a nonnegative integer, got {value}")));
    }
    Ok(value as usize)
}

fn policy_values(policy: &StubbornnessPolicy, n: usize) -> Result<Vec<f64>> {
    match policy {
        StubbornnessPolicy::Uniform(s) => Ok(vec![*s; n]),
        StubbornnessPolicy::PerNode(v) if v.len() == n => Ok(v.clone()),
        StubbornnessPolicy::PerNode(v) => Err(FermentError::InvalidParameter(format!(
            "per-node stubbornness has {} entries for {n} nodes",
            v.len()
        ))),
    }
}

/// Applies the equal-split weighting to an undirected neighbor structure.
pub fn weighted_from_undirected(
    n: usize,
    adjacency: &[BTreeSet<usize>],
    row_sum: f64,
    stubbornness: Option<&StubbornnessPolicy>,
) -> Result<InfluenceGraph> {
    let self_weights = match stubbornness {
        None => None,
        Some(policy) => {
            let v = policy_values(policy, n)?;
            if let Some((i, s)) = v.iter().enumerate().find(|(_, &s)| !(s >= 0.0 && s < row_sum)) {
                return Err(FermentError::InvalidParameter(format!(
                    "stubbornness {s} of node {i} must be in [0, row_sum)"
                )));
            }
            Some(v)
        }
    };
    let mut edges = Vec::new();
    let mut stub = vec![0.0; n];
    for i in 0..n {
        let deg = adjacency[i].len();
        let (a_ii, a_ij) = match &self_weights {
            None => {
                let w = row_sum / (deg as f64 + 1.0);
                (w, w)
            }
            Some(v) if deg == 0 => (v[i], 0.0),
            Some(v) => (v[i], (row_sum - v[i]) / deg as f64),
        };
        stub[i] = a_ii;
        edges.extend(adjacency[i].iter().map(|&j| (i, j, a_ij)));
    }
    InfluenceGraph::new(n, edges, stub)
}

fn erdos_renyi(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < p {
                adj[i].insert(j);
                adj[j].insert(i);
            }
        }
    }
    adj
}

/// Preferential attachment seeded by a clique of `attach` nodes.
fn barabasi_albert(n: usize, attach: usize, rng: &mut ChaCha8Rng) -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); n];
    // one entry per edge endpoint, so uniform draws are degree-proportional
    let mut endpoints: Vec<usize> = Vec::new();
    for i in 0..attach {
        for j in (i + 1)..attach {
            adj[i].insert(j);
            adj[j].insert(i);
            endpoints.extend([i, j]);
        }
    }
    for v in attach..n {
        let mut targets = BTreeSet::new();
        while targets.len() < attach {
            let t = if endpoints.is_empty() {
                rng.gen_range(0..v)
            } else {
                endpoints[rng.gen_range(0..endpoints.len())]
            };
            targets.insert(t);
        }
        for t in targets {
            adj[v].insert(t);
            adj[t].insert(v);
            endpoints.extend([v, t]);
        }
    }
    adj
}

/// Random simple k-regular graph by incremental stub pairing with restarts.
fn random_regular(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<BTreeSet<usize>>> {
    if k == 0 {
        return Ok(vec![BTreeSet::new(); n]);
    }
    for _ in 0..REGULAR_MAX_ATTEMPTS {
        if let Some(adj) = try_regular(n, k, rng) {
            return Ok(adj);
        }
    }
    Err(FermentError::GenerationFailed {
        attempts: REGULAR_MAX_ATTEMPTS,
        reason: format!("no simple {k}-regular pairing found for n={n}"),
    })
}

fn try_regular(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Option<Vec<BTreeSet<usize>>> {
    let mut adj = vec![BTreeSet::new(); n];
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, k)).collect();
    while !stubs.is_empty() {
        let mut leftover: BTreeMap<usize, usize> = BTreeMap::new();
        stubs.shuffle(rng);
        for pair in stubs.chunks(2) {
            let (s1, s2) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            if s1 != s2 && !adj[s1].contains(&s2) {
                adj[s1].insert(s2);
                adj[s2].insert(s1);
            } else {
                *leftover.entry(s1).or_default() += 1;
                *leftover.entry(s2).or_default() += 1;
            }
        }
        let nodes: Vec<usize> = leftover.keys().copied().collect();
        let suitable = nodes
            .iter()
            .enumerate()
            .any(|(a, &u)| nodes[a + 1..].iter().any(|&v| !adj[u].contains(&v)));
        if !leftover.is_empty() && !suitable {
            return None;
        }
        stubs = leftover
            .into_iter()
            .flat_map(|(v, c)| std::iter::repeat_n(v, c))
            .collect();
    }
    Some(adj)
}

fn karate_adjacency() -> Vec<BTreeSet<usize>> {
    let mut adj = vec![BTreeSet::new(); 34];
    for line in KARATE_EDGES.lines().filter(|l| !l.trim().is_empty()) {
        let mut it = line.split_whitespace().map(|t| t.parse::<usize>().expect("embedded karate data"));
        let (i, j) = (it.next().unwrap(), it.next().unwrap());
        adj[i].insert(j);
        adj[j].insert(i);
    }
    adj
}

/// Parsed edge file before stubbornness is attached.
#[derive(Debug, Clone)]
pub struct EdgeList {
    pub n: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

pub fn read_edge_file(path: &Path) -> Result<EdgeList> {
    let text = std::fs::read_to_string(path)?;
    parse_edge_file(&text)
}

/// Parses `n <count>` followed by `i j w` lines. Blank lines and `#` comments are skipped.
pub fn parse_edge_file(text: &str) -> Result<EdgeList> {
    let mut n = None;
    let mut edges = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let err = |message: String| FermentError::Parse { line: line_no, message };
        match n {
            None => {
                if tokens.len() != 2 || tokens[0] != "n" {
                    return Err(err(format!("expected `n <count>`, found `{line}`")));
                }
                let count: usize = tokens[1].parse().map_err(|_| err(format!("bad node count `{}`", tokens[1])))?;
                if count == 0 {
                    return Err(err("node count must be positive".into()));
                }
                n = Some(count);
            }
            Some(count) => {
                if tokens.len() != 3 {
                    return Err(err(format!("expected `i j w`, found `{line}`")));
                }
                let i: usize = tokens[0].parse().map_err(|_| err(format!("bad index `{}`", tokens[0])))?;
                let j: usize = tokens[1].parse().map_err(|_| err(format!("bad index `{}`", tokens[1])))?;
                let w: f64 = tokens[2].parse().map_err(|_| err(format!("bad weight `{}`", tokens[2])))?;
                if i >= count || j >= count {
                    return Err(err(format!("edge ({i},{j}) out of range for n={count}")));
                }
                if i == j {
                    return Err(err(format!("self edge ({i},{i}) rejected")));
                }
                if !seen.insert((i, j)) {
                    return Err(err(format!("duplicate edge ({i},{j})")));
                }
                edges.push((i, j, w));
            }
        }
    }
    let n = n.ok_or(FermentError::Parse { line: 1, message: "missing `n <count>` header".into() })?;
    Ok(EdgeList { n, edges })
}

/// The `m` nodes of largest out-degree, ties to the smaller index.
pub fn degree_centers(g: &InfluenceGraph, m: usize) -> Vec<usize> {
    let deg = g.out_degrees();
    let mut order: Vec<usize> = (0..g.n()).collect();
    order.sort_by(|&a, &b| deg[b].cmp(&deg[a]).then(a.cmp(&b)));
    order.truncate(m.min(g.n()));
    order
}

/// Farthest-first k-center traversal over influence hop distances.
///
/// The first center is the max-out-degree node; each later center is the
/// node farthest (unreachable counts as infinitely far) from the chosen set.
pub fn distance_centers(g: &InfluenceGraph, m: usize) -> Vec<usize> {
    let n = g.n();
    let m = m.min(n);
    if m == 0 {
        return Vec::new();
    }
    let out = g.out_neighbors();
    let mut centers = vec![degree_centers(g, 1)[0]];
    // distance from the center set to each node, u64::MAX = unreachable
    let mut dist = vec![u64::MAX; n];
    let relax = |dist: &mut Vec<u64>, c: usize| {
        for (v, d) in bfs(&out, c).into_iter().enumerate() {
            if let Some(d) = d {
                dist[v] = dist[v].min(d as u64);
            }
        }
    };
    relax(&mut dist, centers[0]);
    while centers.len() < m {
        let next = (0..n)
            .filter(|v| !centers.contains(v))
            .max_by(|&a, &b| dist[a].cmp(&dist[b]).then(b.cmp(&a)))
            .expect("fewer centers than nodes");
        centers.push(next);
        relax(&mut dist, next);
    }
    centers
}
