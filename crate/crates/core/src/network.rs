//! Vehicle placements and communication graphs.

use std::collections::{BTreeSet, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::roadmap::RoadMap;
use crate::{seed, Error, NodeId, Result, Vec2};

/// Communication radius used for the fifty-vehicle networks, meters.
pub const DEFAULT_RADIUS: f64 = 3000.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehiclePose {
    pub position: Vec2,
    /// Heading of the occupied road, radians.
    pub road_angle: f64,
}

impl VehiclePose {
    pub fn new(x: f64, y: f64, road_angle: f64) -> Self {
        Self {
            position: Vec2::new(x, y),
            road_angle,
        }
    }
}

/// Undirected communication graph over vehicle poses. Self-communication is
/// implicit and never stored as an edge.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleNetwork {
    poses: Vec<VehiclePose>,
    adjacency: Vec<BTreeSet<NodeId>>,
}

/// Result of [`VehicleNetwork::trim_by_degree`].
#[derive(Clone, Debug)]
pub struct Trimmed {
    pub network: VehicleNetwork,
    /// `original_ids[k]` is the id in the input network of new node `k`.
    pub original_ids: Vec<NodeId>,
}

impl VehicleNetwork {
    pub fn new(poses: Vec<VehiclePose>, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let n = poses.len();
        let mut adjacency = vec![BTreeSet::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidInput(format!("self-loop at node {i}")));
            }
            adjacency[i].insert(j);
            adjacency[j].insert(i);
        }
        Ok(Self { poses, adjacency })
    }

    /// Edge `(i, j)` whenever the two positions are within `radius` meters.
    pub fn radius_graph(poses: Vec<VehiclePose>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
        }
        let n = poses.len();
        let mut adjacency = vec![BTreeSet::new(); n];
        for i in 0..n {
            for j in (i + 1)..n {
                if (poses[i].position - poses[j].position).norm() <= radius {
                    adjacency[i].insert(j);
                    adjacency[j].insert(i);
                }
            }
        }
        Ok(Self { poses, adjacency })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> &[VehiclePose] {
        &self.poses
    }

    pub fn neighbors(&self, i: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency[i].iter().copied()
    }

    pub fn has_edge(&self, i: NodeId, j: NodeId) -> bool {
        self.adjacency[i].contains(&j)
    }

    /// Number of neighbors, excluding self.
    pub fn degree(&self, i: NodeId) -> usize {
        self.adjacency[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.degree(i)).collect()
    }

    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, adj)| adj.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    /// `hist[d]` = number of nodes with degree `d`.
    pub fn degree_histogram(&self) -> Vec<usize> {
        let degrees = self.degrees();
        let max = degrees.iter().copied().max().unwrap_or(0);
        let mut hist = vec![0; max + 1];
        for d in degrees {
            hist[d] += 1;
        }
        hist
    }

    /// Removes, in a single pass over the input degrees, every node whose
    /// degree exceeds `max_degree`. Survivors are renumbered densely in their
    /// original order.
    pub fn trim_by_degree(&self, max_degree: usize) -> Trimmed {
        let original_ids: Vec<NodeId> = (0..self.len())
            .filter(|&i| self.degree(i) <= max_degree)
            .collect();
        let mut new_id = vec![None; self.len()];
        for (k, &old) in original_ids.iter().enumerate() {
            new_id[old] = Some(k);
        }
        let adjacency = original_ids
            .iter()
            .map(|&old| {
                self.adjacency[old]
                    .iter()
                    .filter_map(|&j| new_id[j])
                    .collect()
            })
            .collect();
        let poses = original_ids.iter().map(|&i| self.poses[i]).collect();
        Trimmed {
            network: Self { poses, adjacency },
            original_ids,
        }
    }

    fn hops_from(&self, src: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &v in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.is_empty() || self.hops_from(0).iter().all(Option::is_some)
    }

    /// Connected components as sorted node lists.
    pub fn components(&self) -> Vec<Vec<NodeId>> {
        let mut seen = vec![false; self.len()];
        let mut out = Vec::new();
        for s in 0..self.len() {
            if seen[s] {
                continue;
            }
            let comp: Vec<NodeId> = self
                .hops_from(s)
                .iter()
                .enumerate()
                .filter_map(|(i, d)| d.map(|_| i))
                .collect();
            for &i in &comp {
                seen[i] = true;
            }
            out.push(comp);
        }
        out
    }

    /// Largest shortest-path hop count; `None` when disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let mut best = 0;
        for s in 0..self.len() {
            for d in self.hops_from(s) {
                best = best.max(d?);
            }
        }
        Some(best)
    }

    pub fn connection_matrix(&self) -> ConnectionMatrix {
        let n = self.len();
        let mut entries = vec![vec![false; n]; n];
        for (i, row) in entries.iter_mut().enumerate() {
            row[i] = true;
            for &j in &self.adjacency[i] {
                row[j] = true;
            }
        }
        ConnectionMatrix { entries }
    }
}

/// `entries[i][j]` means vehicle `i` receives from vehicle `j`. The diagonal
/// is always set. May be directed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConnectionMatrix {
    entries: Vec<Vec<bool>>,
}

impl ConnectionMatrix {
    pub fn from_rows(entries: Vec<Vec<bool>>) -> Result<Self> {
        let n = entries.len();
        for (i, row) in entries.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidInput(format!(
                    "connection matrix row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if !row[i] {
                return Err(Error::InvalidInput(format!(
                    "connection matrix diagonal entry ({i}, {i}) must be 1"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> bool {
        self.entries[i][j]
    }

    /// Sources of row `i` including `i` itself, ascending.
    pub fn sources(&self, i: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.entries[i]
            .iter()
            .enumerate()
            .filter_map(|(j, &e)| e.then_some(j))
    }

    /// Non-self sources of row `i`.
    pub fn received_from(&self, i: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.sources(i).filter(move |&j| j != i)
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| (0..n).all(|j| self.entries[i][j] == self.entries[j][i]))
    }

    /// Degrees of the undirected graph underlying the matrix (an entry in
    /// either direction counts as a link), excluding self.
    pub fn undirected_degrees(&self) -> Vec<usize> {
        let n = self.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && (self.entries[i][j] || self.entries[j][i]))
                    .count()
            })
            .collect()
    }

    /// Connectivity of the undirected graph underlying the matrix.
    pub fn is_weakly_connected(&self) -> bool {
        let n = self.len();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut stack = vec![0];
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if !seen[v] && (self.entries[u][v] || self.entries[v][u]) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.entries
    }
}

/// Draws `n` poses: a segment with probability proportional to its length,
/// a uniform position along it, and a uniform lateral offset of at most
/// `min(spread, half_width)`.
pub fn sample_poses(map: &RoadMap, n: usize, seed: u64, spread: f64) -> Result<Vec<VehiclePose>> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one pose".into()));
    }
    let lengths: Vec<f64> = map.segments().iter().map(|s| s.length()).collect();
    let pick = WeightedIndex::new(&lengths)
        .map_err(|e| Error::InvalidInput(format!("segment lengths: {e}")))?;
    let mut rng = seed::rng_from(seed);
    Ok((0..n)
        .map(|_| {
            let seg = &map.segments()[pick.sample(&mut rng)];
            let s: f64 = rng.random();
            let jitter = spread.max(0.0).min(seg.half_width());
            let lateral = if jitter > 0.0 {
                rng.random_range(-jitter..=jitter)
            } else {
                0.0
            };
            VehiclePose {
                position: seg.point_at(s, lateral),
                road_angle: seg.heading(),
            }
        })
        .collect())
}
