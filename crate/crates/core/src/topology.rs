//! Network graph and source-to-gateway max-flow.
//!
//! Capacities are held as integral milli-Kbps so the augmenting-path solver
//! works in exact integer arithmetic. All public rates are reported in Kbps.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MILLI_PER_KBPS: f64 = 1000.0;
const MAX_GENERATION_ATTEMPTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Coordinate {
    pub x: f64,
    pub y: f64,
}

impl Coordinate {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Coordinate {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Coordinate> for [f64; 2] {
    fn from(c: Coordinate) -> Self {
        [c.x, c.y]
    }
}

/// On-disk graph document. Node indices are zero-based positions in
/// `devices`; `devices` lists every ground node, including the source and
/// the gateway.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct GraphFile {
    devices: Vec<Coordinate>,
    links: Vec<(usize, usize, f64)>,
    source: usize,
    gateway: usize,
    base: Coordinate,
}

/// Directed capacitated graph of ground nodes plus the UAV base location.
///
/// Every node other than the source and the gateway is an attestable device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct DeviceGraph {
    nodes: Vec<Coordinate>,
    links: BTreeMap<(usize, usize), u64>,
    source: usize,
    gateway: usize,
    base: Coordinate,
}

impl DeviceGraph {
    pub fn new(
        nodes: Vec<Coordinate>,
        links: impl IntoIterator<Item = (usize, usize, f64)>,
        source: usize,
        gateway: usize,
        base: Coordinate,
    ) -> Result<Self> {
        let n = nodes.len();
        if let Some(i) = nodes.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidGraph(format!("node {i} has a non-finite coordinate")));
        }
        if !base.is_finite() {
            return Err(Error::InvalidGraph("base coordinate is not finite".into()));
        }
        if source >= n || gateway >= n {
            return Err(Error::InvalidGraph(format!(
                "source {source} / gateway {gateway} out of range for {n} nodes"
            )));
        }
        if source == gateway {
            return Err(Error::InvalidGraph("source and gateway coincide".into()));
        }

        let mut map = BTreeMap::new();
        for (from, to, kbps) in links {
            if from >= n || to >= n {
                return Err(Error::InvalidGraph(format!(
                    "link {from}->{to} references a missing node"
                )));
            }
            if from == to {
                return Err(Error::InvalidGraph(format!("self-loop on node {from}")));
            }
            let milli = kbps_to_milli(kbps).ok_or_else(|| {
                Error::InvalidGraph(format!("link {from}->{to} has invalid capacity {kbps}"))
            })?;
            if map.insert((from, to), milli).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate link {from}->{to}")));
            }
        }

        Ok(Self {
            nodes,
            links: map,
            source,
            gateway,
            base,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidGraph(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("graph serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn coordinate(&self, node: usize) -> Coordinate {
        self.nodes[node]
    }

    pub fn nodes(&self) -> &[Coordinate] {
        &self.nodes
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn gateway(&self) -> usize {
        self.gateway
    }

    pub fn base(&self) -> Coordinate {
        self.base
    }

    /// Links as `(from, to, kbps)` in ascending `(from, to)` order.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.links
            .iter()
            .map(|(&(u, v), &c)| (u, v, c as f64 / MILLI_PER_KBPS))
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Node indices of attestable devices, ascending.
    pub fn attestable(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| i != self.source && i != self.gateway)
            .collect()
    }

    pub fn is_attestable(&self, node: usize) -> bool {
        node < self.nodes.len() && node != self.source && node != self.gateway
    }

    /// Multiplies every capacity so the full max-flow becomes `target_kbps`.
    pub fn scaled_to_full(&self, target_kbps: f64) -> Result<Self> {
        if !(target_kbps.is_finite() && target_kbps > 0.0) {
            return Err(Error::Config(format!("target throughput {target_kbps} must be positive")));
        }
        let full = max_flow(self, self.source, self.gateway)?;
        if full <= 0.0 {
            return Err(Error::Config("graph carries no source-to-gateway flow".into()));
        }
        let factor = target_kbps / full;
        let links = self.links().map(|(u, v, c)| (u, v, c * factor));
        Self::new(self.nodes.clone(), links, self.source, self.gateway, self.base)
    }
}

impl TryFrom<GraphFile> for DeviceGraph {
    type Error = Error;

    fn try_from(f: GraphFile) -> Result<Self> {
        DeviceGraph::new(f.devices, f.links, f.source, f.gateway, f.base)
    }
}

impl From<DeviceGraph> for GraphFile {
    fn from(g: DeviceGraph) -> Self {
        let links = g.links().collect();
        GraphFile {
            devices: g.nodes,
            links,
            source: g.source,
            gateway: g.gateway,
            base: g.base,
        }
    }
}

fn kbps_to_milli(kbps: f64) -> Option<u64> {
    if !kbps.is_finite() || kbps <= 0.0 {
        return None;
    }
    let milli = (kbps * MILLI_PER_KBPS).round();
    (milli >= 1.0 && milli < u64::MAX as f64 / 4.0).then_some(milli as u64)
}

/// Result of a max-flow computation, with the per-link flow assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSolution {
    pub value_milli: u64,
    pub link_flows: BTreeMap<(usize, usize), u64>,
}

impl FlowSolution {
    pub fn value_kbps(&self) -> f64 {
        self.value_milli as f64 / MILLI_PER_KBPS
    }
}

struct Residual {
    to: Vec<usize>,
    cap: Vec<u64>,
    adj: Vec<Vec<usize>>,
}

impl Residual {
    fn build(graph: &DeviceGraph, removed: Option<usize>) -> (Self, Vec<((usize, usize), usize, u64)>) {
        let mut r = Residual {
            to: Vec::with_capacity(graph.links.len() * 2),
            cap: Vec::with_capacity(graph.links.len() * 2),
            adj: vec![Vec::new(); graph.nodes.len()],
        };
        let mut forward = Vec::with_capacity(graph.links.len());
        for (&(u, v), &c) in &graph.links {
            if removed == Some(u) || removed == Some(v) {
                continue;
            }
            let e = r.to.len();
            r.to.push(v);
            r.cap.push(c);
            r.adj[u].push(e);
            r.to.push(u);
            r.cap.push(0);
            r.adj[v].push(e + 1);
            forward.push(((u, v), e, c));
        }
        (r, forward)
    }

    /// Shortest augmenting paths found by breadth-first search.
    fn augment_all(&mut self, s: usize, t: usize) -> u64 {
        let n = self.adj.len();
        let mut total = 0;
        let mut via = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        loop {
            via.fill(usize::MAX);
            queue.clear();
            queue.push_back(s);
            let mut reached = false;
            'bfs: while let Some(u) = queue.pop_front() {
                for &e in &self.adj[u] {
                    let v = self.to[e];
                    if self.cap[e] > 0 && v != s && via[v] == usize::MAX {
                        via[v] = e;
                        if v == t {
                            reached = true;
                            break 'bfs;
                        }
                        queue.push_back(v);
                    }
                }
            }
            if !reached {
                return total;
            }

            let mut bottleneck = u64::MAX;
            let mut v = t;
            while v != s {
                let e = via[v];
                bottleneck = bottleneck.min(self.cap[e]);
                v = self.to[e ^ 1];
            }
            let mut v = t;
            while v != s {
                let e = via[v];
                self.cap[e] -= bottleneck;
                self.cap[e ^ 1] += bottleneck;
                v = self.to[e ^ 1];
            }
            total += bottleneck;
        }
    }
}

fn solve(graph: &DeviceGraph, source: usize, sink: usize, removed: Option<usize>) -> Result<FlowSolution> {
    let n = graph.nodes.len();
    if source >= n || sink >= n {
        return Err(Error::InvalidGraph(format!(
            "flow endpoints {source}->{sink} out of range for {n} nodes"
        )));
    }
    if source == sink {
        return Err(Error::InvalidGraph("flow source equals sink".into()));
    }
    let (mut residual, forward) = Residual::build(graph, removed);
    let value_milli = if removed == Some(source) || removed == Some(sink) {
        0
    } else {
        residual.augment_all(source, sink)
    };
    let link_flows = forward
        .into_iter()
        .map(|(key, e, c)| (key, c - residual.cap[e]))
        .collect();
    Ok(FlowSolution {
        value_milli,
        link_flows,
    })
}

/// Max-flow from `source` to `sink` together with a feasible flow assignment.
pub fn max_flow_solution(graph: &DeviceGraph, source: usize, sink: usize) -> Result<FlowSolution> {
    solve(graph, source, sink, None)
}

/// Exact maximum flow between two nodes, in Kbps.
pub fn max_flow(graph: &DeviceGraph, source: usize, sink: usize) -> Result<f64> {
    solve(graph, source, sink, None).map(|s| s.value_kbps())
}

/// Source-to-gateway max-flow while `device` is offline being attested.
pub fn attested_throughput(graph: &DeviceGraph, device: usize) -> Result<f64> {
    if device >= graph.nodes.len() {
        return Err(Error::InvalidTarget {
            node: device,
            reason: "no such node",
        });
    }
    if device == graph.source || device == graph.gateway {
        return Err(Error::InvalidTarget {
            node: device,
            reason: "source and gateway are infrastructure, not attestable devices",
        });
    }
    solve(graph, graph.source, graph.gateway, Some(device)).map(|s| s.value_kbps())
}

/// Full and per-device degraded throughput, precomputed once per static graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputTable {
    pub full: f64,
    /// Keyed by graph node index.
    pub degraded: BTreeMap<usize, f64>,
}

impl ThroughputTable {
    pub fn degraded(&self, device: usize) -> Option<f64> {
        self.degraded.get(&device).copied()
    }
}

pub fn build_throughput_table(graph: &DeviceGraph) -> Result<ThroughputTable> {
    let full = max_flow(graph, graph.source, graph.gateway)?;
    let degraded = graph
        .attestable()
        .into_iter()
        .map(|i| attested_throughput(graph, i).map(|r| (i, r)))
        .collect::<Result<_>>()?;
    Ok(ThroughputTable { full, degraded })
}

/// Random geometric graph with `n` attestable devices.
///
/// `n + 2` points are drawn uniformly in `[0, region]^2`. The point nearest
/// `(region, region)` becomes the source, the point nearest the origin the
/// gateway, and the remaining `n` points are the devices. Pairs within
/// `radius` are joined in both directions with `capacity` Kbps. The UAV
/// base sits at the origin. Draws repeat until source and gateway are
/// connected.
pub fn random_geometric_graph(
    n: usize,
    region: f64,
    radius: f64,
    capacity: f64,
    seed: u64,
) -> Result<DeviceGraph> {
    if n < 3 {
        return Err(Error::Config(format!("need at least 3 devices, got {n}")));
    }
    if !(region.is_finite() && region > 0.0) {
        return Err(Error::Config(format!("region {region} must be positive")));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Config(format!("radius {radius} must be positive")));
    }
    if kbps_to_milli(capacity).is_none() {
        return Err(Error::Config(format!("capacity {capacity} must be positive")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = n + 2;
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let mut points: Vec<Coordinate> = (0..total)
            .map(|_| Coordinate::new(rng.random_range(0.0..=region), rng.random_range(0.0..=region)))
            .collect();

        let far_corner = Coordinate::new(region, region);
        let origin = Coordinate::new(0.0, 0.0);
        let src = nearest(&points, far_corner, None);
        let dst = nearest(&points, origin, Some(src));

        // Source first, gateway last, devices in between in draw order.
        let src_pt = points[src];
        let dst_pt = points[dst];
        let mut ordered = Vec::with_capacity(total);
        ordered.push(src_pt);
        ordered.extend(
            points
                .drain(..)
                .enumerate()
                .filter(|&(i, _)| i != src && i != dst)
                .map(|(_, c)| c),
        );
        ordered.push(dst_pt);

        let mut links = Vec::new();
        for i in 0..total {
            for j in 0..total {
                if i != j && crate::kinetics::travel_distance(ordered[i], ordered[j]) <= radius {
                    links.push((i, j, capacity));
                }
            }
        }
        let graph = DeviceGraph::new(ordered, links, 0, total - 1, origin)?;
        if max_flow(&graph, graph.source, graph.gateway)? > 0.0 {
            return Ok(graph);
        }
    }
    Err(Error::Config(format!(
        "no connected topology after {MAX_GENERATION_ATTEMPTS} draws (n={n}, region={region}, radius={radius})"
    )))
}

fn nearest(points: &[Coordinate], target: Coordinate, skip: Option<usize>) -> usize {
    let mut best = usize::MAX;
    let mut best_d = f64::INFINITY;
    for (i, &p) in points.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let d = crate::kinetics::travel_distance(p, target);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}
