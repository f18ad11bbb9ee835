//! Address-level transaction graph and its preprocessing: undirected, simple,
//! reduced to the largest connected component with degree-1 nodes pruned in a
//! single pass.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use crate::ingest::Transaction;
use crate::types::Address;

/// Undirected simple graph over addresses. Nodes are indexed in lexicographic
/// address order; adjacency lists are sorted and never contain the node
/// itself or duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionGraph {
    addresses: Vec<Address>,
    adjacency: Vec<Vec<u32>>,
    edge_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("malformed edge list: {0}")]
    MalformedEdgeList(String),
}

impl TransactionGraph {
    /// Builds from explicit node and edge sets. Self-loops and duplicate
    /// edges are rejected by construction (the edge set is deduplicated and
    /// filtered).
    pub fn from_edges(nodes: BTreeSet<Address>, edges: BTreeSet<(Address, Address)>) -> Self {
        let addresses: Vec<Address> = nodes.into_iter().collect();
        let index: BTreeMap<Address, u32> = addresses
            .iter()
            .enumerate()
            .map(|(i, a)| (*a, i as u32))
            .collect();
        let mut adjacency = vec![Vec::new(); addresses.len()];
        let mut edge_count = 0;
        for (a, b) in edges {
            if a == b {
                continue;
            }
            let (ia, ib) = (index[&a], index[&b]);
            adjacency[ia as usize].push(ib);
            adjacency[ib as usize].push(ia);
            edge_count += 1;
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }
        // Recount in case duplicate edges slipped in as (a,b) twice.
        let edge_count_checked: usize = adjacency.iter().map(|a| a.len()).sum::<usize>() / 2;
        debug_assert_eq!(edge_count, edge_count_checked);
        TransactionGraph { addresses, adjacency, edge_count: edge_count_checked }
    }

    pub fn node_count(&self) -> usize {
        self.addresses.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn address(&self, node: u32) -> &Address {
        &self.addresses[node as usize]
    }

    pub fn addresses(&self) -> &[Address] {
        &self.addresses
    }

    pub fn node_of(&self, address: &Address) -> Option<u32> {
        self.addresses.binary_search(address).ok().map(|i| i as u32)
    }

    pub fn neighbors(&self, node: u32) -> &[u32] {
        &self.adjacency[node as usize]
    }

    pub fn degree(&self, node: u32) -> usize {
        self.adjacency[node as usize].len()
    }

    /// Edges as address pairs with the smaller address first.
    pub fn edges(&self) -> impl Iterator<Item = (&Address, &Address)> {
        self.adjacency.iter().enumerate().flat_map(move |(i, adj)| {
            adj.iter()
                .filter(move |j| (i as u32) < **j)
                .map(move |j| (&self.addresses[i], &self.addresses[*j as usize]))
        })
    }

    /// Connected components as sorted node-index lists, discovered in index
    /// order so the result is deterministic.
    fn components(&self) -> Vec<Vec<u32>> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut components = Vec::new();
        for start in 0..n as u32 {
            if seen[start as usize] {
                continue;
            }
            let mut stack = vec![start];
            let mut comp = Vec::new();
            seen[start as usize] = true;
            while let Some(v) = stack.pop() {
                comp.push(v);
                for &w in self.neighbors(v) {
                    if !seen[w as usize] {
                        seen[w as usize] = true;
                        stack.push(w);
                    }
                }
            }
            comp.sort_unstable();
            components.push(comp);
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// Subgraph induced on the given nodes.
    fn induced(&self, keep: &BTreeSet<u32>) -> Self {
        let nodes: BTreeSet<Address> = keep.iter().map(|i| self.addresses[*i as usize]).collect();
        let mut edges = BTreeSet::new();
        for &i in keep {
            for &j in self.neighbors(i) {
                if i < j && keep.contains(&j) {
                    edges.insert((self.addresses[i as usize], self.addresses[j as usize]));
                }
            }
        }
        TransactionGraph::from_edges(nodes, edges)
    }

    pub fn write_edge_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["addr_a", "addr_b"]).map_err(csv_io)?;
        for (a, b) in self.edges() {
            w.write_record([a.to_string(), b.to_string()]).map_err(csv_io)?;
        }
        w.flush()
    }

    pub fn read_edge_csv<R: Read>(reader: R) -> Result<Self, GraphError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut nodes = BTreeSet::new();
        let mut edges = BTreeSet::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| GraphError::MalformedEdgeList(e.to_string()))?;
            let a: Address = rec
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|e| GraphError::MalformedEdgeList(format!("{e}")))?;
            let b: Address = rec
                .get(1)
                .unwrap_or("")
                .parse()
                .map_err(|e| GraphError::MalformedEdgeList(format!("{e}")))?;
            if a == b {
                return Err(GraphError::MalformedEdgeList(format!("self-loop on {a}")));
            }
            nodes.insert(a);
            nodes.insert(b);
            edges.insert(if a < b { (a, b) } else { (b, a) });
        }
        Ok(TransactionGraph::from_edges(nodes, edges))
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

/// One undirected edge per unordered endpoint pair. Self-transfers and
/// contract creations contribute no edge; their endpoints still appear as
/// (possibly isolated) nodes.
pub fn build_graph(corpus: &[Transaction]) -> TransactionGraph {
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for tx in corpus {
        let from = tx.from_address;
        let Some(to) = tx.to_address else {
            nodes.insert(from);
            continue;
        };
        nodes.insert(from);
        nodes.insert(to);
        if from != to {
            edges.insert(if from < to { (from, to) } else { (to, from) });
        }
    }
    TransactionGraph::from_edges(nodes, edges)
}

/// Keeps the largest connected component (ties broken by the component whose
/// smallest member address sorts first), then removes its degree-1 nodes in
/// one pass. The prune is deliberately not iterated, so nodes whose degree
/// drops to 1 during the pass survive.
pub fn preprocess(g: &TransactionGraph) -> Result<(TransactionGraph, Vec<Address>), GraphError> {
    if g.node_count() == 0 {
        return Err(GraphError::EmptyGraph);
    }
    let components = g.components();
    // Component node lists are sorted, so comparing (len, Reverse(first)) by
    // max picks the largest component and breaks ties toward the smallest
    // leading address.
    let lcc = components
        .iter()
        .max_by_key(|c| (c.len(), std::cmp::Reverse(g.addresses[c[0] as usize])))
        .expect("at least one component in a nonempty graph");

    let lcc_set: BTreeSet<u32> = lcc.iter().copied().collect();
    let keep: BTreeSet<u32> = lcc
        .iter()
        .copied()
        .filter(|&v| {
            let deg_in_lcc = g.neighbors(v).iter().filter(|w| lcc_set.contains(w)).count();
            deg_in_lcc != 1
        })
        .collect();

    let removed: Vec<Address> = (0..g.node_count() as u32)
        .filter(|v| !keep.contains(v))
        .map(|v| g.addresses[v as usize])
        .collect();
    Ok((g.induced(&keep), removed))
}
