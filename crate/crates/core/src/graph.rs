//! Signed bipartite user-item graphs.
//!
//! Node convention, fixed globally: users occupy indices `0..num_users`,
//! items occupy `num_users..num_users+num_items`.

use crate::error::{Error, Result};
use crate::sparse::SparseSymMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

/// Edge polarity: positive feedback (like, high rating) or negative
/// feedback (dislike, low rating).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Positive => 1,
            Sign::Negative => -1,
        }
    }

    pub fn from_i8(v: i8) -> Result<Self> {
        match v {
            1 => Ok(Sign::Positive),
            -1 => Ok(Sign::Negative),
            other => Err(Error::Parse {
                line: 0,
                msg: format!("sign must be +1 or -1, got {other}"),
            }),
        }
    }
}

/// A single signed interaction between a user and an item (dense indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedEdge {
    pub user: usize,
    pub item: usize,
    pub sign: Sign,
}

impl SignedEdge {
    pub fn new(user: usize, item: usize, sign: Sign) -> Self {
        Self { user, item, sign }
    }
}

/// Signed bipartite graph with deduplicated, user-major sorted edge lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedBipartiteGraph {
    num_users: usize,
    num_items: usize,
    pos_edges: Vec<(usize, usize)>,
    neg_edges: Vec<(usize, usize)>,
}

impl SignedBipartiteGraph {
    /// Build a graph from raw edges. Edges may be unsorted and contain
    /// exact duplicates (collapsed); a pair carrying both signs is an error.
    pub fn build(num_users: usize, num_items: usize, edges: &[SignedEdge]) -> Result<Self> {
        let mut by_pair: BTreeMap<(usize, usize), Sign> = BTreeMap::new();
        for e in edges {
            if e.user >= num_users {
                return Err(Error::IndexOutOfRange(format!(
                    "user {} out of range (num_users={num_users})",
                    e.user
                )));
            }
            if e.item >= num_items {
                return Err(Error::IndexOutOfRange(format!(
                    "item {} out of range (num_items={num_items})",
                    e.item
                )));
            }
            match by_pair.get(&(e.user, e.item)) {
                Some(&prev) if prev != e.sign => {
                    return Err(Error::ConflictingSigns {
                        user: e.user,
                        item: e.item,
                    });
                }
                _ => {
                    by_pair.insert((e.user, e.item), e.sign);
                }
            }
        }
        let mut pos_edges = Vec::new();
        let mut neg_edges = Vec::new();
        for (&(u, v), &s) in &by_pair {
            match s {
                Sign::Positive => pos_edges.push((u, v)),
                Sign::Negative => neg_edges.push((u, v)),
            }
        }
        Ok(Self {
            num_users,
            num_items,
            pos_edges,
            neg_edges,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Unified node count N = |U| + |V|.
    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    /// Unified node index of an item.
    pub fn item_node(&self, item: usize) -> usize {
        self.num_users + item
    }

    pub fn pos_edges(&self) -> &[(usize, usize)] {
        &self.pos_edges
    }

    pub fn neg_edges(&self) -> &[(usize, usize)] {
        &self.neg_edges
    }

    pub fn edges(&self, sign: Sign) -> &[(usize, usize)] {
        match sign {
            Sign::Positive => &self.pos_edges,
            Sign::Negative => &self.neg_edges,
        }
    }

    pub fn num_edges(&self) -> usize {
        self.pos_edges.len() + self.neg_edges.len()
    }

    /// All edges as `SignedEdge`s, positives first, user-major order.
    pub fn signed_edges(&self) -> Vec<SignedEdge> {
        self.pos_edges
            .iter()
            .map(|&(u, v)| SignedEdge::new(u, v, Sign::Positive))
            .chain(
                self.neg_edges
                    .iter()
                    .map(|&(u, v)| SignedEdge::new(u, v, Sign::Negative)),
            )
            .collect()
    }

    /// N x N symmetric 0/1 adjacency over the unified node index,
    /// containing only the requested sign's edges.
    pub fn sign_adjacency(&self, sign: Sign) -> SparseSymMatrix {
        let entries: Vec<(usize, usize, f64)> = self
            .edges(sign)
            .iter()
            .map(|&(u, v)| (u, self.item_node(v), 1.0))
            .collect();
        SparseSymMatrix::from_entries(self.num_nodes(), &entries)
            .expect("bipartite edges are valid entries")
    }

    /// Write the edge-list interchange format: one `user<TAB>item<TAB>sign`
    /// line per edge, sign rendered as `+1` / `-1`.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        for e in self.signed_edges() {
            writeln!(
                w,
                "{}\t{}\t{}",
                e.user,
                e.item,
                if e.sign == Sign::Positive { "+1" } else { "-1" }
            )?;
        }
        Ok(())
    }
}

/// Parse the edge-list interchange format. Lines starting with `#` are
/// ignored; an optional header line is skipped when its first field is
/// not an integer.
pub fn read_edge_list<R: BufRead>(r: R) -> Result<Vec<SignedEdge>> {
    let mut edges = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        }
        let user = match fields[0].parse::<usize>() {
            Ok(u) => u,
            Err(_) if edges.is_empty() => continue, // header line
            Err(e) => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("bad user id: {e}"),
                })
            }
        };
        let item = fields[1].parse::<usize>().map_err(|e| Error::Parse {
            line: line_no,
            msg: format!("bad item id: {e}"),
        })?;
        let sign_raw = fields[2].trim_start_matches('+');
        let sign = sign_raw
            .parse::<i8>()
            .ok()
            .and_then(|v| Sign::from_i8(v).ok())
            .ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("bad sign {:?}", fields[2]),
            })?;
        edges.push(SignedEdge::new(user, item, sign));
    }
    Ok(edges)
}
