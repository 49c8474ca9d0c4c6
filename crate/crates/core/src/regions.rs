//! Region extraction, adjacency and ring-by-ring neighbor expansion.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::{canonicalize_labels, LabelGrid, SparseSamples};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[default]
    #[serde(rename = "4")]
    Four,
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
        }
    }

    /// Neighbors below or right of a pixel; each unordered pair is visited once.
    fn forward_offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(0, 1), (1, 0)],
            Connectivity::Eight => &[(0, 1), (1, -1), (1, 0), (1, 1)],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionOptions {
    pub connectivity: Connectivity,
    /// Treat every label as one region even when its pixels are disconnected.
    pub merge_same_label: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub id: usize,
    /// Canonical mask label the region came from.
    pub label: u32,
    /// Flat row-major pixel indices, ascending.
    pub pixels: Vec<usize>,
    /// Indices into the sample set, ascending.
    pub sample_indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionGraph {
    height: usize,
    width: usize,
    region_of: Vec<u32>,
    regions: Vec<Region>,
    adjacency: Vec<Vec<usize>>,
}

impl RegionGraph {
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Region id at a pixel.
    pub fn region_at(&self, row: usize, col: usize) -> usize {
        self.region_of[row * self.width + col] as usize
    }

    pub fn region_map(&self) -> &[u32] {
        &self.region_of
    }

    /// Sorted neighbor ids of a region.
    pub fn neighbors(&self, id: usize) -> &[usize] {
        &self.adjacency[id]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
    }
}

/// Splits the mask into regions (connected components of equal label unless
/// `merge_same_label`) and assigns every sample to the region under it.
pub fn build_region_graph(mask: &LabelGrid, samples: &SparseSamples, opts: RegionOptions) -> Result<RegionGraph> {
    let (height, width) = mask.dims();
    samples.check_bounds(height, width)?;
    let labels = canonicalize_labels(mask);
    let labels = labels.labels();
    let n = height * width;

    let mut region_of = vec![u32::MAX; n];
    let mut region_labels = Vec::new();
    if opts.merge_same_label {
        region_of.copy_from_slice(labels);
        let count = labels.iter().max().map_or(0, |m| *m as usize + 1);
        region_labels.extend(0..count as u32);
    } else {
        let mut queue = VecDeque::new();
        for start in 0..n {
            if region_of[start] != u32::MAX {
                continue;
            }
            let id = region_labels.len() as u32;
            let label = labels[start];
            region_labels.push(label);
            region_of[start] = id;
            queue.push_back(start);
            while let Some(p) = queue.pop_front() {
                let (r, c) = (p / width, p % width);
                for &(dr, dc) in opts.connectivity.offsets() {
                    let Some(q) = offset(r, c, dr, dc, height, width) else { continue };
                    if region_of[q] == u32::MAX && labels[q] == label {
                        region_of[q] = id;
                        queue.push_back(q);
                    }
                }
            }
        }
    }

    let count = region_labels.len();
    let mut regions: Vec<Region> = region_labels
        .iter()
        .enumerate()
        .map(|(id, &label)| Region { id, label, pixels: Vec::new(), sample_indices: Vec::new() })
        .collect();
    let mut adjacency = vec![BTreeSet::new(); count];
    for (p, &id) in region_of.iter().enumerate() {
        let id = id as usize;
        regions[id].pixels.push(p);
        let (r, c) = (p / width, p % width);
        for &(dr, dc) in opts.connectivity.forward_offsets() {
            let Some(q) = offset(r, c, dr, dc, height, width) else { continue };
            let other = region_of[q] as usize;
            if other != id {
                adjacency[id].insert(other);
                adjacency[other].insert(id);
            }
        }
    }
    for (i, s) in samples.points().iter().enumerate() {
        regions[region_of[s.row * width + s.col] as usize].sample_indices.push(i);
    }
    if regions.iter().any(|r| r.pixels.is_empty()) {
        return Err(Error::InvalidConfig("mask produced an empty region".into()));
    }

    Ok(RegionGraph {
        height,
        width,
        region_of,
        regions,
        adjacency: adjacency.into_iter().map(|s| s.into_iter().collect()).collect(),
    })
}

#[inline]
fn offset(r: usize, c: usize, dr: isize, dc: isize, height: usize, width: usize) -> Option<usize> {
    let r = r.checked_add_signed(dr)?;
    let c = c.checked_add_signed(dc)?;
    (r < height && c < width).then_some(r * width + c)
}

/// Result of growing a region through its neighbors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expansion {
    pub origin: usize,
    /// Absorbed region ids, origin first, then ring by ring in ascending id order.
    pub included: Vec<usize>,
    /// Number of rings absorbed beyond the origin.
    pub hop: usize,
    /// Sample indices of all included regions, in `included` order.
    pub samples: Vec<usize>,
    /// Whether `need` accepted the final sample set.
    pub satisfied: bool,
}

/// Breadth-first growth from `origin`, one full adjacency ring at a time, until
/// `need` accepts the accumulated samples, `max_hops` rings have been absorbed,
/// or the connected component is exhausted.
pub fn expand_until(
    graph: &RegionGraph,
    origin: usize,
    max_hops: Option<usize>,
    mut need: impl FnMut(&[usize]) -> bool,
) -> Expansion {
    let mut visited = vec![false; graph.len()];
    visited[origin] = true;
    let mut included = vec![origin];
    let mut samples = graph.regions[origin].sample_indices.clone();
    let mut ring = vec![origin];
    let mut hop = 0;
    let mut satisfied = need(&samples);

    while !satisfied && max_hops.is_none_or(|m| hop < m) {
        let mut next: Vec<usize> = ring
            .iter()
            .flat_map(|&r| graph.neighbors(r).iter().copied())
            .filter(|&r| !visited[r])
            .collect();
        next.sort_unstable();
        next.dedup();
        if next.is_empty() {
            break;
        }
        for &r in &next {
            visited[r] = true;
            included.push(r);
            samples.extend_from_slice(&graph.regions[r].sample_indices);
        }
        ring = next;
        hop += 1;
        satisfied = need(&samples);
    }

    Expansion { origin, included, hop, samples, satisfied }
}
