//! Undirected networks with categorical dyad covariates and an observation mask.
//!
//! Node indices are 0-based in the API and 1-based in the text formats.
//! Covariate categories are likewise `0..C` in the API and `1..=C` on disk.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GlpmError, Result};
use crate::sparse::SymmetricCsc;

/// Unordered node pair in canonical form `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Dyad {
    pub i: usize,
    pub j: usize,
}

impl Dyad {
    /// Canonicalizes `{a, b}`. Panics on `a == b`.
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "a dyad needs two distinct nodes");
        Dyad {
            i: a.min(b),
            j: a.max(b),
        }
    }

    /// Linear index `j(j−1)/2 + i`.
    #[inline]
    pub fn index(self) -> usize {
        self.j * (self.j - 1) / 2 + self.i
    }

    pub fn from_index(index: usize) -> Self {
        // Largest j with j(j-1)/2 <= index.
        let mut j = ((1.0 + (1.0 + 8.0 * index as f64).sqrt()) / 2.0) as usize;
        while j * (j - 1) / 2 > index {
            j -= 1;
        }
        while (j + 1) * j / 2 <= index {
            j += 1;
        }
        Dyad {
            i: index - j * (j - 1) / 2,
            j,
        }
    }
}

pub fn dyad_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum DyadStatus {
    NonEdge = 0,
    Edge = 1,
    Unobserved = 2,
}

/// Immutable validated network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    n: usize,
    num_categories: usize,
    status: Vec<DyadStatus>,
    covariate: Vec<u16>,
    edges: Vec<Dyad>,
    neighbors: Vec<Vec<usize>>,
    edge_count_per_category: Vec<usize>,
    non_edges_by_category: Vec<Vec<Dyad>>,
    unobserved: usize,
}

impl Network {
    /// Builds a network from 0-based parts. `covariates` lists `(i, j, c)`
    /// for dyads whose category `c` differs from the default `0`.
    pub fn new(
        n: usize,
        num_categories: usize,
        edges: &[(usize, usize)],
        covariates: &[(usize, usize, usize)],
        unobserved: &[(usize, usize)],
    ) -> Result<Self> {
        if n == 0 {
            return Err(GlpmError::InvalidParameter("network needs at least one node".into()));
        }
        if num_categories == 0 || num_categories > u16::MAX as usize {
            return Err(GlpmError::InvalidParameter(format!(
                "category count {num_categories} outside 1..={}",
                u16::MAX
            )));
        }
        let total = dyad_count(n);
        let check = |a: usize, b: usize| -> Result<Dyad> {
            for node in [a, b] {
                if node >= n {
                    return Err(GlpmError::NodeOutOfRange { node: node + 1, n });
                }
            }
            if a == b {
                return Err(GlpmError::SelfLoop { node: a + 1 });
            }
            Ok(Dyad::new(a, b))
        };

        let mut status = vec![DyadStatus::NonEdge; total];
        let mut masked = vec![false; total];
        for &(a, b) in unobserved {
            let d = check(a, b)?;
            if std::mem::replace(&mut masked[d.index()], true) {
                return Err(GlpmError::DuplicateDyad { i: d.i + 1, j: d.j + 1 });
            }
            status[d.index()] = DyadStatus::Unobserved;
        }

        let mut covariate = vec![0u16; total];
        let mut assigned = vec![false; total];
        for &(a, b, c) in covariates {
            let d = check(a, b)?;
            if c >= num_categories {
                return Err(GlpmError::CovariateOutOfRange {
                    category: c + 1,
                    categories: num_categories,
                });
            }
            if std::mem::replace(&mut assigned[d.index()], true) {
                return Err(GlpmError::DuplicateDyad { i: d.i + 1, j: d.j + 1 });
            }
            covariate[d.index()] = c as u16;
        }

        let mut edge_list = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            let d = check(a, b)?;
            match status[d.index()] {
                DyadStatus::Edge => return Err(GlpmError::DuplicateDyad { i: d.i + 1, j: d.j + 1 }),
                DyadStatus::Unobserved => {
                    return Err(GlpmError::EdgeOnUnobservedDyad { i: d.i + 1, j: d.j + 1 })
                }
                DyadStatus::NonEdge => status[d.index()] = DyadStatus::Edge,
            }
            edge_list.push(d);
        }
        edge_list.sort_unstable_by_key(|d| d.index());

        let mut neighbors = vec![Vec::new(); n];
        let mut edge_count_per_category = vec![0; num_categories];
        for d in &edge_list {
            neighbors[d.i].push(d.j);
            neighbors[d.j].push(d.i);
            edge_count_per_category[covariate[d.index()] as usize] += 1;
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        let mut non_edges_by_category = vec![Vec::new(); num_categories];
        for j in 1..n {
            for i in 0..j {
                let d = Dyad { i, j };
                if status[d.index()] == DyadStatus::NonEdge {
                    non_edges_by_category[covariate[d.index()] as usize].push(d);
                }
            }
        }

        Ok(Network {
            n,
            num_categories,
            status,
            covariate,
            edges: edge_list,
            neighbors,
            edge_count_per_category,
            non_edges_by_category,
            unobserved: unobserved.len(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn edges(&self) -> &[Dyad] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    /// ζ¹: observed edges per category.
    pub fn edge_count_per_category(&self) -> &[usize] {
        &self.edge_count_per_category
    }

    pub fn unobserved_count(&self) -> usize {
        self.unobserved
    }

    #[inline]
    pub fn status(&self, d: Dyad) -> DyadStatus {
        self.status[d.index()]
    }

    /// Status by linear dyad index.
    #[inline]
    pub fn status_at(&self, index: usize) -> DyadStatus {
        self.status[index]
    }

    #[inline]
    pub fn category(&self, d: Dyad) -> usize {
        self.covariate[d.index()] as usize
    }

    #[inline]
    pub fn category_at(&self, index: usize) -> usize {
        self.covariate[index] as usize
    }

    pub fn is_observed(&self, d: Dyad) -> bool {
        self.status(d) != DyadStatus::Unobserved
    }

    /// Observed non-edges of one category, in canonical dyad order.
    /// Supports indexed access for uniform subsampling.
    pub fn non_edges_in_category(&self, category: usize) -> Result<&[Dyad]> {
        self.non_edges_by_category
            .get(category)
            .map(Vec::as_slice)
            .ok_or(GlpmError::CovariateOutOfRange {
                category: category + 1,
                categories: self.num_categories,
            })
    }

    /// Observed non-edges, optionally restricted to one category.
    pub fn observed_non_edges(
        &self,
        category: Option<usize>,
    ) -> Result<Box<dyn Iterator<Item = Dyad> + '_>> {
        match category {
            Some(c) => Ok(Box::new(self.non_edges_in_category(c)?.iter().copied())),
            None => Ok(Box::new((1..self.n).flat_map(move |j| {
                (0..j)
                    .map(move |i| Dyad { i, j })
                    .filter(move |d| self.status(*d) == DyadStatus::NonEdge)
            }))),
        }
    }

    pub fn non_edge_count(&self) -> usize {
        self.non_edges_by_category.iter().map(Vec::len).sum()
    }

    /// All observed dyads (edges and non-edges) in canonical order.
    pub fn observed_dyads(&self) -> Vec<Dyad> {
        (1..self.n)
            .flat_map(|j| (0..j).map(move |i| Dyad { i, j }))
            .filter(|d| self.is_observed(*d))
            .collect()
    }

    /// Observed dyads per category (edges plus non-edges).
    pub fn observed_count_per_category(&self) -> Vec<usize> {
        self.edge_count_per_category
            .iter()
            .zip(&self.non_edges_by_category)
            .map(|(e, ne)| e + ne.len())
            .collect()
    }

    /// Combinatorial Laplacian `D − A` of the observed edges.
    pub fn laplacian(&self) -> SymmetricCsc {
        let mut triplets = Vec::with_capacity(self.n + self.edges.len());
        for (node, list) in self.neighbors.iter().enumerate() {
            triplets.push((node, node, list.len() as f64));
        }
        for d in &self.edges {
            triplets.push((d.i, d.j, -1.0));
        }
        SymmetricCsc::from_triplets(self.n, &triplets).expect("edge indices are in range")
    }

    /// Stable 64-bit fingerprint of the structure (FNV-1a over statuses and
    /// categories); identifies which network a chain was fitted to.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut feed = |byte: u8| {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        };
        for b in (self.n as u64).to_le_bytes() {
            feed(b);
        }
        for (s, c) in self.status.iter().zip(&self.covariate) {
            feed(*s as u8);
            for b in c.to_le_bytes() {
                feed(b);
            }
        }
        h
    }
}

/// Parsed dyad lines of one source file.
struct DyadLines {
    header_n: Option<usize>,
    header_c: Option<usize>,
    rows: Vec<(usize, Vec<usize>)>,
}

fn read_dyad_lines(reader: impl BufRead, source_name: &str, fields: usize) -> Result<DyadLines> {
    let mut out = DyadLines {
        header_n: None,
        header_c: None,
        rows: Vec::new(),
    };
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let comment = comment.trim();
            let parse_header = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| GlpmError::parse(source_name, lineno, format!("bad header: {e}")))
            };
            if let Some(v) = comment.strip_prefix("C=") {
                out.header_c = Some(parse_header(v)?);
            } else if let Some(v) = comment.strip_prefix("n=") {
                out.header_n = Some(parse_header(v)?);
            }
            continue;
        }
        let values = trimmed
            .split('\t')
            .flat_map(str::split_whitespace)
            .map(|tok| {
                tok.parse::<usize>().map_err(|e| {
                    GlpmError::parse(source_name, lineno, format!("`{tok}` is not an index: {e}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != fields {
            return Err(GlpmError::parse(
                source_name,
                lineno,
                format!("expected {fields} fields, found {}", values.len()),
            ));
        }
        if values[..2].contains(&0) {
            return Err(GlpmError::NodeOutOfRange { node: 0, n: out.header_n.unwrap_or(0) });
        }
        out.rows.push((lineno, values));
    }
    Ok(out)
}

/// Reads a network from the tab-separated text formats:
///
/// * edge list: `i<TAB>j` per line, 1-based, `#` comments; an optional
///   `#n=<int>` header fixes the node count (otherwise the largest index seen
///   in any of the sources);
/// * covariates: `#C=<int>` header then `i<TAB>j<TAB>c` for dyads with `c ≠ 1`;
/// * mask: `i<TAB>j` for each unobserved dyad.
pub fn load_network(
    edges: impl BufRead,
    covariates: Option<impl BufRead>,
    mask: Option<impl BufRead>,
) -> Result<Network> {
    let edge_lines = read_dyad_lines(edges, "edge list", 2)?;
    let cov_lines = covariates
        .map(|r| read_dyad_lines(r, "covariate file", 3))
        .transpose()?;
    let mask_lines = mask.map(|r| read_dyad_lines(r, "mask file", 2)).transpose()?;

    let max_seen = edge_lines
        .rows
        .iter()
        .chain(cov_lines.iter().flat_map(|c| c.rows.iter()))
        .chain(mask_lines.iter().flat_map(|m| m.rows.iter()))
        .map(|(_, v)| v[0].max(v[1]))
        .max()
        .unwrap_or(1);
    let n = edge_lines.header_n.unwrap_or(max_seen);

    let (categories, covs) = match &cov_lines {
        None => (1, Vec::new()),
        Some(c) => {
            let categories = c.header_c.ok_or(GlpmError::MissingCategoryCount)?;
            let mut covs = Vec::with_capacity(c.rows.len());
            for (_, v) in &c.rows {
                if v[2] == 0 || v[2] > categories {
                    return Err(GlpmError::CovariateOutOfRange {
                        category: v[2],
                        categories,
                    });
                }
                covs.push((v[0] - 1, v[1] - 1, v[2] - 1));
            }
            (categories, covs)
        }
    };
    let edge_pairs: Vec<_> = edge_lines.rows.iter().map(|(_, v)| (v[0] - 1, v[1] - 1)).collect();
    let masked: Vec<_> = mask_lines
        .iter()
        .flat_map(|m| m.rows.iter())
        .map(|(_, v)| (v[0] - 1, v[1] - 1))
        .collect();
    Network::new(n, categories, &edge_pairs, &covs, &masked)
}

pub fn load_network_files(
    edges: &Path,
    covariates: Option<&Path>,
    mask: Option<&Path>,
) -> Result<Network> {
    let open = |p: &Path| File::open(p).map(BufReader::new);
    load_network(
        open(edges)?,
        covariates.map(open).transpose()?,
        mask.map(open).transpose()?,
    )
}

/// Writes the edge list (with `#n=` header), covariate file and mask file.
pub fn write_network_text(network: &Network) -> (String, String, String) {
    use std::fmt::Write;
    let mut edges = format!("#n={}\n", network.n);
    for d in &network.edges {
        let _ = writeln!(edges, "{}\t{}", d.i + 1, d.j + 1);
    }
    let mut covs = format!("#C={}\n", network.num_categories);
    let mut mask = String::from("# unobserved dyads\n");
    for j in 1..network.n {
        for i in 0..j {
            let d = Dyad { i, j };
            let c = network.category(d);
            if c != 0 {
                let _ = writeln!(covs, "{}\t{}\t{}", i + 1, j + 1, c + 1);
            }
            if network.status(d) == DyadStatus::Unobserved {
                let _ = writeln!(mask, "{}\t{}", i + 1, j + 1);
            }
        }
    }
    (edges, covs, mask)
}
