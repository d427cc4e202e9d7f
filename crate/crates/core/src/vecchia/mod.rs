//! Vecchia approximations: orderings, conditioning sets, blockwise
//! likelihood terms and the sparse precision factor they induce.
//!
//! All per-block quantities live in *positions* of the plan's ordering:
//! position `p` holds original observation `perm[p]`. Blocks are contiguous
//! runs of positions, and each block conditions on a sorted set of earlier
//! positions.

mod kdtree;
mod likelihood;
mod ordering;

pub use kdtree::KdTree;
pub use likelihood::{
    assemble_precision_factor, block_sum, factor_block, precision_matvec, vecchia_nll,
    vecchia_nll_parts, BlockFactor, SparsePrecisionFactor,
};
pub use ordering::{coordinate_order, maximin_order};

use crate::error::{Error, Result};
use crate::points::{dist2, Points};
use std::fmt::Write;

/// Point counts below which nearest neighbours are found by brute force.
pub const BRUTE_FORCE_LIMIT: usize = 5000;
const KD_BATCH: usize = 2048;

/// How points are ordered before conditioning.
#[derive(Clone, Debug, PartialEq)]
pub enum Ordering {
    Maximin,
    /// Lexicographic with the given axis as the major key.
    Coordinate(usize),
    Identity,
}

impl Ordering {
    pub fn permutation(&self, locs: &Points) -> Result<Vec<usize>> {
        match self {
            Ordering::Maximin => Ok(maximin_order(locs)),
            Ordering::Coordinate(axis) => {
                if *axis >= locs.dim() {
                    return Err(Error::Config(format!(
                        "coordinate ordering axis {axis} out of range for {}-d locations",
                        locs.dim()
                    )));
                }
                Ok(coordinate_order(locs, *axis))
            }
            Ordering::Identity => Ok((0..locs.len()).collect()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Ordering::Maximin => "maximin".into(),
            Ordering::Coordinate(a) => format!("coordinate{a}"),
            Ordering::Identity => "identity".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "maximin" => Ok(Ordering::Maximin),
            "identity" | "none" => Ok(Ordering::Identity),
            "coordinate" => Ok(Ordering::Coordinate(0)),
            _ => s
                .strip_prefix("coordinate")
                .and_then(|a| a.parse().ok())
                .map(Ordering::Coordinate)
                .ok_or_else(|| Error::Config(format!("unknown ordering '{s}'"))),
        }
    }
}

/// Conditioning structure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Conditioning {
    /// Singleton blocks conditioning on the `m` nearest earlier points.
    Nn { m: usize },
    /// Blocks of `b` consecutive points conditioning on the previous `p`
    /// blocks.
    Chunked { b: usize, p: usize },
    /// No approximation: one block holding every point, which is the same
    /// density as conditioning each point on all earlier ones.
    Full,
}

impl Conditioning {
    fn describe(&self) -> String {
        match self {
            Conditioning::Nn { m } => format!("nn {m}"),
            Conditioning::Chunked { b, p } => format!("chunked {b} {p}"),
            Conditioning::Full => "full".into(),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let num = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad conditioning mode '{s}'")))
        };
        match parts.first().copied() {
            Some("nn") => Ok(Conditioning::Nn { m: num(1)? }),
            Some("chunked") => Ok(Conditioning::Chunked {
                b: num(1)?,
                p: num(2)?,
            }),
            Some("full") => Ok(Conditioning::Full),
            _ => Err(Error::Parse(format!("bad conditioning mode '{s}'"))),
        }
    }
}

/// Permutation, block partition and conditioning sets.
#[derive(Clone, Debug, PartialEq)]
pub struct VecchiaPlan {
    /// `perm[p]` is the original index of the point at position `p`.
    pub perm: Vec<usize>,
    /// Block `j` covers positions `starts[j]..starts[j + 1]`.
    pub starts: Vec<usize>,
    /// Sorted earlier positions each block conditions on.
    pub cond: Vec<Vec<usize>>,
    pub ordering: String,
    pub mode: Conditioning,
}

impl VecchiaPlan {
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn n_blocks(&self) -> usize {
        self.cond.len()
    }

    pub fn block(&self, j: usize) -> std::ops::Range<usize> {
        self.starts[j]..self.starts[j + 1]
    }

    /// Positions of block `j`'s joint covariance: conditioning set first,
    /// then the block itself (ascending).
    pub fn block_cols(&self, j: usize) -> Vec<usize> {
        let mut cols = self.cond[j].clone();
        cols.extend(self.block(j));
        cols
    }

    /// `u` (original order) rearranged into positions.
    pub fn to_positions(&self, u: &[f64]) -> Vec<f64> {
        self.perm.iter().map(|&i| u[i]).collect()
    }

    /// Inverse of [`VecchiaPlan::to_positions`].
    pub fn from_positions(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (p, &i) in self.perm.iter().enumerate() {
            out[i] = u[p];
        }
        out
    }

    /// Upper bound on the number of nonzeros in the precision factor.
    pub fn factor_nnz_bound(&self) -> usize {
        (0..self.n_blocks())
            .map(|j| {
                let b = self.block(j).len();
                b * (b + self.cond[j].len())
            })
            .sum()
    }

    /// Checks the structural invariants.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.perm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.perm.len(),
            });
        }
        let mut seen = vec![false; n];
        for &i in &self.perm {
            if i >= n || seen[i] {
                return Err(Error::Config("plan permutation is not a bijection".into()));
            }
            seen[i] = true;
        }
        if self.starts.first() != Some(&0)
            || self.starts.last() != Some(&n)
            || self.starts.windows(2).any(|w| w[0] >= w[1])
            || self.starts.len() != self.cond.len() + 1
        {
            return Err(Error::Config(
                "plan blocks do not partition the points".into(),
            ));
        }
        for (j, c) in self.cond.iter().enumerate() {
            if c.windows(2).any(|w| w[0] >= w[1]) || c.last().is_some_and(|&p| p >= self.starts[j])
            {
                return Err(Error::Config(format!(
                    "conditioning set of block {j} is not a sorted subset of the past"
                )));
            }
        }
        Ok(())
    }

    /// Text serialization (see [`VecchiaPlan::from_text`]).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# vecchia plan");
        let _ = writeln!(out, "ordering = {}", self.ordering);
        let _ = writeln!(out, "mode = {}", self.mode.describe());
        let _ = writeln!(out, "n = {}", self.len());
        let _ = writeln!(out, "perm = {}", join(&self.perm));
        for j in 0..self.n_blocks() {
            let r = self.block(j);
            let _ = writeln!(
                out,
                "block = {} {} : {}",
                r.start,
                r.end,
                join(&self.cond[j])
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut ordering = None;
        let mut mode = None;
        let mut n = None;
        let mut perm = None;
        let mut starts = vec![0];
        let mut cond = Vec::new();
        let bad = |what: &str| Error::Parse(format!("plan file: bad {what}"));
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad("line"))?;
            let v = v.trim();
            match k.trim() {
                "ordering" => ordering = Some(v.to_string()),
                "mode" => mode = Some(Conditioning::parse(v)?),
                "n" => n = Some(v.parse::<usize>().map_err(|_| bad("n"))?),
                "perm" => perm = Some(parse_list(v).ok_or_else(|| bad("perm"))?),
                "block" => {
                    let (range, c) = v.split_once(':').ok_or_else(|| bad("block"))?;
                    let r = parse_list(range).ok_or_else(|| bad("block"))?;
                    if r.len() != 2 || r[0] != *starts.last().unwrap_or(&0) {
                        return Err(bad("block range"));
                    }
                    starts.push(r[1]);
                    cond.push(parse_list(c).ok_or_else(|| bad("block"))?);
                }
                other => return Err(Error::Parse(format!("plan file: unknown key '{other}'"))),
            }
        }
        let plan = VecchiaPlan {
            perm: perm.ok_or_else(|| bad("perm (missing)"))?,
            starts,
            cond,
            ordering: ordering.ok_or_else(|| bad("ordering (missing)"))?,
            mode: mode.ok_or_else(|| bad("mode (missing)"))?,
        };
        plan.validate(n.ok_or_else(|| bad("n (missing)"))?)?;
        Ok(plan)
    }
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_list(s: &str) -> Option<Vec<usize>> {
    s.split_whitespace().map(|t| t.parse().ok()).collect()
}

/// Builds the block partition and conditioning sets for points already
/// ordered by `perm`.
pub fn build_conditioning(
    locs: &Points,
    perm: Vec<usize>,
    ordering: &str,
    mode: Conditioning,
) -> Result<VecchiaPlan> {
    let n = locs.len();
    if n == 0 {
        return Err(Error::InvalidParameter("no locations".into()));
    }
    let (starts, cond) = match mode {
        Conditioning::Nn { m } => {
            if m == 0 {
                return Err(Error::Config("nn conditioning needs m >= 1".into()));
            }
            let ordered = locs.select(&perm);
            ((0..=n).collect(), nearest_earlier(&ordered, m))
        }
        Conditioning::Chunked { b, p } => {
            if b == 0 || p == 0 {
                return Err(Error::Config(
                    "chunked conditioning needs b >= 1 and p >= 1".into(),
                ));
            }
            let mut starts: Vec<usize> = (0..n).step_by(b).collect();
            starts.push(n);
            let cond = (0..starts.len() - 1)
                .map(|j| (starts[j.saturating_sub(p)]..starts[j]).collect())
                .collect();
            (starts, cond)
        }
        Conditioning::Full => (vec![0, n], vec![Vec::new()]),
    };
    let plan = VecchiaPlan {
        perm,
        starts,
        cond,
        ordering: ordering.to_string(),
        mode,
    };
    plan.validate(n)?;
    Ok(plan)
}

/// Orders the points and builds the conditioning sets in one call.
pub fn plan(locs: &Points, ordering: &Ordering, mode: Conditioning) -> Result<VecchiaPlan> {
    let perm = ordering.permutation(locs)?;
    build_conditioning(locs, perm, &ordering.name(), mode)
}

/// For each position `j`, the `min(m, j)` nearest positions among `0..j`,
/// sorted ascending. Ties go to the lower position.
fn nearest_earlier(ordered: &Points, m: usize) -> Vec<Vec<usize>> {
    let n = ordered.len();
    let mut out = Vec::with_capacity(n);
    let brute = |j: usize, from: usize, best: &mut Vec<(f64, usize)>| {
        let q = ordered.point(j);
        for i in from..j {
            let c = (dist2(q, ordered.point(i)), i);
            if best.len() < m {
                let at = best.partition_point(|x| x.0 < c.0 || (x.0 == c.0 && x.1 < c.1));
                best.insert(at, c);
            } else if c.0 < best[m - 1].0 || (c.0 == best[m - 1].0 && c.1 < best[m - 1].1) {
                best.pop();
                let at = best.partition_point(|x| x.0 < c.0 || (x.0 == c.0 && x.1 < c.1));
                best.insert(at, c);
            }
        }
    };
    if n < BRUTE_FORCE_LIMIT {
        for j in 0..n {
            let mut best = Vec::with_capacity(m + 1);
            brute(j, 0, &mut best);
            out.push(sorted_indices(best));
        }
        return out;
    }
    let mut tree: Option<KdTree> = None;
    let mut built = 0;
    for j in 0..n {
        if j >= built + KD_BATCH {
            built = j;
            tree = Some(KdTree::build(ordered, built));
        }
        let mut best = match &tree {
            Some(t) => t.nearest(ordered.point(j), m),
            None => Vec::with_capacity(m + 1),
        };
        brute(j, built.min(j), &mut best);
        out.push(sorted_indices(best));
    }
    out
}

fn sorted_indices(best: Vec<(f64, usize)>) -> Vec<usize> {
    let mut v: Vec<usize> = best.into_iter().map(|c| c.1).collect();
    v.sort_unstable();
    v
}
