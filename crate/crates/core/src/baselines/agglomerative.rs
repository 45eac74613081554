use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::clustering::squared_euclidean;
use crate::error::{CdfError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Single => "single",
            Linkage::Complete => "complete",
            Linkage::Average => "average",
        })
    }
}

impl FromStr for Linkage {
    type Err = CdfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            _ => Err(CdfError::InvalidConfig(format!("unknown linkage `{s}`"))),
        }
    }
}

/// One dendrogram step: clusters `a` and `b` (by representative point) joined at `height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    /// Sorted by height.
    pub merges: Vec<Merge>,
}

/// Upper-triangle distance storage.
struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn new(data: &ArrayView2<'_, f64>) -> Self {
        let n = data.nrows();
        let data = data.as_standard_layout();
        let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            let xi = data.row(i);
            let xi = xi.as_slice().unwrap();
            for j in i + 1..n {
                d.push(squared_euclidean(xi, data.row(j).as_slice().unwrap()).sqrt());
            }
        }
        Self { n, d }
    }

    #[inline]
    fn index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.n * i - i * (i + 1) / 2 + j - i - 1
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.index(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.d[k] = v;
    }
}

/// Full dendrogram by the nearest-neighbor chain algorithm.
pub fn dendrogram(data: &ArrayView2<'_, f64>, linkage: Linkage) -> Result<Dendrogram> {
    let n = data.nrows();
    if n == 0 {
        return Err(CdfError::InsufficientData("no samples to cluster".into()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(CdfError::InvalidData(
            "agglomerative input contains non-finite values".into(),
        ));
    }
    let mut dist = Condensed::new(data);
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut chain: Vec<usize> = Vec::new();
    let mut remaining = n;
    while remaining > 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|a| *a).expect("an active cluster"));
        }
        let a = *chain.last().unwrap();
        let prev = if chain.len() >= 2 {
            Some(chain[chain.len() - 2])
        } else {
            None
        };
        // Prefer the chain predecessor on ties so the chain always terminates.
        let mut best = prev;
        let mut best_d = prev.map_or(f64::INFINITY, |p| dist.get(a, p));
        for k in 0..n {
            if !active[k] || k == a {
                continue;
            }
            let d = dist.get(a, k);
            if d < best_d {
                best_d = d;
                best = Some(k);
            }
        }
        let b = best.expect("another active cluster");
        if Some(b) == prev {
            chain.pop();
            chain.pop();
            let (keep, gone) = if a < b { (a, b) } else { (b, a) };
            merges.push(Merge {
                a: keep,
                b: gone,
                height: best_d,
            });
            let (na, nb) = (size[keep] as f64, size[gone] as f64);
            for k in 0..n {
                if !active[k] || k == keep || k == gone {
                    continue;
                }
                let (dk, dg) = (dist.get(keep, k), dist.get(gone, k));
                let updated = match linkage {
                    Linkage::Single => dk.min(dg),
                    Linkage::Complete => dk.max(dg),
                    Linkage::Average => (na * dk + nb * dg) / (na + nb),
                };
                dist.set(keep, k, updated);
            }
            active[gone] = false;
            size[keep] += size[gone];
            remaining -= 1;
        } else {
            chain.push(b);
        }
    }
    merges.sort_by(|x, y| x.height.total_cmp(&y.height));
    Ok(Dendrogram { n, merges })
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl Dendrogram {
    /// Flat labels `0..k` after applying the lowest `n - k` merges, numbered by first appearance.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.n {
            return Err(CdfError::InvalidConfig(format!(
                "cannot cut {} points into {k} clusters",
                self.n
            )));
        }
        let mut parent: Vec<usize> = (0..self.n).collect();
        for m in self.merges.iter().take(self.n - k) {
            let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
            parent[rb] = ra;
        }
        let mut label_of_root = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut labels = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let r = find(&mut parent, i);
            if label_of_root[r] == usize::MAX {
                label_of_root[r] = next;
                next += 1;
            }
            labels.push(label_of_root[r]);
        }
        Ok(labels)
    }
}
