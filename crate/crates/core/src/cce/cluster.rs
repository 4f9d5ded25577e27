use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::geom::{self, Vec3};
use crate::model::SpinModel;
use crate::{Error, Result};

/// A set of bath spins, members strictly ascending.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cluster {
    members: Vec<usize>,
}

impl Cluster {
    pub fn new(mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidModel(format!("cluster {members:?} repeats a spin")));
        }
        Ok(Cluster { members })
    }

    pub fn empty() -> Self {
        Cluster { members: Vec::new() }
    }

    pub fn single(j: usize) -> Self {
        Cluster { members: vec![j] }
    }

    pub fn pair(a: usize, b: usize) -> Self {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        assert!(a != b, "pair cluster needs two distinct spins");
        Cluster { members: vec![a, b] }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn order(&self) -> usize {
        self.members.len()
    }

    /// Subset selected by the bits of `mask` (bit i ↔ i-th member).
    pub fn subset(&self, mask: usize) -> Cluster {
        Cluster {
            members: self
                .members
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &m)| m)
                .collect(),
        }
    }
}

/// Canonical order: by size, then lexicographically by members.
pub fn canonical_sort(clusters: &mut [Cluster]) {
    clusters.sort_by(|a, b| a.order().cmp(&b.order()).then_with(|| a.members.cmp(&b.members)));
}

/// Pairs of positions within `cutoff`, found with a uniform cell grid.
pub fn neighbour_pairs(positions: &[Vec3], cutoff: f64) -> Vec<(usize, usize)> {
    if positions.is_empty() || !(cutoff > 0.0) {
        return Vec::new();
    }
    let cell = cutoff;
    let key = |p: &Vec3| -> [i64; 3] {
        [
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        ]
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in positions.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let mut out = Vec::new();
    for (i, p) in positions.iter().enumerate() {
        let c = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &j in list {
                            if j > i && geom::distance(p, &positions[j]) <= cutoff {
                                out.push((i, j));
                            }
                        }
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// All clusters up to `order` members. With a cutoff, pairs are spins
/// within `cutoff` Å and larger clusters are connected under that
/// neighbour relation; without one every subset is included.
pub fn enumerate_clusters_at(positions: &[Vec3], order: usize, cutoff: Option<f64>) -> Result<Vec<Cluster>> {
    if order == 0 {
        return Err(Error::Config("cluster order must be at least 1".into()));
    }
    let n = positions.len();
    let mut out: Vec<Cluster> = (0..n).map(Cluster::single).collect();
    if order == 1 || n < 2 {
        return Ok(out);
    }
    let adjacency: Vec<Vec<usize>> = match cutoff {
        Some(c) => {
            let mut adj = vec![Vec::new(); n];
            for (a, b) in neighbour_pairs(positions, c) {
                adj[a].push(b);
                adj[b].push(a);
            }
            adj
        }
        None => (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect(),
    };
    let mut level: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for _size in 2..=order.min(n) {
        let mut next: BTreeSet<Vec<usize>> = BTreeSet::new();
        for members in &level {
            for &m in members {
                for &nb in &adjacency[m] {
                    if members.binary_search(&nb).is_ok() {
                        continue;
                    }
                    let mut grown = members.clone();
                    let pos = grown.binary_search(&nb).unwrap_err();
                    grown.insert(pos, nb);
                    next.insert(grown);
                }
            }
        }
        level = next.into_iter().collect();
        out.extend(level.iter().cloned().map(|members| Cluster { members }));
        if level.is_empty() {
            break;
        }
    }
    canonical_sort(&mut out);
    Ok(out)
}

pub fn enumerate_clusters(model: &SpinModel, order: usize, cutoff: Option<f64>) -> Result<Vec<Cluster>> {
    let positions: Vec<Vec3> = model.bath_sites.iter().map(|s| s.position).collect();
    enumerate_clusters_at(&positions, order, cutoff)
}

/// Every proper non-empty subset of a cluster that is connected through
/// the family's own pair clusters must itself be in the family.
pub fn check_closure(clusters: &[Cluster]) -> Result<()> {
    let present: HashSet<&[usize]> = clusters.iter().map(|c| c.members()).collect();
    let edges: HashSet<(usize, usize)> = clusters
        .iter()
        .filter(|c| c.order() == 2)
        .map(|c| (c.members[0], c.members[1]))
        .collect();
    for c in clusters {
        let s = c.order();
        if s < 2 {
            continue;
        }
        for &m in c.members() {
            if !present.contains(&[m][..]) {
                return Err(Error::Closure {
                    cluster: c.members.clone(),
                    missing: vec![m],
                });
            }
        }
        if s == 2 {
            continue;
        }
        for mask in 1..(1usize << s) - 1 {
            let sub = c.subset(mask);
            if sub.order() >= 2 && is_connected(sub.members(), &edges) && !present.contains(sub.members()) {
                return Err(Error::Closure {
                    cluster: c.members.clone(),
                    missing: sub.members,
                });
            }
        }
    }
    Ok(())
}

fn is_connected(members: &[usize], edges: &HashSet<(usize, usize)>) -> bool {
    let mut seen = vec![false; members.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..members.len() {
            if !seen[j] {
                let (a, b) = (members[i].min(members[j]), members[i].max(members[j]));
                if edges.contains(&(a, b)) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, spacing: f64) -> Vec<Vec3> {
        (0..n).map(|i| [i as f64 * spacing, 0.0, 0.0]).collect()
    }

    #[test]
    fn three_spins_all_pairs() {
        let c = enumerate_clusters_at(&line(3, 4.0), 2, None).unwrap();
        let m: Vec<Vec<usize>> = c.iter().map(|c| c.members().to_vec()).collect();
        assert_eq!(m, vec![vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn order_one_is_singletons() {
        let c = enumerate_clusters_at(&line(7, 4.0), 1, None).unwrap();
        assert_eq!(c.len(), 7);
        assert!(c.iter().all(|c| c.order() == 1));
    }

    #[test]
    fn full_order_is_power_set() {
        let c = enumerate_clusters_at(&line(5, 4.0), 5, None).unwrap();
        assert_eq!(c.len(), 31);
        check_closure(&c).unwrap();
    }

    #[test]
    fn cutoff_grows_connected_clusters() {
        // Chain 0-1-2-3 with spacing 4 and cutoff 5: pairs are neighbours.
        let c = enumerate_clusters_at(&line(4, 4.0), 3, Some(5.0)).unwrap();
        let m: Vec<Vec<usize>> = c.iter().map(|c| c.members().to_vec()).collect();
        assert_eq!(
            m,
            vec![
                vec![0],
                vec![1],
                vec![2],
                vec![3],
                vec![0, 1],
                vec![1, 2],
                vec![2, 3],
                vec![0, 1, 2],
                vec![1, 2, 3]
            ]
        );
        check_closure(&c).unwrap();
    }

    #[test]
    fn closure_detects_missing_subcluster() {
        let c = vec![Cluster::single(0), Cluster::pair(0, 1)];
        assert!(matches!(check_closure(&c), Err(Error::Closure { .. })));
        let c = vec![
            Cluster::single(0),
            Cluster::single(1),
            Cluster::single(2),
            Cluster::pair(0, 1),
            Cluster::pair(1, 2),
            Cluster::pair(0, 2),
            Cluster::new(vec![0, 1, 2]).unwrap(),
        ];
        check_closure(&c).unwrap();
        let mut chain: Vec<Cluster> = (0..4).map(Cluster::single).collect();
        chain.extend([Cluster::pair(0, 1), Cluster::pair(1, 2), Cluster::pair(2, 3)]);
        chain.push(Cluster::new(vec![0, 1, 2]).unwrap());
        chain.push(Cluster::new(vec![0, 1, 2, 3]).unwrap());
        let err = check_closure(&chain).unwrap_err();
        assert!(matches!(err, Error::Closure { ref missing, .. } if missing == &vec![1, 2, 3]));
    }

    #[test]
    fn cell_grid_matches_brute_force() {
        let pts: Vec<Vec3> = (0..200)
            .map(|i| {
                let x = i as f64;
                [(x * 1.7).sin() * 15.0, (x * 0.31).cos() * 15.0, (x * 2.9).sin() * 15.0]
            })
            .collect();
        let fast = neighbour_pairs(&pts, 6.0);
        let mut slow = Vec::new();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                if geom::distance(&pts[i], &pts[j]) <= 6.0 {
                    slow.push((i, j));
                }
            }
        }
        assert_eq!(fast, slow);
    }
}
