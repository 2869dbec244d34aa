//! Bottom-up grouping of tasks with similar predictions.
//!
//! Distances are Euclidean over min–max normalized embeddings, clusters are
//! joined by average linkage, and a cluster stops growing once its energy
//! (summed over members, averaged over machines) exceeds the threshold. Ties
//! go to the pair whose smallest members come first in the task list.
//!
//! Identical embeddings are at distance zero, so they always merge before
//! anything else; each run of identical tasks is therefore cut into frozen
//! chunks in task order directly, and only the leftovers go through the
//! general linkage loop.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::TaskEmbedding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: usize,
    pub member_ids: Vec<String>,
    pub centroid: Vec<f64>,
    /// Summed member energy per machine.
    pub total_energy_j: Vec<f64>,
    /// Summed member runtime per machine.
    pub total_runtime_s: Vec<f64>,
}

/// Clusters the tasks behind `embeddings` (interleaved runtime/energy per
/// machine). Clusters are ordered by their first member.
pub fn cluster_tasks(embeddings: &[TaskEmbedding], threshold_j: f64) -> Vec<Cluster> {
    let rows: Vec<&[f64]> = embeddings.iter().map(|e| e.vector.as_slice()).collect();
    let groups = cluster_indices(&rows, &(0..rows.len()).collect::<Vec<_>>(), threshold_j);
    groups
        .into_iter()
        .enumerate()
        .map(|(cluster_id, members)| {
            let dim = embeddings[members[0]].vector.len();
            let mut sum = vec![0.0; dim];
            for &t in &members {
                for (s, v) in sum.iter_mut().zip(&embeddings[t].vector) {
                    *s += v;
                }
            }
            let k = members.len() as f64;
            Cluster {
                cluster_id,
                member_ids: members.iter().map(|&t| embeddings[t].task_id.clone()).collect(),
                centroid: sum.iter().map(|s| s / k).collect(),
                total_energy_j: sum.iter().skip(1).step_by(2).copied().collect(),
                total_runtime_s: sum.iter().step_by(2).copied().collect(),
            }
        })
        .collect()
}

/// Mean over machines of an interleaved (runtime, energy) total.
fn mean_energy(total: &[f64]) -> f64 {
    let machines = total.len() / 2;
    if machines == 0 {
        return 0.0;
    }
    total.iter().skip(1).step_by(2).sum::<f64>() / machines as f64
}

fn add_into(acc: &mut [f64], row: &[f64]) {
    for (a, v) in acc.iter_mut().zip(row) {
        *a += v;
    }
}

/// Core routine over distinct embedding rows. `task_row[t]` selects the row
/// of task `t`. Returns member task indices per cluster, each sorted, with
/// clusters ordered by first member.
pub(crate) fn cluster_indices(rows: &[&[f64]], task_row: &[usize], threshold_j: f64) -> Vec<Vec<usize>> {
    if task_row.is_empty() {
        return Vec::new();
    }
    let normalized = normalize(rows, task_row);

    // Tasks with bit-identical normalized rows, in task order.
    let mut group_of_bits: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut group_of_row = Vec::with_capacity(rows.len());
    let mut group_point: Vec<usize> = Vec::new();
    for (r, v) in normalized.iter().enumerate() {
        let key: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
        let next = group_of_bits.len();
        let g = *group_of_bits.entry(key).or_insert(next);
        if g == next {
            group_point.push(r);
        }
        group_of_row.push(g);
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); group_point.len()];
    for (t, &r) in task_row.iter().enumerate() {
        members[group_of_row[r]].push(t);
    }

    let dim = rows[0].len();
    let mut done: Vec<Vec<usize>> = Vec::new();
    // Non-frozen leftovers: (members, summed raw row, representative row).
    let mut open: Vec<(Vec<usize>, Vec<f64>, usize)> = Vec::new();
    for (g, tasks) in members.into_iter().enumerate() {
        let mut chunk = Vec::new();
        let mut total = vec![0.0; dim];
        for t in tasks {
            chunk.push(t);
            add_into(&mut total, rows[task_row[t]]);
            if mean_energy(&total) > threshold_j {
                done.push(std::mem::take(&mut chunk));
                total.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        if !chunk.is_empty() {
            open.push((chunk, total, group_point[g]));
        }
    }

    // Average linkage over the leftovers. Each leftover holds identical
    // points, so the initial pairwise distance is that of its representatives.
    open.sort_by_key(|c| c.0[0]);
    let k = open.len();
    let mut dist = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let d = euclidean(&normalized[open[i].2], &normalized[open[j].2]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }
    let mut alive: Vec<bool> = vec![true; k];
    let mut active = k;
    let mut slots: Vec<Option<(Vec<usize>, Vec<f64>)>> = open.into_iter().map(|(m, t, _)| Some((m, t))).collect();
    while active >= 2 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..k {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..k {
                if !alive[j] {
                    continue;
                }
                let first = |x: usize| slots[x].as_ref().map(|s| s.0[0]).unwrap_or(usize::MAX);
                let better = match best {
                    None => true,
                    Some((d, bi, bj)) => {
                        dist[i][j] < d || (dist[i][j] == d && (first(i), first(j)) < (first(bi), first(bj)))
                    }
                };
                if better {
                    best = Some((dist[i][j], i, j));
                }
            }
        }
        let (_, a, b) = best.expect("at least two active clusters");
        let (mb, tb) = slots[b].take().expect("alive slot");
        let (ma, ta) = slots[a].as_mut().expect("alive slot");
        let (na, nb) = (ma.len() as f64, mb.len() as f64);
        ma.extend(mb);
        ma.sort_unstable();
        add_into(ta, &tb);
        alive[b] = false;
        active -= 1;
        for x in 0..k {
            if alive[x] && x != a {
                let d = (na * dist[a][x] + nb * dist[b][x]) / (na + nb);
                dist[a][x] = d;
                dist[x][a] = d;
            }
        }
        if mean_energy(ta) > threshold_j {
            alive[a] = false;
            active -= 1;
        }
    }
    done.extend(slots.into_iter().flatten().map(|(m, _)| m));
    done.sort_by_key(|m| m[0]);
    done
}

/// Min–max scaling per dimension over the rows that occur; constant
/// dimensions map to zero.
fn normalize(rows: &[&[f64]], task_row: &[usize]) -> Vec<Vec<f64>> {
    let dim = rows[0].len();
    let mut used = vec![false; rows.len()];
    for &r in task_row {
        used[r] = true;
    }
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for row in rows.iter().zip(&used).filter(|(_, u)| **u).map(|(row, _)| row) {
        for d in 0..dim {
            lo[d] = lo[d].min(row[d]);
            hi[d] = hi[d].max(row[d]);
        }
    }
    rows.iter()
        .map(|row| {
            (0..dim)
                .map(|d| {
                    let range = hi[d] - lo[d];
                    if range > 0.0 {
                        (row[d] - lo[d]) / range
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
