//! Dense transportation solver.
//!
//! Successive shortest paths on the complete bipartite graph
//! `source -> supply rows -> demand columns -> sink`, with Johnson
//! potentials so every Dijkstra pass runs on nonnegative reduced costs.
//! Dijkstra is the O(V²) array variant since the graph is complete.
//!
//! Masses are `f64`. When they are small integers (the uniform-weight case
//! is rescaled to integers by the caller) every augmentation is exact.

/// Minimum of `Σ flow_ij * cost[i * m + j]` over nonnegative flows with row
/// sums `supply` and column sums `demand`. `demand` is rescaled to the total
/// of `supply` if the two totals differ by rounding.
pub(crate) fn min_cost_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> f64 {
    let n = supply.len();
    let m = demand.len();
    debug_assert_eq!(cost.len(), n * m);
    let total_s: f64 = supply.iter().sum();
    let total_d: f64 = demand.iter().sum();
    if n == 0 || m == 0 || total_s <= 0.0 || total_d <= 0.0 {
        return 0.0;
    }
    let mut rem_s = supply.to_vec();
    let mut rem_d: Vec<f64> = if total_s == total_d {
        demand.to_vec()
    } else {
        demand.iter().map(|d| d * total_s / total_d).collect()
    };
    let eps = total_s * 1e-13;
    let mut flow = vec![0.0f64; n * m];

    // node ids: source, rows 1..=n, columns n+1..=n+m, sink
    let src = 0;
    let sink = n + m + 1;
    let v_count = n + m + 2;
    let row = |i: usize| 1 + i;
    let col = |j: usize| 1 + n + j;

    let mut pot = vec![0.0f64; v_count];
    let mut dist = vec![f64::INFINITY; v_count];
    let mut done = vec![false; v_count];
    let mut parent = vec![usize::MAX; v_count];

    loop {
        dist.fill(f64::INFINITY);
        done.fill(false);
        parent.fill(usize::MAX);
        dist[src] = 0.0;

        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..v_count {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u == sink {
                break;
            }
            let du = dist[u];
            let relax = |v: usize, c: f64, dist: &mut [f64], parent: &mut [usize]| {
                let nd = du + (c + pot[u] - pot[v]).max(0.0);
                if nd < dist[v] {
                    dist[v] = nd;
                    parent[v] = u;
                }
            };
            if u == src {
                for i in 0..n {
                    if rem_s[i] > eps && !done[row(i)] {
                        relax(row(i), 0.0, &mut dist, &mut parent);
                    }
                }
            } else if u <= n {
                let i = u - 1;
                for j in 0..m {
                    if !done[col(j)] {
                        relax(col(j), cost[i * m + j], &mut dist, &mut parent);
                    }
                }
            } else {
                let j = u - 1 - n;
                for i in 0..n {
                    if flow[i * m + j] > eps && !done[row(i)] {
                        relax(row(i), -cost[i * m + j], &mut dist, &mut parent);
                    }
                }
                if rem_d[j] > eps && !done[sink] {
                    relax(sink, 0.0, &mut dist, &mut parent);
                }
            }
        }

        if !dist[sink].is_finite() {
            break;
        }
        let dt = dist[sink];
        for v in 0..v_count {
            pot[v] += dist[v].min(dt);
        }

        // Walk the path back from the sink to find the bottleneck.
        let mut bottleneck = f64::INFINITY;
        let mut v = sink;
        while v != src {
            let u = parent[v];
            if u == src {
                bottleneck = bottleneck.min(rem_s[v - 1]);
            } else if v == sink {
                bottleneck = bottleneck.min(rem_d[u - 1 - n]);
            } else if u > n {
                // backward arc: column u -> row v cancels flow
                bottleneck = bottleneck.min(flow[(v - 1) * m + (u - 1 - n)]);
            }
            v = u;
        }
        let mut v = sink;
        while v != src {
            let u = parent[v];
            if u == src {
                rem_s[v - 1] -= bottleneck;
            } else if v == sink {
                rem_d[u - 1 - n] -= bottleneck;
            } else if u <= n {
                flow[(u - 1) * m + (v - 1 - n)] += bottleneck;
            } else {
                flow[(v - 1) * m + (u - 1 - n)] -= bottleneck;
            }
            v = u;
        }
    }

    flow.iter().zip(cost).map(|(f, c)| f * c).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair() {
        assert_eq!(min_cost_transport(&[1.0], &[1.0], &[5.0]), 5.0);
    }

    #[test]
    fn prefers_cheaper_crossing() {
        // cost matrix [[4, 1], [2, 3]]: anti-diagonal costs 3, diagonal 7
        assert_eq!(min_cost_transport(&[1.0, 1.0], &[1.0, 1.0], &[4.0, 1.0, 2.0, 3.0]), 3.0);
    }

    #[test]
    fn needs_flow_cancellation() {
        // Greedy row-by-row would send row 0 to col 0 (cost 1); optimum
        // reroutes: row0->col1 (2) + row1->col0 (1) = 3 vs 1 + 10 = 11.
        let cost = [1.0, 2.0, 1.0, 10.0];
        assert_eq!(min_cost_transport(&[1.0, 1.0], &[1.0, 1.0], &cost), 3.0);
    }

    #[test]
    fn splits_mass_across_columns() {
        // one row of mass 3 into three unit columns
        assert_eq!(min_cost_transport(&[3.0], &[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), 6.0);
    }

    #[test]
    fn rescales_mismatched_totals() {
        let c = min_cost_transport(&[0.5, 0.5], &[1.0 + 1e-12], &[2.0, 4.0]);
        assert!((c - 3.0).abs() < 1e-9);
    }
}
