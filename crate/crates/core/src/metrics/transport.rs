//! Exact discrete optimal transport by successive shortest paths on the
//! bipartite transportation graph, with a dual certificate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimal transport value plus the evidence that it is optimal: a feasible
/// coupling and feasible dual potentials with matching objective values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingCertificate {
    pub value: f64,
    /// Row-major |p| x |q| coupling with marginals (p, q).
    pub coupling: Vec<f64>,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Dual potentials satisfying u_i - v_j <= cost_ij.
    pub potentials_u: Vec<f64>,
    pub potentials_v: Vec<f64>,
}

impl CouplingCertificate {
    pub fn coupling_at(&self, i: usize, j: usize) -> f64 {
        self.coupling[i * self.n_cols + j]
    }

    pub fn dual_value(&self, p: &[f64], q: &[f64]) -> f64 {
        let up: f64 = p.iter().zip(&self.potentials_u).map(|(a, b)| a * b).sum();
        let vq: f64 = q.iter().zip(&self.potentials_v).map(|(a, b)| a * b).sum();
        up - vq
    }

    /// Largest violation across marginal and dual-feasibility constraints.
    pub fn max_violation(&self, cost: &[f64], p: &[f64], q: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n_rows {
            let row_sum: f64 = (0..self.n_cols).map(|j| self.coupling_at(i, j)).sum();
            worst = worst.max((row_sum - p[i]).abs());
        }
        for j in 0..self.n_cols {
            let col_sum: f64 = (0..self.n_rows).map(|i| self.coupling_at(i, j)).sum();
            worst = worst.max((col_sum - q[j]).abs());
        }
        for i in 0..self.n_rows {
            for j in 0..self.n_cols {
                let slack = self.potentials_u[i] - self.potentials_v[j] - cost[i * self.n_cols + j];
                worst = worst.max(slack);
                worst = worst.max(-self.coupling_at(i, j));
            }
        }
        worst
    }
}

/// Exact 1-Wasserstein transport between discrete distributions `p` and `q`
/// under the given ground `cost` (row-major |p| x |q|).
pub fn wasserstein1(cost: &[f64], p: &[f64], q: &[f64]) -> Result<CouplingCertificate> {
    let n = p.len();
    let m = q.len();
    if cost.len() != n * m {
        return Err(Error::DimensionMismatch(format!(
            "cost matrix is {} entries, expected {}",
            cost.len(),
            n * m
        )));
    }
    if cost.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::InvalidArgument(
            "costs must be finite and nonnegative".into(),
        ));
    }
    if p.iter().any(|x| *x < 0.0) || q.iter().any(|x| *x < 0.0) {
        return Err(Error::InvalidDistribution("negative mass".into()));
    }
    let mass_p: f64 = p.iter().sum();
    let mass_q: f64 = q.iter().sum();
    if mass_p <= 0.0 || mass_q <= 0.0 {
        return Err(Error::InvalidDistribution("zero-mass vector".into()));
    }
    if (mass_p - mass_q).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!(
            "mass mismatch: {mass_p} vs {mass_q}"
        )));
    }

    // Node layout: sources 0..n, sinks n..n+m. Potentials pi keep reduced
    // costs nonnegative so Dijkstra stays valid after each augmentation.
    let mut remaining_supply = p.to_vec();
    let mut remaining_demand = q.to_vec();
    let mut flow = vec![0.0f64; n * m];
    let mut pi = vec![0.0f64; n + m];

    // Mass below this threshold is rounding residue, not real supply.
    let eps_mass = 1e-15 * mass_p.max(1.0);
    let max_augmentations = 16 * (n + m) * (n + m) + 1024;
    let mut augmentations = 0;

    loop {
        let src = match remaining_supply
            .iter()
            .position(|&r| r > eps_mass)
        {
            Some(i) => i,
            None => break,
        };
        augmentations += 1;
        if augmentations > max_augmentations {
            return Err(Error::NonConvergence {
                iterations: augmentations,
                residual: remaining_supply.iter().sum(),
            });
        }

        // Dijkstra over reduced costs from `src` until some sink with
        // remaining demand is settled.
        let total = n + m;
        let mut dist = vec![f64::INFINITY; total];
        let mut settled = vec![false; total];
        let mut parent: Vec<Option<usize>> = vec![None; total];
        dist[src] = 0.0;
        let mut target: Option<usize> = None;
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..total {
                if !settled[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            settled[u] = true;
            if u >= n && remaining_demand[u - n] > eps_mass {
                target = Some(u);
                break;
            }
            if u < n {
                // Forward arcs source u -> every sink.
                for j in 0..m {
                    let v = n + j;
                    if settled[v] {
                        continue;
                    }
                    let rc = cost[u * m + j] + pi[u] - pi[v];
                    let nd = dist[u] + rc.max(0.0);
                    if nd < dist[v] {
                        dist[v] = nd;
                        parent[v] = Some(u);
                    }
                }
            } else {
                // Backward arcs sink -> source exist where flow is positive.
                let j = u - n;
                for i in 0..n {
                    if settled[i] || flow[i * m + j] <= 0.0 {
                        continue;
                    }
                    let rc = -cost[i * m + j] - pi[i] + pi[u];
                    let nd = dist[u] + rc.max(0.0);
                    if nd < dist[i] {
                        dist[i] = nd;
                        parent[i] = Some(u);
                    }
                }
            }
        }
        let target = target.ok_or_else(|| {
            Error::InvalidDistribution("demand exhausted before supply".into())
        })?;

        // Update potentials so every settled node keeps tight reduced costs.
        let d_target = dist[target];
        for v in 0..total {
            pi[v] += dist[v].min(d_target);
        }

        // Bottleneck along the augmenting path.
        let mut bottleneck = remaining_supply[src].min(remaining_demand[target - n]);
        let mut v = target;
        while let Some(u) = parent[v] {
            if v >= n {
                // forward arc u -> v carries new mass; no bound
            } else {
                // backward arc: reduces existing flow v <- u on (v, u - n)
                bottleneck = bottleneck.min(flow[v * m + (u - n)]);
            }
            v = u;
        }

        // Apply the augmentation.
        let mut v = target;
        while let Some(u) = parent[v] {
            if v >= n {
                flow[u * m + (v - n)] += bottleneck;
            } else {
                flow[v * m + (u - n)] -= bottleneck;
            }
            v = u;
        }
        remaining_supply[src] -= bottleneck;
        remaining_demand[target - n] -= bottleneck;
    }

    let value: f64 = flow
        .iter()
        .zip(cost)
        .map(|(f, c)| f * c)
        .sum();
    let potentials_u: Vec<f64> = (0..n).map(|i| -pi[i]).collect();
    let potentials_v: Vec<f64> = (0..m).map(|j| -pi[n + j]).collect();
    Ok(CouplingCertificate {
        value,
        coupling: flow,
        n_rows: n,
        n_cols: m,
        potentials_u,
        potentials_v,
    })
}

/// Transport value between distributions over supports of a pairwise metric
/// table. Zero-mass rows and columns are dropped before solving.
pub fn wasserstein1_under_metric(
    table: &[f64],
    n_cols: usize,
    p: &[f64],
    q: &[f64],
) -> Result<f64> {
    let support_p: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let support_q: Vec<usize> = (0..q.len()).filter(|&j| q[j] > 0.0).collect();
    if support_p.len() == 1 && support_q.len() == 1 {
        return Ok(table[support_p[0] * n_cols + support_q[0]]);
    }
    let sub_cost: Vec<f64> = support_p
        .iter()
        .flat_map(|&i| support_q.iter().map(move |&j| table[i * n_cols + j]))
        .collect();
    let sub_p: Vec<f64> = support_p.iter().map(|&i| p[i]).collect();
    let sub_q: Vec<f64> = support_q.iter().map(|&j| q[j]).collect();
    Ok(wasserstein1(&sub_cost, &sub_p, &sub_q)?.value)
}
