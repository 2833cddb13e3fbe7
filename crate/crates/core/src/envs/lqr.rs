//! Linear-quadratic control with distractor observations. The hidden state
//! evolves as s' = A s + B a; the agent sees o = [0.1 W_c; W_d] s, where W_c
//! is shared across environments and each environment draws its own
//! semi-orthogonal distractor map W_d.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{random_orthogonal, random_semi_orthogonal, Mat};
use crate::rng::Rng;

pub const LQR_STATE_DIM: usize = 20;
pub const LQR_ACTION_DIM: usize = 20;
/// Scale applied to the invariant block of the observation map.
pub const INVARIANT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqrSystem {
    pub a: Mat,
    pub b: Mat,
    pub q: Mat,
    pub r: Mat,
    /// Shared invariant feature map, n_s x n_s orthogonal.
    pub w_c: Mat,
    /// Per-environment distractor map, n_d x n_s with orthonormal columns.
    pub w_d: Mat,
    pub n_s: usize,
    pub n_a: usize,
    pub n_d: usize,
}

impl LqrSystem {
    pub fn obs_dim(&self) -> usize {
        self.n_s + self.n_d
    }

    /// Observation map C = [0.1 W_c; W_d], as a (n_s + n_d) x n_s matrix.
    pub fn observation_matrix(&self) -> Mat {
        let mut c = Mat::zeros(self.obs_dim(), self.n_s);
        for i in 0..self.n_s {
            for j in 0..self.n_s {
                c[(i, j)] = INVARIANT_SCALE * self.w_c[(i, j)];
            }
        }
        for i in 0..self.n_d {
            for j in 0..self.n_s {
                c[(self.n_s + i, j)] = self.w_d[(i, j)];
            }
        }
        c
    }

    pub fn observe(&self, state: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.obs_dim());
        for i in 0..self.n_s {
            let mut acc = 0.0;
            for j in 0..self.n_s {
                acc += INVARIANT_SCALE * self.w_c[(i, j)] * state[j];
            }
            out.push(acc);
        }
        for i in 0..self.n_d {
            let mut acc = 0.0;
            for j in 0..self.n_s {
                acc += self.w_d[(i, j)] * state[j];
            }
            out.push(acc);
        }
        out
    }
}

/// Training pair plus unseen-test environments built from one seed.
#[derive(Debug, Clone)]
pub struct LqrBuild {
    pub train_envs: Vec<LqrSystem>,
    pub test_envs: Vec<LqrSystem>,
}

/// Two training environments sharing (A, B, Q, R, W_c) plus `n_test`
/// evaluation environments, each with its own fresh distractor map.
pub fn lqr_build(seed: u64, n_d: usize, n_test: usize) -> Result<LqrBuild> {
    if n_d < LQR_STATE_DIM {
        return Err(Error::InvalidArgument(format!(
            "n_d = {n_d} is below the state dimension {LQR_STATE_DIM}; \
             semi-orthogonality is impossible"
        )));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let a = random_orthogonal(&mut rng, LQR_STATE_DIM).scale(0.8);
    let b = Mat::identity(LQR_STATE_DIM);
    let q = Mat::identity(LQR_STATE_DIM);
    let r = Mat::identity(LQR_ACTION_DIM);
    let w_c = random_orthogonal(&mut rng, LQR_STATE_DIM);

    let make_env = |rng: &mut Rng| -> Result<LqrSystem> {
        let w_d = random_semi_orthogonal(rng, n_d, LQR_STATE_DIM)?;
        Ok(LqrSystem {
            a: a.clone(),
            b: b.clone(),
            q: q.clone(),
            r: r.clone(),
            w_c: w_c.clone(),
            w_d,
            n_s: LQR_STATE_DIM,
            n_a: LQR_ACTION_DIM,
            n_d,
        })
    };

    let train_envs = vec![make_env(&mut rng)?, make_env(&mut rng)?];
    let mut test_envs = Vec::with_capacity(n_test);
    for _ in 0..n_test {
        test_envs.push(make_env(&mut rng)?);
    }
    Ok(LqrBuild {
        train_envs,
        test_envs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distractor_maps_have_orthonormal_columns() {
        let build = lqr_build(3, 40, 2).unwrap();
        for env in build.train_envs.iter().chain(&build.test_envs) {
            let gram = env.w_d.transpose().matmul(&env.w_d);
            assert!(gram.sub(&Mat::identity(LQR_STATE_DIM)).frob_norm() <= 1e-10);
        }
    }

    #[test]
    fn dynamics_matrix_has_spectral_radius_08() {
        let build = lqr_build(5, 40, 0).unwrap();
        let rho = build.train_envs[0].a.spectral_radius();
        assert!((rho - 0.8).abs() <= 1e-10, "rho = {rho}");
    }

    #[test]
    fn same_seed_reproduces_environments() {
        let a = lqr_build(11, 40, 3).unwrap();
        let b = lqr_build(11, 40, 3).unwrap();
        assert_eq!(a.train_envs, b.train_envs);
        assert_eq!(a.test_envs, b.test_envs);
    }

    #[test]
    fn training_pair_shares_everything_but_distractors() {
        let build = lqr_build(2, 40, 0).unwrap();
        let (x, y) = (&build.train_envs[0], &build.train_envs[1]);
        assert_eq!(x.a, y.a);
        assert_eq!(x.w_c, y.w_c);
        assert_ne!(x.w_d, y.w_d);
    }

    #[test]
    fn small_distractor_dimension_rejected() {
        assert!(lqr_build(1, 10, 0).is_err());
    }

    #[test]
    fn observation_stacks_invariant_and_distractor_blocks() {
        let build = lqr_build(7, 25, 0).unwrap();
        let env = &build.train_envs[0];
        let mut rng = Rng::seed_from_u64(0);
        let s: Vec<f64> = (0..env.n_s).map(|_| rng.normal()).collect();
        let obs = env.observe(&s);
        assert_eq!(obs.len(), env.obs_dim());
        let via_matrix = env.observation_matrix().matvec(&s);
        for (a, b) in obs.iter().zip(&via_matrix) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
