//! The probability simplex: weight vectors, Euclidean projection, and a
//! deterministic solver for smooth convex minimization over the simplex.
//!
//! The solver is projected gradient descent with Armijo backtracking
//! (initialized at the uniform vector, which doubles as the tie rule for
//! degenerate problems), followed by an active-set Newton polish that
//! drives the KKT residual to near machine precision.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregation weights on the probability simplex: nonnegative, summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() {
            return Err(Error::invalid_config("weights must be non-empty"));
        }
        if gamma.iter().any(|&g| !(g >= 0.0)) {
            return Err(Error::invalid_config("weights must be nonnegative"));
        }
        let sum: f64 = gamma.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(Error::invalid_config(format!(
                "weights must sum to 1 (got {sum})"
            )));
        }
        Ok(SimplexWeights(gamma))
    }

    /// The k-th coordinate vector e_k.
    pub fn unit(len: usize, k: usize) -> Self {
        let mut g = vec![0.0; len];
        g[k] = 1.0;
        SimplexWeights(g)
    }

    pub fn uniform(len: usize) -> Self {
        SimplexWeights(vec![1.0 / len as f64; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Euclidean projection onto the probability simplex by the
/// sort-and-threshold rule.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    let mut rho = 0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            rho = i + 1;
            theta = t;
        }
    }
    debug_assert!(rho > 0, "projection requires finite input");
    v.iter().map(|&vi| (vi - theta).max(0.0)).collect()
}

/// A smooth convex objective restricted to the simplex.
pub trait SimplexObjective {
    fn value(&self, gamma: &[f64]) -> f64;
    fn gradient(&self, gamma: &[f64], out: &mut [f64]);
    /// Dense Hessian for the Newton polish; `None` disables polishing.
    fn hessian(&self, gamma: &[f64]) -> Option<Array2<f64>>;
}

pub struct SolveOptions {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 5_000,
            step_tolerance: 1e-10,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
        }
    }
}

pub struct SimplexSolution {
    pub gamma: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// First-order optimality residual in the simplex tangent space.
    pub kkt_residual: f64,
}

/// Stationarity residual on the simplex: with d the gradient and
/// nu = gamma' d, optimality requires d_k = nu on the support and
/// d_k >= nu off it.
pub fn kkt_residual(gamma: &[f64], grad: &[f64]) -> f64 {
    let nu: f64 = gamma.iter().zip(grad.iter()).map(|(&g, &d)| g * d).sum();
    let mut res = 0.0f64;
    for (&g, &d) in gamma.iter().zip(grad.iter()) {
        if g > 1e-10 {
            res = res.max((d - nu).abs());
        } else {
            res = res.max((nu - d).max(0.0));
        }
    }
    res
}

/// Minimizes a smooth convex objective over the simplex, starting at the
/// uniform vector. Deterministic: fixed initialization and iteration order.
pub fn minimize_on_simplex<O: SimplexObjective>(obj: &O, k: usize, opts: &SolveOptions) -> SimplexSolution {
    minimize_on_simplex_from(obj, SimplexWeights::uniform(k).0, opts)
}

/// As [`minimize_on_simplex`] from an explicit feasible start.
pub fn minimize_on_simplex_from<O: SimplexObjective>(
    obj: &O,
    start: Vec<f64>,
    opts: &SolveOptions,
) -> SimplexSolution {
    let k = start.len();
    let mut gamma = start;
    let mut value = obj.value(&gamma);
    let mut grad = vec![0.0; k];
    let mut step = 1.0f64;
    let mut iterations = 0;

    // Phase 1: projected gradient with Armijo backtracking.
    for _ in 0..opts.max_iterations {
        iterations += 1;
        obj.gradient(&gamma, &mut grad);
        let mut accepted = false;
        let mut t = (step * 2.0).min(1e8);
        for _ in 0..60 {
            let trial: Vec<f64> = gamma
                .iter()
                .zip(grad.iter())
                .map(|(&g, &d)| g - t * d)
                .collect();
            let cand = project_to_simplex(&trial);
            let inner: f64 = grad
                .iter()
                .zip(cand.iter().zip(gamma.iter()))
                .map(|(&d, (&c, &g))| d * (c - g))
                .sum();
            let cand_val = obj.value(&cand);
            if cand_val <= value + opts.armijo_c * inner {
                let move_sz = cand
                    .iter()
                    .zip(gamma.iter())
                    .map(|(&c, &g)| (c - g).abs())
                    .fold(0.0f64, f64::max);
                gamma = cand;
                value = cand_val;
                step = t;
                accepted = true;
                if move_sz < opts.step_tolerance {
                    return polish(obj, gamma, value, iterations, opts);
                }
                break;
            }
            t *= opts.backtrack_factor;
        }
        if !accepted {
            break;
        }
    }
    polish(obj, gamma, value, iterations, opts)
}

/// Active-set Newton refinement. Solves the equality-constrained Newton
/// system on the current free set, clips to the nonnegative orthant with a
/// line search, and repeats. Falls back to the PGD iterate when the system
/// is singular.
fn polish<O: SimplexObjective>(
    obj: &O,
    mut gamma: Vec<f64>,
    mut value: f64,
    mut iterations: usize,
    opts: &SolveOptions,
) -> SimplexSolution {
    let k = gamma.len();
    let mut grad = vec![0.0; k];
    for _ in 0..60 {
        obj.gradient(&gamma, &mut grad);
        let res = kkt_residual(&gamma, &grad);
        if res <= 1e-13 {
            break;
        }
        let Some(hess) = obj.hessian(&gamma) else {
            break;
        };
        iterations += 1;

        // Free set: coordinates off their bound, plus bound coordinates whose
        // reduced gradient wants to move inward.
        let nu: f64 = gamma.iter().zip(grad.iter()).map(|(&g, &d)| g * d).sum();
        let free: Vec<usize> = (0..k)
            .filter(|&j| gamma[j] > 1e-12 || grad[j] < nu - 1e-12)
            .collect();
        if free.len() < 2 {
            break;
        }
        let m = free.len();
        // KKT system: [H_FF 1; 1' 0] [d; nu] = [-g_F; 0]
        let mut a = Array2::<f64>::zeros((m + 1, m + 1));
        let mut b = Array1::<f64>::zeros(m + 1);
        for (r, &i) in free.iter().enumerate() {
            for (c, &j) in free.iter().enumerate() {
                a[[r, c]] = hess[[i, j]];
            }
            a[[r, r]] += 1e-12; // keep the system solvable under collinearity
            a[[r, m]] = 1.0;
            a[[m, r]] = 1.0;
            b[r] = -grad[i];
        }
        let Some(sol) = solve_dense(a, b) else {
            break;
        };
        let mut direction = vec![0.0; k];
        for (r, &i) in free.iter().enumerate() {
            direction[i] = sol[r];
        }
        // Descent check; a non-descent direction means the quadratic model is
        // unreliable here, so stop polishing.
        let dd: f64 = grad.iter().zip(direction.iter()).map(|(&g, &d)| g * d).sum();
        if !(dd < 0.0) {
            break;
        }
        // Longest feasible step keeping gamma >= 0.
        let mut t_max = 1.0f64;
        for j in 0..k {
            if direction[j] < 0.0 {
                t_max = t_max.min(-gamma[j] / direction[j]);
            }
        }
        let mut t = t_max.min(1.0);
        let mut improved = false;
        for _ in 0..50 {
            let cand: Vec<f64> = gamma
                .iter()
                .zip(direction.iter())
                .map(|(&g, &d)| (g + t * d).max(0.0))
                .collect();
            // Renormalize the tiny drift from clipping.
            let s: f64 = cand.iter().sum();
            let cand: Vec<f64> = cand.iter().map(|&c| c / s).collect();
            let cand_val = obj.value(&cand);
            if cand_val <= value + opts.armijo_c * t * dd {
                gamma = cand;
                value = cand_val;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    obj.gradient(&gamma, &mut grad);
    let kkt = kkt_residual(&gamma, &grad);
    SimplexSolution {
        gamma,
        value,
        iterations,
        kkt_residual: kkt,
    }
}

/// Gaussian elimination with partial pivoting; `None` when singular.
pub(crate) fn solve_dense(mut a: Array2<f64>, mut b: Array1<f64>) -> Option<Array1<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a[[r, col]].abs() > a[[pivot, col]].abs() {
                pivot = r;
            }
        }
        if a[[pivot, col]].abs() < 1e-300 {
            return None;
        }
        if pivot != col {
            for c in 0..n {
                let tmp = a[[col, c]];
                a[[col, c]] = a[[pivot, c]];
                a[[pivot, c]] = tmp;
            }
            b.swap(col, pivot);
        }
        let d = a[[col, col]];
        for r in col + 1..n {
            let f = a[[r, col]] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[[r, c]] -= f * a[[col, c]];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[[r, c]] * x[c];
        }
        x[r] = acc / a[[r, r]];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Quadratic {
        m: Array2<f64>,
        c: Array1<f64>,
    }

    impl SimplexObjective for Quadratic {
        fn value(&self, gamma: &[f64]) -> f64 {
            let g = Array1::from_vec(gamma.to_vec());
            g.dot(&self.m.dot(&g)) - 2.0 * self.c.dot(&g)
        }
        fn gradient(&self, gamma: &[f64], out: &mut [f64]) {
            let g = Array1::from_vec(gamma.to_vec());
            let v = 2.0 * (self.m.dot(&g) - &self.c);
            out.copy_from_slice(v.as_slice().unwrap());
        }
        fn hessian(&self, _gamma: &[f64]) -> Option<Array2<f64>> {
            Some(2.0 * self.m.clone())
        }
    }

    #[test]
    fn projection_of_feasible_point_is_identity() {
        let v = vec![0.2, 0.3, 0.5];
        let p = project_to_simplex(&v);
        for (a, b) in v.iter().zip(p.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_known_case() {
        // Projection of (1, 0.5) is ((1 + 0.25), ...) -> (0.75, 0.25)
        let p = project_to_simplex(&[1.0, 0.5]);
        assert!((p[0] - 0.75).abs() < 1e-12);
        assert!((p[1] - 0.25).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex(v in proptest::collection::vec(-10.0f64..10.0, 1..12)) {
            let p = project_to_simplex(&v);
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn projection_is_closest_feasible_point(
            v in proptest::collection::vec(-3.0f64..3.0, 2..6),
            w in proptest::collection::vec(0.01f64..1.0, 2..6),
        ) {
            // Any feasible point must be at least as far from v as the
            // projection is.
            let k = v.len().min(w.len());
            let v = &v[..k];
            let total: f64 = w[..k].iter().sum();
            let feasible: Vec<f64> = w[..k].iter().map(|&x| x / total).collect();
            let p = project_to_simplex(v);
            let d_proj: f64 = v.iter().zip(p.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            let d_feas: f64 = v.iter().zip(feasible.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert!(d_proj <= d_feas + 1e-9);
        }
    }

    #[test]
    fn solver_finds_interior_quadratic_minimum() {
        // min ||gamma - target||^2 with target inside the simplex.
        let target = [0.2, 0.3, 0.5];
        let quad = Quadratic {
            m: Array2::eye(3),
            c: Array1::from_vec(target.to_vec()),
        };
        let sol = minimize_on_simplex(&quad, 3, &SolveOptions::default());
        for (g, t) in sol.gamma.iter().zip(target.iter()) {
            assert!((g - t).abs() < 1e-9, "{} vs {}", g, t);
        }
        assert!(sol.kkt_residual <= 1e-6);
    }

    #[test]
    fn solver_finds_vertex_solution() {
        // Linear-ish objective pushing all mass to coordinate 2.
        let mut m = Array2::eye(3);
        m *= 1e-3;
        let quad = Quadratic {
            m,
            c: Array1::from_vec(vec![0.0, 0.0, 1.0]),
        };
        let sol = minimize_on_simplex(&quad, 3, &SolveOptions::default());
        assert!((sol.gamma[2] - 1.0).abs() < 1e-9);
        assert!(sol.kkt_residual <= 1e-6);
    }

    #[test]
    fn duplicated_coordinates_split_evenly() {
        // Symmetric problem: the uniform start keeps symmetric coordinates
        // equal, which is the documented tie rule.
        let m = Array2::from_shape_vec((2, 2), vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let quad = Quadratic {
            m,
            c: Array1::zeros(2),
        };
        let sol = minimize_on_simplex(&quad, 2, &SolveOptions::default());
        assert!((sol.gamma[0] - 0.5).abs() < 1e-12);
        assert!((sol.gamma[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn weights_validate() {
        assert!(SimplexWeights::new(vec![0.5, 0.5]).is_ok());
        assert!(SimplexWeights::new(vec![0.6, 0.6]).is_err());
        assert!(SimplexWeights::new(vec![-0.1, 1.1]).is_err());
        assert!(SimplexWeights::new(vec![]).is_err());
    }
}
