//! Pairwise coordinate ascent for the SVDD dual
//!
//! ```text
//! max  Σ_i α_i K_ii − Σ_ij α_i α_j K_ij   s.t.  Σ α = 1,  0 ≤ α_i ≤ C = 1/(νN)
//! ```
//!
//! Each step moves mass between the maximal KKT-violating pair, the only
//! two-variable move that preserves the equality constraint.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the maximal KKT violation falls below this.
    pub tol: f64,
    pub max_pair_updates: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_pair_updates: 100_000,
        }
    }
}

/// Dense symmetric kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Gram<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Gram<T> {
    pub fn from_row_major(n: usize, data: Vec<T>) -> Result<Self> {
        crate::linalg::check_dim(n * n, data.len())?;
        if n == 0 {
            return Err(Error::EmptyInput("gram matrix"));
        }
        Ok(Self { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `Σ_i α_i K_ii − αᵀKα`.
    pub fn dual_objective(&self, alphas: &[T]) -> T {
        let mut linear = T::zero();
        let mut quad = T::zero();
        for (i, &ai) in alphas.iter().enumerate() {
            if ai == T::zero() {
                continue;
            }
            linear = linear + ai * self.get(i, i);
            let row = self.row(i);
            let ka: T = row.iter().zip(alphas).fold(T::zero(), |acc, (&k, &a)| acc + k * a);
            quad = quad + ai * ka;
        }
        linear - quad
    }
}

#[derive(Debug, Clone)]
pub struct DualSolution<T> {
    pub alphas: Vec<T>,
    /// Box bound `C = 1/(νN)`.
    pub upper: T,
    pub objective: T,
    pub pair_updates: usize,
    pub max_violation: T,
}

/// Smallest feasible box bound check shared by the solver and the model.
pub(crate) fn box_bound<T: Real>(nu: T, n: usize) -> Result<T> {
    if !(nu > T::zero() && nu <= T::one()) {
        return Err(Error::InvalidParameter(format!("nu = {nu} must lie in (0, 1]")));
    }
    let n_t = T::from_usize(n).expect("n fits");
    // νN ≥ 1 up to rounding in the product
    if nu * n_t < T::one() - T::epsilon() * T::lit(8.0) {
        return Err(Error::Infeasible(format!(
            "nu·N = {} < 1 leaves no feasible multipliers",
            nu * n_t
        )));
    }
    Ok((T::one() / (nu * n_t)).min(T::one()))
}

/// Solves the dual by maximal-violating-pair updates.
pub fn solve_dual<T: Real>(gram: &Gram<T>, nu: T, opts: &SolverOptions) -> Result<DualSolution<T>> {
    let n = gram.n();
    let upper = box_bound(nu, n)?;
    let two = T::lit(2.0);
    let tol = T::lit(opts.tol);

    // Feasible start: fill multipliers to the bound in index order.
    let mut alphas = vec![T::zero(); n];
    let mut remaining = T::one();
    for a in alphas.iter_mut() {
        if remaining <= T::zero() {
            break;
        }
        *a = upper.min(remaining);
        remaining = remaining - *a;
    }

    // gradient of αᵀKα − Σ α_i K_ii, the negated dual objective
    let mut grad: Vec<T> = (0..n).map(|i| -gram.get(i, i)).collect();
    for (j, &aj) in alphas.iter().enumerate() {
        if aj > T::zero() {
            for (g, &k) in grad.iter_mut().zip(gram.row(j)) {
                *g = *g + two * aj * k;
            }
        }
    }

    let mut updates = 0usize;
    let max_violation = loop {
        // i may grow (α_i < C), j may shrink (α_j > 0)
        let mut up: Option<(usize, T)> = None;
        let mut low: Option<(usize, T)> = None;
        for k in 0..n {
            let g = grad[k];
            if alphas[k] < upper && up.map_or(true, |(_, best)| g < best) {
                up = Some((k, g));
            }
            if alphas[k] > T::zero() && low.map_or(true, |(_, best)| g > best) {
                low = Some((k, g));
            }
        }
        let (Some((i, gi)), Some((j, gj))) = (up, low) else {
            break T::zero();
        };
        let violation = gj - gi;
        if violation < tol || i == j {
            break violation.max(T::zero());
        }
        if updates >= opts.max_pair_updates {
            return Err(Error::Convergence {
                what: "SVDD dual solver",
                iterations: updates,
                residual: violation.to_f64_lossy(),
            });
        }

        let eta = gram.get(i, i) + gram.get(j, j) - two * gram.get(i, j);
        let room_i = upper - alphas[i];
        let room_j = alphas[j];
        let unconstrained = if eta > T::epsilon() {
            violation / (two * eta)
        } else {
            T::infinity()
        };
        let step = unconstrained.min(room_i).min(room_j);
        // exact bound hits keep the box constraint free of drift
        alphas[i] = if step == room_i { upper } else { alphas[i] + step };
        alphas[j] = if step == room_j { T::zero() } else { alphas[j] - step };

        let (row_i, row_j) = (gram.row(i), gram.row(j));
        let scaled = two * step;
        for ((g, &ki), &kj) in grad.iter_mut().zip(row_i).zip(row_j) {
            *g = *g + scaled * (ki - kj);
        }
        updates += 1;
    };

    let objective = gram.dual_objective(&alphas);
    Ok(DualSolution {
        alphas,
        upper,
        objective,
        pair_updates: updates,
        max_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_distant_points_split_evenly() {
        let far = (-50.0f64).exp();
        let gram = Gram::from_row_major(2, vec![1.0, far, far, 1.0]).unwrap();
        let sol = solve_dual(&gram, 1.0, &SolverOptions::default()).unwrap();
        assert_eq!(sol.upper, 0.5);
        assert_eq!(sol.alphas, vec![0.5, 0.5]);
    }

    #[test]
    fn identical_points_only_need_feasibility() {
        let n = 6;
        let gram = Gram::from_row_major(n, vec![1.0f64; n * n]).unwrap();
        let sol = solve_dual(&gram, 0.5, &SolverOptions::default()).unwrap();
        let sum: f64 = sol.alphas.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(sol.alphas.iter().all(|&a| (0.0..=sol.upper).contains(&a)));
        assert!(sol.objective.abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_invalid_nu() {
        let gram = Gram::from_row_major(2, vec![1.0f64, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(solve_dual(&gram, 0.4, &SolverOptions::default()), Err(Error::Infeasible(_))));
        assert!(matches!(solve_dual(&gram, 0.0, &SolverOptions::default()), Err(Error::InvalidParameter(_))));
        assert!(matches!(solve_dual(&gram, 1.5, &SolverOptions::default()), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn iteration_cap_reports_violation() {
        // five points on a line; the greedy start is far from optimal
        let k = |a: f64, b: f64| (-(a - b) * (a - b)).exp();
        let xs = [0.0, 0.5, 3.0, 3.2, 1.1];
        let data = xs.iter().flat_map(|&a| xs.iter().map(move |&b| k(a, b))).collect();
        let gram = Gram::from_row_major(5, data).unwrap();
        let opts = SolverOptions {
            tol: 1e-12,
            max_pair_updates: 1,
        };
        match solve_dual(&gram, 0.5, &opts) {
            Err(Error::Convergence { iterations, residual, .. }) => {
                assert_eq!(iterations, 1);
                assert!(residual > 1e-12);
            }
            other => panic!("expected a convergence failure, got {other:?}"),
        }
    }
}
