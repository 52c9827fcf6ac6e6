//! Per-neuron least squares for incoming synaptic weights.
//!
//! For postsynaptic neuron `i` every usable transition `t -> t+1` contributes
//! one row
//!
//! ```text
//! A[t][j] = dt r_j^t
//! b[t]    = r_i^{t+1} - r_i^t - dt (0.04 (r_i^t)^2 + 5 r_i^t + 140 - u_i^t)
//! ```
//!
//! so that `A w - b` is the one-step prediction error of the membrane update.
//! The minimiser solves `A^T A w = A^T b`, which is formed explicitly and
//! reduced by Gaussian elimination with partial pivoting.

use crate::error::{Error, Result};
use crate::model::{intrinsic_drift, NeuronState, RecoveredTrace, TraceMatrix};

/// Pivots smaller than this fraction of the largest normal-matrix entry are
/// treated as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    n: usize,
    /// Row-major `rows x n` design matrix.
    a: Vec<f64>,
    b: Vec<f64>,
}

impl LinearSystem {
    pub fn new(n: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() * n {
            return Err(Error::Dimension {
                what: "design matrix entries",
                expected: b.len() * n,
                found: a.len(),
            });
        }
        Ok(Self { n, a, b })
    }

    /// Number of unknowns.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of equations.
    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.a[t * self.n..(t + 1) * self.n]
    }

    pub fn target(&self) -> &[f64] {
        &self.b
    }

    /// Per-row residual `A w - b`.
    pub fn residuals(&self, w: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|t| dot(self.row(t), w) - self.b[t])
            .collect()
    }

    /// `(A^T A, A^T b)`, with `A^T A` stored row-major.
    pub fn normal_equations(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let mut ata = vec![0.0; n * n];
        let mut atb = vec![0.0; n];
        for t in 0..self.rows() {
            let row = self.row(t);
            let bt = self.b[t];
            for j in 0..n {
                let x = row[j];
                atb[j] += x * bt;
                for k in j..n {
                    ata[j * n + k] += x * row[k];
                }
            }
        }
        for j in 0..n {
            for k in 0..j {
                ata[j * n + k] = ata[k * n + j];
            }
        }
        (ata, atb)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub w: Vec<f64>,
    /// Mean squared residual over the system's rows.
    pub mse: f64,
    /// Ratio of the largest to the smallest pivot magnitude met during
    /// elimination; large values indicate poor conditioning.
    pub condition_hint: f64,
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Builds neuron `i`'s system from all usable transitions.
pub fn assemble_system(trace: &TraceMatrix, rec: &RecoveredTrace, i: usize) -> Result<LinearSystem> {
    assemble_system_with(trace, rec, i, &AssembleOptions::default())
}

/// Which transitions enter a neuron's system beyond the default mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AssembleOptions {
    /// Transitions starting before this step are skipped.
    pub first_transition: usize,
    /// Also keep transitions that leave one of the neuron's own spikes
    /// (`spike[t]` set, `spike[t+1]` clear). They are written from the
    /// post-reset state `(c, u + d)`, which is what the simulator integrates,
    /// and are the only rows through which `c` is identifiable separately
    /// from `d`.
    pub reset_rows: bool,
}

/// Like [`assemble_system`] with explicit row selection.
pub fn assemble_system_with(trace: &TraceMatrix, rec: &RecoveredTrace, i: usize, opts: &AssembleOptions) -> Result<LinearSystem> {
    let n = trace.n();
    let steps = trace.steps();
    if rec.u.len() != steps || rec.usable.len() + 1 != steps {
        return Err(Error::Dimension {
            what: "recovered trace length",
            expected: steps,
            found: rec.u.len(),
        });
    }
    let dt = trace.dt();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for t in opts.first_transition..steps.saturating_sub(1) {
        let start = if rec.usable[t] {
            NeuronState::new(trace.sample(t, i), rec.u[t])
        } else if opts.reset_rows && trace.is_spike(t, i) && !trace.is_spike(t + 1, i) {
            rec.reset_state(t)
        } else {
            continue;
        };
        a.extend(trace.row(t).iter().map(|r| dt * r));
        b.push(trace.sample(t + 1, i) - start.v - intrinsic_drift(start.v, start.u, dt));
    }
    if b.len() < n {
        return Err(Error::InsufficientData {
            rows: b.len(),
            required: n,
        });
    }
    LinearSystem::new(n, a, b)
}

/// Solves a dense square system in place by Gaussian elimination with
/// partial pivoting. Returns the solution and the pivot-magnitude ratio.
pub fn gaussian_solve(mut m: Vec<f64>, mut rhs: Vec<f64>) -> Result<(Vec<f64>, f64)> {
    let n = rhs.len();
    if m.len() != n * n {
        return Err(Error::Dimension {
            what: "square matrix entries",
            expected: n * n,
            found: m.len(),
        });
    }
    let scale = m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let tol = PIVOT_TOLERANCE * scale;
    let (mut min_pivot, mut max_pivot) = (f64::INFINITY, 0.0_f64);

    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, m[r * n + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot.is_nan() || pivot <= tol || scale == 0.0 {
            return Err(Error::Singular { index: col, pivot });
        }
        min_pivot = min_pivot.min(pivot);
        max_pivot = max_pivot.max(pivot);
        if pivot_row != col {
            for k in 0..n {
                m.swap(col * n + k, pivot_row * n + k);
            }
            rhs.swap(col, pivot_row);
        }
        let diag = m[col * n + col];
        for r in col + 1..n {
            let factor = m[r * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            m[r * n + col] = 0.0;
            for k in col + 1..n {
                m[r * n + k] -= factor * m[col * n + k];
            }
            rhs[r] -= factor * rhs[col];
        }
    }

    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|k| m[r * n + k] * x[k]).sum();
        x[r] = (rhs[r] - tail) / m[r * n + r];
    }
    let ratio = if n == 0 { 1.0 } else { max_pivot / min_pivot };
    Ok((x, ratio))
}

/// Least-squares solution via `A^T A w = A^T b`.
pub fn solve_normal_equations(sys: &LinearSystem) -> Result<SolveReport> {
    solve_normal_equations_ridge(sys, 0.0)
}

/// Least squares with an optional ridge term: `(A^T A + lambda I) w = A^T b`.
pub fn solve_normal_equations_ridge(sys: &LinearSystem, lambda: f64) -> Result<SolveReport> {
    if sys.rows() < sys.n() {
        return Err(Error::InsufficientData {
            rows: sys.rows(),
            required: sys.n(),
        });
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidConfig(format!("ridge term must be non-negative, got {lambda}")));
    }
    let n = sys.n();
    let (mut ata, atb) = sys.normal_equations();
    for j in 0..n {
        ata[j * n + j] += lambda;
    }
    let (w, condition_hint) = gaussian_solve(ata, atb)?;
    let mse = residual_mse(sys, &w);
    Ok(SolveReport { w, mse, condition_hint })
}

/// Mean of squared row residuals `(A w - b)^2`.
pub fn residual_mse(sys: &LinearSystem, w: &[f64]) -> f64 {
    assert_eq!(w.len(), sys.n(), "weight vector length");
    if sys.rows() == 0 {
        return 0.0;
    }
    let sum: f64 = sys.residuals(w).iter().map(|r| r * r).sum();
    sum / sys.rows() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{recover_u_trace, NeuronParameters};

    fn system(rows: &[&[f64]], b: &[f64]) -> LinearSystem {
        let n = rows[0].len();
        LinearSystem::new(n, rows.iter().flat_map(|r| r.iter().copied()).collect(), b.to_vec()).unwrap()
    }

    #[test]
    fn identity_system() {
        let sys = system(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]], &[3.0, -1.5, 0.25]);
        let rep = solve_normal_equations(&sys).unwrap();
        assert_eq!(rep.w, vec![3.0, -1.5, 0.25]);
        assert_eq!(rep.mse, 0.0);
    }

    #[test]
    fn overdetermined_consistent_system() {
        let sys = system(&[&[1.0, 0.0], &[0.0, 2.0], &[1.0, 1.0]], &[1.0, 2.0, 2.0]);
        let rep = solve_normal_equations(&sys).unwrap();
        assert!((rep.w[0] - 1.0).abs() < 1e-14 && (rep.w[1] - 1.0).abs() < 1e-14);
        assert!(rep.mse <= 1e-20);
    }

    #[test]
    fn duplicated_columns_are_singular() {
        let sys = system(&[&[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0]], &[1.0, 2.0, 3.0]);
        assert!(matches!(solve_normal_equations(&sys), Err(Error::Singular { index: 1, .. })));
    }

    #[test]
    fn zero_matrix_is_singular_at_first_pivot() {
        let sys = system(&[&[0.0], &[0.0]], &[1.0, 2.0]);
        assert!(matches!(solve_normal_equations(&sys), Err(Error::Singular { index: 0, .. })));
    }

    #[test]
    fn underdetermined_system_rejected() {
        let sys = system(&[&[1.0, 2.0]], &[1.0]);
        assert!(matches!(
            solve_normal_equations(&sys),
            Err(Error::InsufficientData { rows: 1, required: 2 })
        ));
    }

    #[test]
    fn ridge_shrinks_solution() {
        let sys = system(&[&[1.0], &[1.0]], &[2.0, 2.0]);
        let plain = solve_normal_equations(&sys).unwrap();
        let ridge = solve_normal_equations_ridge(&sys, 2.0).unwrap();
        assert_eq!(plain.w, vec![2.0]);
        assert!((ridge.w[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn residual_mse_cases() {
        let sys = system(&[&[1.0, 0.0], &[0.0, 2.0], &[1.0, 1.0]], &[1.0, 2.0, 2.0]);
        assert!(residual_mse(&sys, &[1.0, 1.0]) <= 1e-20);
        let zero = system(&[&[1.0, 4.0], &[2.0, 3.0]], &[0.0, 0.0]);
        assert_eq!(residual_mse(&zero, &[0.0, 0.0]), 0.0);

        // mse(w* + delta e_j) - mse(w*) = delta^2 mean_t A[t][j]^2 for an exact w*.
        let delta = 0.125;
        for j in 0..2 {
            let mut w = vec![1.0, 1.0];
            w[j] += delta;
            let mean_sq: f64 = (0..3).map(|t| sys.row(t)[j].powi(2)).sum::<f64>() / 3.0;
            assert!((residual_mse(&sys, &w) - delta * delta * mean_sq).abs() < 1e-15);
        }
    }

    #[test]
    fn assemble_rows_and_mask() {
        let p = NeuronParameters::INTRINSICALLY_BURSTING;
        let trace = TraceMatrix::from_samples(1, 0.5, vec![-60.0, -61.0, -62.5]).unwrap();
        let rec = recover_u_trace(&trace, 0, &p);
        let sys = assemble_system(&trace, &rec, 0).unwrap();
        assert_eq!(sys.rows(), 2);
        assert_eq!(sys.row(0), &[-30.0]);
        assert_eq!(sys.row(1), &[-30.5]);
        let expected_b0 = -61.0 + 60.0 - 0.5 * (0.04 * 3600.0 - 300.0 + 140.0 + 11.0);
        assert!((sys.target()[0] - expected_b0).abs() < 1e-12);

        // Neuron 0 spikes at step 2: transitions 1->2 and 2->3 drop out.
        let samples = vec![-60.0, -65.0, -58.0, -64.0, 30.0, -63.0, -55.0, -62.0, -56.0, -61.0];
        let trace = TraceMatrix::from_samples(2, 0.5, samples).unwrap();
        let rec = recover_u_trace(&trace, 0, &p);
        assert_eq!(rec.usable, vec![true, false, false, true]);
        let sys = assemble_system(&trace, &rec, 0).unwrap();
        assert_eq!(sys.rows(), 2);
        assert_eq!(sys.row(1), &[-27.5, -31.0]);
        // Presynaptic spikes do not remove rows for neuron 1.
        let rec1 = recover_u_trace(&trace, 1, &p);
        assert_eq!(assemble_system(&trace, &rec1, 1).unwrap().rows(), 4);
    }

    #[test]
    fn assemble_insufficient_rows() {
        let p = NeuronParameters::INTRINSICALLY_BURSTING;
        let trace = TraceMatrix::from_samples(3, 0.5, vec![-60.0; 9]).unwrap();
        let rec = recover_u_trace(&trace, 0, &p);
        assert!(matches!(
            assemble_system(&trace, &rec, 0),
            Err(Error::InsufficientData { rows: 2, required: 3 })
        ));
    }
}
