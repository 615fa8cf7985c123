//! Finite-state continuous-time Markov chains over encoded alphabets.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Row-sum residual tolerated in a generator.
pub const GENERATOR_TOL: f64 = 1e-12;
/// Residual tolerated in `stationary' * generator = 0`.
pub const STATIONARY_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("generator must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("{labels} labels for a {n}-state generator")]
    LabelMismatch { labels: usize, n: usize },
    #[error("negative off-diagonal rate {value} at ({from}, {to})")]
    NegativeRate { from: String, to: String, value: f64 },
    #[error("left null space of the generator has dimension {0}; chain is not ergodic")]
    NotErgodic(usize),
    #[error("stationary solve residual {0} exceeds tolerance")]
    StationaryResidual(f64),
    #[error("lumping map is not exact: rate from {from} into group {group} varies by {spread}")]
    NotLumpable {
        from: String,
        group: String,
        spread: f64,
    },
}

/// A finite-state CTMC: state labels, generator matrix and stationary
/// distribution. Values are immutable once built; constructors guarantee
/// nonnegative off-diagonal rates, zero row sums and a unique stationary
/// vector.
#[derive(Clone, Debug)]
pub struct EncodedChain {
    pub labels: Vec<String>,
    pub generator: DMatrix<f64>,
    pub stationary: DVector<f64>,
}

impl EncodedChain {
    /// Builds a chain from off-diagonal rates. The diagonal of `rates` is
    /// ignored and replaced by the negated row sum; the stationary vector is
    /// solved numerically as the left null space of the generator.
    pub fn from_rates(labels: Vec<String>, rates: DMatrix<f64>) -> Result<Self, ChainError> {
        let n = rates.nrows();
        if rates.ncols() != n {
            return Err(ChainError::NotSquare {
                rows: n,
                cols: rates.ncols(),
            });
        }
        if labels.len() != n {
            return Err(ChainError::LabelMismatch {
                labels: labels.len(),
                n,
            });
        }
        let mut generator = rates;
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let x = generator[(i, j)];
                if x < 0.0 || !x.is_finite() {
                    return Err(ChainError::NegativeRate {
                        from: labels[i].clone(),
                        to: labels[j].clone(),
                        value: x,
                    });
                }
                row_sum += x;
            }
            generator[(i, i)] = -row_sum;
        }
        let stationary = solve_stationary(&generator)?;
        Ok(EncodedChain {
            labels,
            generator,
            stationary,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Indices of all states whose label satisfies the predicate.
    pub fn states_matching(&self, pred: impl Fn(&str) -> bool) -> Vec<usize> {
        (0..self.n()).filter(|&i| pred(&self.labels[i])).collect()
    }

    /// Stationary mass of a set of states.
    pub fn stationary_mass(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.stationary[i]).sum()
    }

    /// Collapses states according to `map` (label -> group label), checking
    /// strong lumpability: for every source state the total rate into each
    /// target group must not depend on which member of the source group it
    /// is. The spread tolerance is `GENERATOR_TOL` scaled by the largest
    /// rate.
    pub fn lump(&self, map: impl Fn(&str) -> String) -> Result<EncodedChain, ChainError> {
        let n = self.n();
        let mut group_labels: Vec<String> = Vec::new();
        let mut group_of = vec![0usize; n];
        for i in 0..n {
            let g = map(&self.labels[i]);
            group_of[i] = match group_labels.iter().position(|l| *l == g) {
                Some(k) => k,
                None => {
                    group_labels.push(g);
                    group_labels.len() - 1
                }
            };
        }
        let m = group_labels.len();
        let scale = self
            .generator
            .iter()
            .fold(1.0_f64, |acc, &x| acc.max(x.abs()));
        let tol = GENERATOR_TOL * scale;

        // Rate from state i into group h, excluding i's own group diagonal.
        let rate_into = |i: usize, h: usize| -> f64 {
            (0..n)
                .filter(|&j| j != i && group_of[j] == h)
                .map(|j| self.generator[(i, j)])
                .sum()
        };

        let mut rates = DMatrix::zeros(m, m);
        for g in 0..m {
            let members: Vec<usize> = (0..n).filter(|&i| group_of[i] == g).collect();
            for h in 0..m {
                if g == h {
                    continue;
                }
                let values: Vec<f64> = members.iter().map(|&i| rate_into(i, h)).collect();
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if hi - lo > tol {
                    return Err(ChainError::NotLumpable {
                        from: self.labels[members[0]].clone(),
                        group: group_labels[h].clone(),
                        spread: hi - lo,
                    });
                }
                rates[(g, h)] = values[0];
            }
        }
        EncodedChain::from_rates(group_labels, rates)
    }
}

/// Solves `pi' Q = 0`, `sum(pi) = 1` as the left null space of the
/// generator via SVD. Fails unless the null space is one-dimensional.
fn solve_stationary(q: &DMatrix<f64>) -> Result<DVector<f64>, ChainError> {
    let svd = q.transpose().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    let tol = 1e-9 * sigma_max.max(1.0);
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] < tol)
        .collect();
    if null.len() != 1 {
        return Err(ChainError::NotErgodic(null.len()));
    }
    let mut pi: DVector<f64> = v_t.row(null[0]).transpose();
    let sum: f64 = pi.iter().sum();
    if sum < 0.0 {
        pi.neg_mut();
    }
    // Entries should be nonnegative up to roundoff; clamp dust to zero.
    for x in pi.iter_mut() {
        if *x < 0.0 {
            if *x < -1e-12 {
                return Err(ChainError::NotErgodic(1));
            }
            *x = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    pi /= total;
    let residual = (q.transpose() * &pi).amax();
    if residual > STATIONARY_TOL {
        return Err(ChainError::StationaryResidual(residual));
    }
    Ok(pi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(a: f64, b: f64) -> EncodedChain {
        let rates = DMatrix::from_row_slice(2, 2, &[0.0, a, b, 0.0]);
        EncodedChain::from_rates(vec!["0".into(), "1".into()], rates).unwrap()
    }

    #[test]
    fn diagonal_is_negated_row_sum() {
        let c = two_state(2.0, 3.0);
        assert_eq!(c.generator[(0, 0)], -2.0);
        assert_eq!(c.generator[(1, 1)], -3.0);
    }

    #[test]
    fn two_state_stationary_matches_closed_form() {
        let c = two_state(2.0, 3.0);
        assert!((c.stationary[0] - 0.6).abs() < 1e-14);
        assert!((c.stationary[1] - 0.4).abs() < 1e-14);
    }

    #[test]
    fn negative_rate_rejected() {
        let rates = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let err = EncodedChain::from_rates(vec!["0".into(), "1".into()], rates).unwrap_err();
        assert!(matches!(err, ChainError::NegativeRate { .. }));
    }

    #[test]
    fn reducible_chain_rejected() {
        // Two disconnected 2-state blocks: null space has dimension 2.
        let mut rates = DMatrix::zeros(4, 4);
        rates[(0, 1)] = 1.0;
        rates[(1, 0)] = 1.0;
        rates[(2, 3)] = 1.0;
        rates[(3, 2)] = 1.0;
        let labels = (0..4).map(|i| i.to_string()).collect();
        assert_eq!(
            EncodedChain::from_rates(labels, rates).unwrap_err(),
            ChainError::NotErgodic(2)
        );
    }

    #[test]
    fn lump_collapses_symmetric_states() {
        // 3-state uniform chain; lumping states 1 and 2 gives a 2-state
        // chain with rates 2 and 1.
        let mut rates = DMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    rates[(i, j)] = 1.0;
                }
            }
        }
        let labels = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let chain = EncodedChain::from_rates(labels, rates).unwrap();
        let lumped = chain
            .lump(|l| if l == "a" { "a".into() } else { "bc".into() })
            .unwrap();
        assert_eq!(lumped.labels, vec!["a".to_string(), "bc".to_string()]);
        assert_eq!(lumped.generator[(0, 1)], 2.0);
        assert_eq!(lumped.generator[(1, 0)], 1.0);
        assert!((lumped.stationary[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn lump_rejects_non_lumpable_map() {
        // Rates out of b and c into a differ, so {b, c} is not a valid lump
        // against target {a}.
        let mut rates = DMatrix::zeros(3, 3);
        rates[(0, 1)] = 1.0;
        rates[(1, 0)] = 1.0;
        rates[(1, 2)] = 1.0;
        rates[(2, 0)] = 5.0;
        rates[(2, 1)] = 1.0;
        rates[(0, 2)] = 1.0;
        let labels = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let chain = EncodedChain::from_rates(labels, rates).unwrap();
        let err = chain
            .lump(|l| if l == "a" { "a".into() } else { "bc".into() })
            .unwrap_err();
        assert!(matches!(err, ChainError::NotLumpable { .. }));
    }
}
