//! Deterministic analytics on the encoded chains: transition matrices,
//! stationary letter frequencies, pair frequencies along one branch and
//! across two branches, closed-form decay curves and variance formulas.
//!
//! Notation used throughout the docs: `(W, W')(t)` is the per-site
//! frequency of word set `W` at time 0 and `W'` at time `t` along one
//! branch; `[W, W'](t)` is the frequency of `W` in one descendant and `W'`
//! in the other when both evolved independently for time `t` from a common
//! stationary ancestor.

mod expm;

pub use expm::expm;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::model::chain::EncodedChain;
use crate::model::encodings::{
    build_four_state_jc, build_nine_state, build_six_state_jc, build_windowed, EncodingError,
};
use crate::model::sequence::Nucleotide;
use crate::model::{ModelError, SubstitutionParams};

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("time must be nonnegative and finite, got {0}")]
    BadTime(f64),
    #[error("matrix exponential is not stochastic (residual {0})")]
    NotStochastic(f64),
    #[error("operation requires Jukes-Cantor+CpG parameters")]
    NotJcCpg,
    #[error("estimator statistics are defined for letters C and A, got {0}")]
    UnsupportedLetter(char),
    #[error("finite-length variance needs at least 2 sites, got {0}")]
    TooFewSites(usize),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check_time(t: f64) -> Result<(), KernelError> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(KernelError::BadTime(t))
    }
}

/// Decay rates and curve coefficients of the JC+CpG closed forms.
///
/// With `u = sqrt(4 + 2r + r^2)`, the conserved-letter curves are
///
/// ```text
/// (C,C)(t) = c0 e^{-4t} + c+ e^{-u+ t} + c- e^{-u- t} + C*^2
/// (A,A)(t) = a0 e^{-4t} + a+ e^{-u+ t} + a- e^{-u- t} + A*^2
/// ```
///
/// where `u± = 6 + r ± u` and `C*`, `A*` are the stationary letter
/// frequencies. `v± = 10 + r ± u = 4 + u±` are the extra decay rates that
/// appear (with nonzero amplitude) in the divergence curve `[A,A](t)` and
/// make it differ from `(A,A)(2t)`.
#[derive(Clone, Copy, Debug)]
pub struct SpectralConstants {
    pub r: f64,
    pub u: f64,
    pub u_plus: f64,
    pub u_minus: f64,
    pub v_plus: f64,
    pub v_minus: f64,
    pub c0: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub a0: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub c_star: f64,
    pub a_star: f64,
}

impl SpectralConstants {
    pub fn new(r: f64) -> Result<Self, KernelError> {
        if !r.is_finite() || r < 0.0 {
            return Err(KernelError::Model(ModelError::NegativeRate {
                key: "jc_cpg_r".into(),
                value: r,
            }));
        }
        let u = (4.0 + 2.0 * r + r * r).sqrt();
        let u_plus = 6.0 + r + u;
        let u_minus = 6.0 + r - u;
        let d = 16.0 + 5.0 * r;
        let c_star = (4.0 + r) / d;
        let a_star = (8.0 + 3.0 * r) / (2.0 * d);
        let c0 = (3.0 + r) / (2.0 * d);
        let c_common = (3.0 + r) / (4.0 * u * d * d);
        let c_plus = c_common * (u * (16.0 + 3.0 * r) - (32.0 + 14.0 * r + 3.0 * r * r));
        let c_minus = c_common * (u * (16.0 + 3.0 * r) + (32.0 + 14.0 * r + 3.0 * r * r));
        let a0 = (80.0 + 31.0 * r) / (32.0 * d);

        // Amplitudes of the e^{-u± t} modes of (A,A). The curve solves
        // (A,A)' = -4 (A,A) + r (*A,CG) + A*, and the driving term is a
        // combination of e^{-u± t} alone (its e^{-4t} amplitude vanishes
        // because the signed stationary weights of the slow mode sit on the
        // states excluded by the *A condition). The amplitude of the
        // driving term at rate uu is beta(uu), from the spectral
        // decomposition of the 4-state chain; pushing it through the ODE
        // multiplies by r / (4 - uu), which stays finite in these
        // arrangements down to r = 0.
        let beta = |uu: f64| -> f64 {
            (16.0 * (8.0 + 3.0 * r) - (16.0 + 7.0 * r) * uu) * (uu - 5.0)
                / (32.0
                    * d
                    * ((r + 2.0) * (2.0 * r + 5.0) * uu - 2.0 * (r + 1.0) * (5.0 * r + 16.0)))
        };
        let a_plus = -r * beta(u_plus) / (2.0 + r + u);
        let a_minus = -(2.0 + r + u) / 2.0 * beta(u_minus);

        Ok(SpectralConstants {
            r,
            u,
            u_plus,
            u_minus,
            v_plus: 10.0 + r + u,
            v_minus: 10.0 + r - u,
            c0,
            c_plus,
            c_minus,
            a0,
            a_plus,
            a_minus,
            c_star,
            a_star,
        })
    }

    pub fn cc_value(&self, t: f64) -> f64 {
        self.c0 * (-4.0 * t).exp()
            + self.c_plus * (-self.u_plus * t).exp()
            + self.c_minus * (-self.u_minus * t).exp()
            + self.c_star * self.c_star
    }

    pub fn cc_derivative(&self, t: f64) -> f64 {
        -4.0 * self.c0 * (-4.0 * t).exp()
            - self.u_plus * self.c_plus * (-self.u_plus * t).exp()
            - self.u_minus * self.c_minus * (-self.u_minus * t).exp()
    }

    pub fn aa_value(&self, t: f64) -> f64 {
        self.a0 * (-4.0 * t).exp()
            + self.a_plus * (-self.u_plus * t).exp()
            + self.a_minus * (-self.u_minus * t).exp()
            + self.a_star * self.a_star
    }

    pub fn aa_derivative(&self, t: f64) -> f64 {
        -4.0 * self.a0 * (-4.0 * t).exp()
            - self.u_plus * self.a_plus * (-self.u_plus * t).exp()
            - self.u_minus * self.a_minus * (-self.u_minus * t).exp()
    }
}

/// A point on one of the decay curves.
#[derive(Clone, Copy, Debug)]
pub struct CurvePoint {
    pub t: f64,
    pub value: f64,
    pub derivative: f64,
}

/// Closed-form `(C,C)(t)` for JC+CpG of intensity `r`.
pub fn cc_closed_form(r: f64, t: f64) -> Result<f64, KernelError> {
    check_time(t)?;
    Ok(SpectralConstants::new(r)?.cc_value(t))
}

/// Closed-form `(A,A)(t)` for JC+CpG of intensity `r`.
pub fn aa_closed_form(r: f64, t: f64) -> Result<f64, KernelError> {
    check_time(t)?;
    Ok(SpectralConstants::new(r)?.aa_value(t))
}

pub fn cc_curve_point(r: f64, t: f64) -> Result<CurvePoint, KernelError> {
    check_time(t)?;
    let sc = SpectralConstants::new(r)?;
    Ok(CurvePoint {
        t,
        value: sc.cc_value(t),
        derivative: sc.cc_derivative(t),
    })
}

pub fn aa_curve_point(r: f64, t: f64) -> Result<CurvePoint, KernelError> {
    check_time(t)?;
    let sc = SpectralConstants::new(r)?;
    Ok(CurvePoint {
        t,
        value: sc.aa_value(t),
        derivative: sc.aa_derivative(t),
    })
}

/// The transition matrix `P_t = exp(t Q)` of an encoded chain. Entries in
/// `[-1e-14, 0)` are clamped to zero; anything worse, or a row sum off 1 by
/// more than 1e-12, is reported as an error.
pub fn transition_matrix(chain: &EncodedChain, t: f64) -> Result<DMatrix<f64>, KernelError> {
    check_time(t)?;
    finalize_stochastic(expm(&chain.generator.scale(t)))
}

fn finalize_stochastic(mut p: DMatrix<f64>) -> Result<DMatrix<f64>, KernelError> {
    let mut worst = 0.0_f64;
    for x in p.iter_mut() {
        if *x < 0.0 {
            worst = worst.min(*x);
            *x = 0.0;
        }
    }
    if worst < -1e-14 {
        return Err(KernelError::NotStochastic(-worst));
    }
    for i in 0..p.nrows() {
        let sum: f64 = p.row(i).iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(KernelError::NotStochastic((sum - 1.0).abs()));
        }
    }
    Ok(p)
}

/// Lazily yields `P_0 = I, P_step, P_{2 step}, ...` by repeated
/// multiplication with `P_step`. Intended for the small curve chains where
/// evaluating hundreds of grid points via one expm each would be wasteful.
pub struct TransitionGrid {
    step: DMatrix<f64>,
    current: DMatrix<f64>,
    remaining: usize,
}

impl Iterator for TransitionGrid {
    type Item = DMatrix<f64>;

    fn next(&mut self) -> Option<DMatrix<f64>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let out = self.current.clone();
        self.current = &self.current * &self.step;
        Some(out)
    }
}

pub fn transition_grid(
    chain: &EncodedChain,
    step: f64,
    count: usize,
) -> Result<TransitionGrid, KernelError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(KernelError::BadTime(step));
    }
    Ok(TransitionGrid {
        step: transition_matrix(chain, step)?,
        current: DMatrix::identity(chain.n(), chain.n()),
        remaining: count,
    })
}

/// `(W0, Wt)(t)` evaluated with a precomputed transition matrix:
/// `sum_{a in W0} pi(a) sum_{b in Wt} P(a, b)`.
pub fn pair_freq_ancestor_at(
    chain: &EncodedChain,
    w0: &[usize],
    wt: &[usize],
    p: &DMatrix<f64>,
) -> f64 {
    w0.iter()
        .map(|&a| chain.stationary[a] * wt.iter().map(|&b| p[(a, b)]).sum::<f64>())
        .sum()
}

/// Pair frequency of `W0` at time 0 and `Wt` at time `t` along one branch.
pub fn pair_freq_ancestor(
    chain: &EncodedChain,
    w0: &[usize],
    wt: &[usize],
    t: f64,
) -> Result<f64, KernelError> {
    Ok(pair_freq_ancestor_at(
        chain,
        w0,
        wt,
        &transition_matrix(chain, t)?,
    ))
}

/// `[W1, W2](t)` evaluated with a precomputed transition matrix:
/// `sum_a pi(a) P(a, W1) P(a, W2)` — both branches run independently from a
/// stationary ancestor for time `t`.
pub fn pair_freq_divergence_at(
    chain: &EncodedChain,
    w1: &[usize],
    w2: &[usize],
    p: &DMatrix<f64>,
) -> f64 {
    (0..chain.n())
        .map(|a| {
            let m1: f64 = w1.iter().map(|&b| p[(a, b)]).sum();
            let m2: f64 = w2.iter().map(|&b| p[(a, b)]).sum();
            chain.stationary[a] * m1 * m2
        })
        .sum()
}

pub fn pair_freq_divergence(
    chain: &EncodedChain,
    w1: &[usize],
    w2: &[usize],
    t: f64,
) -> Result<f64, KernelError> {
    Ok(pair_freq_divergence_at(
        chain,
        w1,
        w2,
        &transition_matrix(chain, t)?,
    ))
}

/// Stationary frequency of a single letter, read off the 9-state marginal.
pub fn letter_freq(params: &SubstitutionParams, letter: Nucleotide) -> Result<f64, KernelError> {
    let nine = build_nine_state(params)?;
    Ok(nine.stationary_mass(&letter_states(&nine, letter)))
}

/// States of a window chain occupied by `letter` at a fixed site: C and T
/// are read off the first coordinate, A and G off the last.
pub fn letter_states(chain: &EncodedChain, letter: Nucleotide) -> Vec<usize> {
    match letter {
        Nucleotide::C => chain.states_matching(|l| l.starts_with('C')),
        Nucleotide::T => chain.states_matching(|l| l.starts_with('T')),
        Nucleotide::A => chain.states_matching(|l| l.ends_with('A')),
        Nucleotide::G => chain.states_matching(|l| l.ends_with('G')),
    }
}

/// Residuals of the four linear ODE identities tying the decay curves to
/// the CG-context pair frequencies:
///
/// ```text
/// (C,C)'(t) = -4 (C,C)(t) - r (C*,CG)(t) + C*
/// (A,A)'(t) = -4 (A,A)(t) + r (*A,CG)(t) + A*
/// [C,C]'(t) = -8 [C,C](t) - 2r [C*,CG](t) + 2 C*
/// [A,A]'(t) = -8 [A,A](t) + 2r [*A,CG](t) + 2 A*
/// ```
///
/// Derivatives are taken by second-order finite differences of the numeric
/// pair frequencies (step 1e-5), so residuals below ~1e-7 confirm the
/// identities.
#[derive(Clone, Copy, Debug)]
pub struct DerivativeResiduals {
    pub cc: f64,
    pub aa: f64,
    pub cc_div: f64,
    pub aa_div: f64,
}

impl DerivativeResiduals {
    pub fn max(&self) -> f64 {
        self.cc.max(self.aa).max(self.cc_div).max(self.aa_div)
    }
}

pub fn curve_derivative_identities(
    params: &SubstitutionParams,
    t: f64,
) -> Result<DerivativeResiduals, KernelError> {
    check_time(t)?;
    let r = params.jc_cpg_rate().ok_or(KernelError::NotJcCpg)?;
    let sc = SpectralConstants::new(r)?;
    let four = build_four_state_jc(r)?;
    let six = build_six_state_jc(r)?;
    let w_c = letter_states(&four, Nucleotide::C);
    let w_cg4 = vec![four.state_index("CG").expect("state CG")];
    let w_a = letter_states(&six, Nucleotide::A);
    let w_cg6 = vec![six.state_index("CG").expect("state CG")];

    let residual = |f: &dyn Fn(f64) -> Result<f64, KernelError>,
                    rhs_of: &dyn Fn(f64) -> Result<f64, KernelError>|
     -> Result<f64, KernelError> {
        const H: f64 = 1e-5;
        let fd = if t >= H {
            (f(t + H)? - f(t - H)?) / (2.0 * H)
        } else {
            (-3.0 * f(t)? + 4.0 * f(t + H)? - f(t + 2.0 * H)?) / (2.0 * H)
        };
        Ok((fd - rhs_of(t)?).abs())
    };

    let cc = |s: f64| pair_freq_ancestor(&four, &w_c, &w_c, s);
    let cstar_cg = |s: f64| pair_freq_ancestor(&four, &w_c, &w_cg4, s);
    let aa = |s: f64| pair_freq_ancestor(&six, &w_a, &w_a, s);
    let stara_cg = |s: f64| pair_freq_ancestor(&six, &w_a, &w_cg6, s);
    let cc_div = |s: f64| pair_freq_divergence(&four, &w_c, &w_c, s);
    let cstar_cg_div = |s: f64| pair_freq_divergence(&four, &w_c, &w_cg4, s);
    let aa_div = |s: f64| pair_freq_divergence(&six, &w_a, &w_a, s);
    let stara_cg_div = |s: f64| pair_freq_divergence(&six, &w_a, &w_cg6, s);

    Ok(DerivativeResiduals {
        cc: residual(&cc, &|s| Ok(-4.0 * cc(s)? - r * cstar_cg(s)? + sc.c_star))?,
        aa: residual(&aa, &|s| Ok(-4.0 * aa(s)? + r * stara_cg(s)? + sc.a_star))?,
        cc_div: residual(&cc_div, &|s| {
            Ok(-8.0 * cc_div(s)? - 2.0 * r * cstar_cg_div(s)? + 2.0 * sc.c_star)
        })?,
        aa_div: residual(&aa_div, &|s| {
            Ok(-8.0 * aa_div(s)? + 2.0 * r * stara_cg_div(s)? + 2.0 * sc.a_star)
        })?,
    })
}

/// Chains and state sets needed for the conserved-word frequencies of one
/// letter: the letter itself (9 states), the doubled letter `xx` (36
/// states) and the gapped word `x*x` (144 states).
struct WordKernels {
    single: (EncodedChain, Vec<usize>),
    double: (EncodedChain, Vec<usize>),
    gapped: (EncodedChain, Vec<usize>),
}

impl WordKernels {
    fn new(params: &SubstitutionParams, letter: Nucleotide) -> Result<Self, KernelError> {
        let nine = build_nine_state(params)?;
        let w3 = build_windowed(params, 3)?;
        let w4 = build_windowed(params, 4)?;
        let (single, double, gapped) = match letter {
            Nucleotide::C => (
                letter_states(&nine, Nucleotide::C),
                w3.states_matching(|l| l.starts_with("CC")),
                w4.states_matching(|l| {
                    let b = l.as_bytes();
                    b[0] == b'C' && b[2] == b'C'
                }),
            ),
            Nucleotide::A => (
                letter_states(&nine, Nucleotide::A),
                w3.states_matching(|l| l.ends_with("AA")),
                w4.states_matching(|l| {
                    let b = l.as_bytes();
                    b[1] == b'A' && b[3] == b'A'
                }),
            ),
            other => return Err(KernelError::UnsupportedLetter(other.to_char())),
        };
        Ok(WordKernels {
            single: (nine, single),
            double: (w3, double),
            gapped: (w4, gapped),
        })
    }

    /// `((x,x), (xx,xx), (x*x,x*x))` at time `t`, ancestor or divergence.
    fn pair_freqs(&self, t: f64, divergence: bool) -> Result<(f64, f64, f64), KernelError> {
        let eval = |(chain, set): &(EncodedChain, Vec<usize>)| {
            if divergence {
                pair_freq_divergence(chain, set, set, t)
            } else {
                pair_freq_ancestor(chain, set, set, t)
            }
        };
        Ok((eval(&self.single)?, eval(&self.double)?, eval(&self.gapped)?))
    }
}

fn sigma2_from_freqs(p1: f64, p2: f64, p3: f64) -> f64 {
    p1 + 2.0 * p2 + 2.0 * p3 - 5.0 * p1 * p1
}

/// Asymptotic variance of `sqrt(N) ((x,x)_obs - (x,x)(t))`:
/// `(x,x)(t) + 2 (xx,xx)(t) + 2 (x*x,x*x)(t) - 5 (x,x)(t)^2`.
pub fn sigma2_asymptotic(
    params: &SubstitutionParams,
    letter: Nucleotide,
    t: f64,
) -> Result<f64, KernelError> {
    check_time(t)?;
    let k = WordKernels::new(params, letter)?;
    let (p1, p2, p3) = k.pair_freqs(t, false)?;
    Ok(sigma2_from_freqs(p1, p2, p3))
}

/// Same formula with the divergence-setting (bracket) pair frequencies,
/// for the variance of `[x,x]_obs`.
pub fn sigma2_asymptotic_divergence(
    params: &SubstitutionParams,
    letter: Nucleotide,
    t: f64,
) -> Result<f64, KernelError> {
    check_time(t)?;
    let k = WordKernels::new(params, letter)?;
    let (p1, p2, p3) = k.pair_freqs(t, true)?;
    Ok(sigma2_from_freqs(p1, p2, p3))
}

/// Exact variance of `(x,x)_obs` over a window of `n` sites:
///
/// ```text
/// n sigma^2 = (x,x) - (x,x)^2 + 2 (1 - 1/n) ((xx,xx) - (x,x)^2)
///                             + 2 (1 - 2/n) ((x*x,x*x) - (x,x)^2)
/// ```
///
/// `n * sigma2_finite` converges to [`sigma2_asymptotic`] as `n` grows.
pub fn sigma2_finite(
    params: &SubstitutionParams,
    letter: Nucleotide,
    t: f64,
    n: usize,
) -> Result<f64, KernelError> {
    if n < 2 {
        return Err(KernelError::TooFewSites(n));
    }
    check_time(t)?;
    let k = WordKernels::new(params, letter)?;
    let (p1, p2, p3) = k.pair_freqs(t, false)?;
    let nf = n as f64;
    let var = p1 - p1 * p1
        + 2.0 * (1.0 - 1.0 / nf) * (p2 - p1 * p1)
        + 2.0 * (1.0 - 2.0 / nf) * (p3 - p1 * p1);
    Ok(var / nf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn spectral_constants_r0_are_the_plain_jukes_cantor_ones() {
        let sc = SpectralConstants::new(0.0).unwrap();
        assert_abs_diff_eq!(sc.c0, 3.0 / 32.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sc.c_plus, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sc.c_minus, 3.0 / 32.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sc.a0, 5.0 / 32.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sc.a_plus, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sc.a_minus, 1.0 / 32.0, epsilon = 1e-15);
        assert_abs_diff_eq!(sc.c_star, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(sc.a_star, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn closed_forms_at_zero_and_infinity() {
        for r in [0.0, 0.5, 1.0, 3.0, 10.0] {
            let sc = SpectralConstants::new(r).unwrap();
            assert_abs_diff_eq!(cc_closed_form(r, 0.0).unwrap(), sc.c_star, epsilon = 1e-13);
            assert_abs_diff_eq!(aa_closed_form(r, 0.0).unwrap(), sc.a_star, epsilon = 1e-13);
            assert_abs_diff_eq!(
                cc_closed_form(r, 60.0).unwrap(),
                sc.c_star * sc.c_star,
                epsilon = 1e-13
            );
            assert_abs_diff_eq!(
                aa_closed_form(r, 60.0).unwrap(),
                sc.a_star * sc.a_star,
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn letter_freq_matches_closed_forms() {
        let p0 = SubstitutionParams::jc_cpg(0.0).unwrap();
        for n in Nucleotide::ALL {
            assert_abs_diff_eq!(letter_freq(&p0, n).unwrap(), 0.25, epsilon = 1e-12);
        }
        let p10 = SubstitutionParams::jc_cpg(10.0).unwrap();
        assert_abs_diff_eq!(
            letter_freq(&p10, Nucleotide::C).unwrap(),
            7.0 / 33.0,
            epsilon = 1e-12
        );
        for r in [0.5, 3.0, 10.0] {
            let p = SubstitutionParams::jc_cpg(r).unwrap();
            let expected_a = (8.0 + 3.0 * r) / (2.0 * (16.0 + 5.0 * r));
            assert_abs_diff_eq!(
                letter_freq(&p, Nucleotide::A).unwrap(),
                expected_a,
                epsilon = 1e-12
            );
            // A/T and C/G symmetry of the model.
            assert_abs_diff_eq!(
                letter_freq(&p, Nucleotide::T).unwrap(),
                expected_a,
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                letter_freq(&p, Nucleotide::G).unwrap(),
                letter_freq(&p, Nucleotide::C).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn transition_matrix_is_identity_at_zero() {
        let chain = build_four_state_jc(2.0).unwrap();
        let p = transition_matrix(&chain, 0.0).unwrap();
        assert_abs_diff_eq!((p - DMatrix::identity(4, 4)).amax(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn transition_matrix_semigroup() {
        let chain = build_six_state_jc(3.0).unwrap();
        let p_a = transition_matrix(&chain, 0.4).unwrap();
        let p_b = transition_matrix(&chain, 1.1).unwrap();
        let p_ab = transition_matrix(&chain, 1.5).unwrap();
        assert!((p_a * p_b - p_ab).amax() < 1e-10);
    }

    #[test]
    fn transition_matrix_rows_approach_stationary() {
        let chain = build_four_state_jc(1.0).unwrap();
        let p = transition_matrix(&chain, 20.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(p[(i, j)], chain.stationary[j], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn transition_grid_matches_direct_exponentials() {
        let chain = build_six_state_jc(10.0).unwrap();
        let step = 0.17;
        let grid: Vec<_> = transition_grid(&chain, step, 8).unwrap().collect();
        for (k, pk) in grid.iter().enumerate() {
            let direct = transition_matrix(&chain, step * k as f64).unwrap();
            assert!((pk - direct).amax() < 1e-12, "drift at step {k}");
        }
    }

    #[test]
    fn negative_time_rejected() {
        let chain = build_four_state_jc(1.0).unwrap();
        assert!(matches!(
            transition_matrix(&chain, -0.1),
            Err(KernelError::BadTime(_))
        ));
        assert!(cc_closed_form(1.0, -1.0).is_err());
    }

    #[test]
    fn pair_freq_at_time_zero_is_stationary_mass() {
        let chain = build_four_state_jc(2.0).unwrap();
        let w_c = letter_states(&chain, Nucleotide::C);
        let cc0 = pair_freq_ancestor(&chain, &w_c, &w_c, 0.0).unwrap();
        assert_abs_diff_eq!(cc0, chain.stationary_mass(&w_c), epsilon = 1e-13);
        // Disjoint events at t = 0 on the 6-state chain: (*A, CG)(0) = 0.
        let six = build_six_state_jc(2.0).unwrap();
        let w_a = letter_states(&six, Nucleotide::A);
        let w_cg = vec![six.state_index("CG").unwrap()];
        assert_abs_diff_eq!(
            pair_freq_ancestor(&six, &w_a, &w_cg, 0.0).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        // Empty sets are allowed and give zero.
        assert_eq!(pair_freq_ancestor(&six, &[], &w_a, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn closed_forms_match_matrix_exponentials_spotcheck() {
        for r in [0.5, 1.0, 10.0] {
            let four = build_four_state_jc(r).unwrap();
            let six = build_six_state_jc(r).unwrap();
            let w_c = letter_states(&four, Nucleotide::C);
            let w_a = letter_states(&six, Nucleotide::A);
            for t in [0.05, 0.3, 1.0, 2.5, 5.0] {
                assert_abs_diff_eq!(
                    cc_closed_form(r, t).unwrap(),
                    pair_freq_ancestor(&four, &w_c, &w_c, t).unwrap(),
                    epsilon = 1e-11
                );
                assert_abs_diff_eq!(
                    aa_closed_form(r, t).unwrap(),
                    pair_freq_ancestor(&six, &w_a, &w_a, t).unwrap(),
                    epsilon = 1e-11
                );
            }
        }
    }

    #[test]
    fn divergence_cc_equals_ancestor_at_doubled_time() {
        let r = 10.0;
        let four = build_four_state_jc(r).unwrap();
        let w_c = letter_states(&four, Nucleotide::C);
        for t in [0.1, 0.4, 1.3] {
            let bracket = pair_freq_divergence(&four, &w_c, &w_c, t).unwrap();
            assert_abs_diff_eq!(bracket, cc_closed_form(r, 2.0 * t).unwrap(), epsilon = 1e-11);
        }
    }

    #[test]
    fn divergence_aa_differs_from_ancestor_at_doubled_time() {
        let r = 10.0;
        let six = build_six_state_jc(r).unwrap();
        let w_a = letter_states(&six, Nucleotide::A);
        let max_gap = (1..=40)
            .map(|k| {
                let t = 0.05 * k as f64;
                let bracket = pair_freq_divergence(&six, &w_a, &w_a, t).unwrap();
                (bracket - aa_closed_form(r, 2.0 * t).unwrap()).abs()
            })
            .fold(0.0, f64::max);
        assert!(max_gap > 1e-9, "max |[A,A](t) - (A,A)(2t)| = {max_gap}");
    }

    #[test]
    fn derivative_identities_hold() {
        for (r, t) in [(0.0, 1.0), (1.0, 0.25), (10.0, 0.5), (10.0, 0.0)] {
            let p = SubstitutionParams::jc_cpg(r).unwrap();
            let res = curve_derivative_identities(&p, t).unwrap();
            assert!(res.max() < 1e-7, "residuals {res:?} at r={r}, t={t}");
        }
    }

    #[test]
    fn derivative_identities_require_jc_cpg() {
        let p = crate::model::presets::kimura_cpg();
        assert_eq!(
            curve_derivative_identities(&p, 1.0).unwrap_err(),
            KernelError::NotJcCpg
        );
    }

    #[test]
    fn sigma2_at_time_zero_collapses_to_stationary_words() {
        let params = SubstitutionParams::jc_cpg(10.0).unwrap();
        let k = WordKernels::new(&params, Nucleotide::C).unwrap();
        let x = k.single.0.stationary_mass(&k.single.1);
        let xx = k.double.0.stationary_mass(&k.double.1);
        let xgx = k.gapped.0.stationary_mass(&k.gapped.1);
        let expected = x + 2.0 * xx + 2.0 * xgx - 5.0 * x * x;
        let got = sigma2_asymptotic(&params, Nucleotide::C, 0.0).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn sigma2_site_independent_case_is_bernoulli() {
        // At r = 0 sites evolve independently, so the pair-word terms
        // cancel and the variance is that of a Bernoulli((x,x)(t)).
        let params = SubstitutionParams::jc_cpg(0.0).unwrap();
        for t in [0.2, 1.0] {
            let p1 = cc_closed_form(0.0, t).unwrap();
            for letter in [Nucleotide::C, Nucleotide::A] {
                let got = sigma2_asymptotic(&params, letter, t).unwrap();
                assert_abs_diff_eq!(got, p1 - p1 * p1, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn sigma2_finite_limits_and_weights() {
        let params = SubstitutionParams::jc_cpg(10.0).unwrap();
        let t = 0.3;
        let asymptotic = sigma2_asymptotic(&params, Nucleotide::C, t).unwrap();
        let big_n = 1_000_000;
        let finite = sigma2_finite(&params, Nucleotide::C, t, big_n).unwrap();
        assert!((finite * big_n as f64 / asymptotic - 1.0).abs() < 1e-5);

        // n = 2: the two-site covariance enters with weight 2(1 - 1/2) = 1
        // and the gapped term drops out.
        let k = WordKernels::new(&params, Nucleotide::C).unwrap();
        let (p1, p2, _) = k.pair_freqs(t, false).unwrap();
        let expected = (p1 - p1 * p1 + (p2 - p1 * p1)) / 2.0;
        assert_abs_diff_eq!(
            sigma2_finite(&params, Nucleotide::C, t, 2).unwrap(),
            expected,
            epsilon = 1e-14
        );

        assert_eq!(
            sigma2_finite(&params, Nucleotide::C, t, 1).unwrap_err(),
            KernelError::TooFewSites(1)
        );
        assert_eq!(
            sigma2_asymptotic(&params, Nucleotide::G, t).unwrap_err(),
            KernelError::UnsupportedLetter('G')
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn spectral_invariants(r in 1e-3..50.0_f64) {
            let sc = SpectralConstants::new(r).unwrap();
            // Rate ordering.
            prop_assert!(4.0 < sc.u_minus && sc.u_minus < 5.0);
            prop_assert!(2.0 * r + 7.0 < sc.u_plus && sc.u_plus < 2.0 * r + 8.0);
            prop_assert!((sc.v_plus - (4.0 + sc.u_plus)).abs() < 1e-12);
            prop_assert!((sc.v_minus - (4.0 + sc.u_minus)).abs() < 1e-12);
            // Coefficient sums pin the curve values at t = 0.
            let c_sum = sc.c0 + sc.c_plus + sc.c_minus;
            let a_sum = sc.a0 + sc.a_plus + sc.a_minus;
            prop_assert!((c_sum - (sc.c_star - sc.c_star * sc.c_star)).abs() < 1e-12);
            prop_assert!((a_sum - (sc.a_star - sc.a_star * sc.a_star)).abs() < 1e-12);
            // All amplitudes positive for r > 0.
            prop_assert!(sc.c0 > 0.0 && sc.c_plus > 0.0 && sc.c_minus > 0.0);
            prop_assert!(sc.a0 > 0.0 && sc.a_plus > 0.0 && sc.a_minus > 0.0);
        }

        #[test]
        fn transition_matrices_are_stochastic(r in 0.0..20.0_f64, t in 0.0..8.0_f64) {
            let chain = build_six_state_jc(r).unwrap();
            let p = transition_matrix(&chain, t).unwrap();
            for i in 0..chain.n() {
                let sum: f64 = p.row(i).iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                for j in 0..chain.n() {
                    prop_assert!(p[(i, j)] >= 0.0);
                }
            }
        }
    }
}
