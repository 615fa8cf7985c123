//! Observed alignment statistics, time estimation by monotone curve
//! inversion, and asymptotic confidence intervals.
//!
//! The estimators solve `(x,x)(t) = (x,x)_obs` (ancestor setting) or
//! `[x,x](t) = [x,x]_obs` (divergence setting) for `x` in {C, A}. The
//! confidence intervals plug the observed slope proxy `kappa` and variance
//! proxy `nu` into the normal limit, so no unknown quantity appears:
//! half-width = `z(eps) * sqrt(nu / N) / kappa`.

mod quantile;

pub use quantile::normal_quantile;

use thiserror::Error;

use crate::kernels::{
    aa_closed_form, cc_closed_form, letter_states, pair_freq_ancestor, pair_freq_divergence,
    KernelError, SpectralConstants,
};
use crate::model::encodings::{build_nine_state, build_six_state_jc};
use crate::model::sequence::Nucleotide;
use crate::model::SubstitutionParams;
use crate::simulator::{AlignedPair, PairMode};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error(
        "observed frequency {obs} outside the invertible range ({lower}, {upper}]; \
         the alignment is too short or the divergence is saturated"
    )]
    ObsOutOfRange { obs: f64, lower: f64, upper: f64 },
    #[error("time estimation is available for letters C and A (C only for general RN), got {0}")]
    InvalidLetter(char),
    #[error("confidence level must lie strictly between 0 and 1, got {0}")]
    InvalidEpsilon(f64),
    #[error("kappa/nu plug-ins for letter A require Jukes-Cantor+CpG parameters")]
    NotJcCpg,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Empirical frequencies read from an aligned pair with circular indexing,
/// so every word length contributes exactly `n` counts. `left` is the
/// ancestral sequence in ancestor mode and one of the two descendants in
/// divergence mode; conserved-word statistics compare left against right.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservedStats {
    pub n: usize,
    pub mode: PairMode,
    /// (C,C)_obs or [C,C]_obs: site is C on both sides.
    pub cc: f64,
    /// (A,A)_obs or [A,A]_obs.
    pub aa: f64,
    /// (CC,CC)_obs: two adjacent C sites conserved on both sides.
    pub cc_word2: f64,
    /// (AA,AA)_obs.
    pub aa_word2: f64,
    /// (C*C,C*C)_obs: sites i and i+2 both C on both sides.
    pub cc_word3: f64,
    /// (A*A,A*A)_obs.
    pub aa_word3: f64,
    /// (C*,CG)_obs: left site i is C, right dinucleotide (i, i+1) is CG.
    pub cstar_cg: f64,
    /// (*A,CG)_obs: left site i+1 is A, right dinucleotide (i, i+1) is CG.
    pub stara_cg: f64,
    /// (C)_obs on the left sequence.
    pub c_left: f64,
    /// (A)_obs on the left sequence.
    pub a_left: f64,
    /// (C,A)_obs: left site is C, right site is A. With the other cross
    /// terms below these feed the general RN slope plug-in.
    pub c_to_a: f64,
    pub c_to_t: f64,
    pub c_to_g: f64,
    /// (C*,TA)_obs, (C*,TG)_obs, (C*,CA)_obs.
    pub cstar_ta: f64,
    pub cstar_tg: f64,
    pub cstar_ca: f64,
}

impl ObservedStats {
    fn conserved(&self, letter: Nucleotide) -> f64 {
        match letter {
            Nucleotide::C => self.cc,
            Nucleotide::A => self.aa,
            _ => unreachable!("letter validated upstream"),
        }
    }

    fn word2(&self, letter: Nucleotide) -> f64 {
        match letter {
            Nucleotide::C => self.cc_word2,
            Nucleotide::A => self.aa_word2,
            _ => unreachable!("letter validated upstream"),
        }
    }

    fn word3(&self, letter: Nucleotide) -> f64 {
        match letter {
            Nucleotide::C => self.cc_word3,
            Nucleotide::A => self.aa_word3,
            _ => unreachable!("letter validated upstream"),
        }
    }

    fn letter_left(&self, letter: Nucleotide) -> f64 {
        match letter {
            Nucleotide::C => self.c_left,
            Nucleotide::A => self.a_left,
            _ => unreachable!("letter validated upstream"),
        }
    }
}

/// Counts every statistic in one circular pass over the alignment.
pub fn observe(pair: &AlignedPair) -> ObservedStats {
    use Nucleotide::{A, C, G, T};
    let n = pair.len();
    let left = pair.left.as_slice();
    let right = pair.right.as_slice();
    let mut counts = [0u64; 16];
    for i in 0..n {
        let i1 = (i + 1) % n;
        let i2 = (i + 2) % n;
        let (l0, l1, l2) = (left[i], left[i1], left[i2]);
        let (r0, r1, r2) = (right[i], right[i1], right[i2]);
        let cg_right = r0 == C && r1 == G;
        counts[0] += (l0 == C && r0 == C) as u64;
        counts[1] += (l0 == A && r0 == A) as u64;
        counts[2] += (l0 == C && l1 == C && r0 == C && r1 == C) as u64;
        counts[3] += (l0 == A && l1 == A && r0 == A && r1 == A) as u64;
        counts[4] += (l0 == C && l2 == C && r0 == C && r2 == C) as u64;
        counts[5] += (l0 == A && l2 == A && r0 == A && r2 == A) as u64;
        counts[6] += (l0 == C && cg_right) as u64;
        counts[7] += (l1 == A && cg_right) as u64;
        counts[8] += (l0 == C) as u64;
        counts[9] += (l0 == A) as u64;
        counts[10] += (l0 == C && r0 == A) as u64;
        counts[11] += (l0 == C && r0 == T) as u64;
        counts[12] += (l0 == C && r0 == G) as u64;
        counts[13] += (l0 == C && r0 == T && r1 == A) as u64;
        counts[14] += (l0 == C && r0 == T && r1 == G) as u64;
        counts[15] += (l0 == C && r0 == C && r1 == A) as u64;
    }
    let f = |c: u64| c as f64 / n as f64;
    ObservedStats {
        n,
        mode: pair.mode,
        cc: f(counts[0]),
        aa: f(counts[1]),
        cc_word2: f(counts[2]),
        aa_word2: f(counts[3]),
        cc_word3: f(counts[4]),
        aa_word3: f(counts[5]),
        cstar_cg: f(counts[6]),
        stara_cg: f(counts[7]),
        c_left: f(counts[8]),
        a_left: f(counts[9]),
        c_to_a: f(counts[10]),
        c_to_t: f(counts[11]),
        c_to_g: f(counts[12]),
        cstar_ta: f(counts[13]),
        cstar_tg: f(counts[14]),
        cstar_ca: f(counts[15]),
    }
}

fn check_letter(letter: Nucleotide) -> Result<(), EstimatorError> {
    match letter {
        Nucleotide::C | Nucleotide::A => Ok(()),
        other => Err(EstimatorError::InvalidLetter(other.to_char())),
    }
}

/// The variance plug-in `nu = x - 5 x^2 + 2 (xx,xx)_obs + 2 (x*x,x*x)_obs`
/// with `x` the conserved-letter frequency. Identical in both settings.
pub fn nu_obs(stats: &ObservedStats, letter: Nucleotide) -> Result<f64, EstimatorError> {
    check_letter(letter)?;
    let x = stats.conserved(letter);
    Ok(x - 5.0 * x * x + 2.0 * stats.word2(letter) + 2.0 * stats.word3(letter))
}

/// Slope and variance plug-ins for the JC+CpG estimators:
///
/// ```text
/// kappa_C = 4 (C,C)_obs + r (C*,CG)_obs - (C)_obs
/// kappa_A = 4 (A,A)_obs - r (*A,CG)_obs - (A)_obs
/// ```
///
/// Divergence mode doubles kappa and leaves nu unchanged. Values may be
/// nonpositive on short alignments; callers decide what to do then.
pub fn kappa_nu(
    stats: &ObservedStats,
    params: &SubstitutionParams,
    letter: Nucleotide,
    mode: PairMode,
) -> Result<(f64, f64), EstimatorError> {
    check_letter(letter)?;
    let r = params.jc_cpg_rate().ok_or(EstimatorError::NotJcCpg)?;
    let x = stats.conserved(letter);
    let kappa = match letter {
        Nucleotide::C => 4.0 * x + r * stats.cstar_cg - stats.letter_left(letter),
        Nucleotide::A => 4.0 * x - r * stats.stara_cg - stats.letter_left(letter),
        _ => unreachable!(),
    };
    let kappa = match mode {
        PairMode::Ancestor => kappa,
        PairMode::Divergence => 2.0 * kappa,
    };
    Ok((kappa, nu_obs(stats, letter)?))
}

/// General RN+YpR slope plug-in for the letter C. Specializes exactly to
/// `kappa_C` under JC+CpG parameters.
pub fn kappa_rn(stats: &ObservedStats, params: &SubstitutionParams) -> f64 {
    use crate::model::YprTransition::*;
    use Nucleotide::{A, C, G, T};
    let v = |x| params.v(x);
    let w = |x| params.w(x);
    -v(C) * stats.c_to_a - w(C) * stats.c_to_t + (v(A) + w(T) + v(G)) * stats.cc
        - v(C) * stats.c_to_g
        - params.ypr(TaToCa) * stats.cstar_ta
        - params.ypr(TgToCg) * stats.cstar_tg
        + params.ypr(CaToTa) * stats.cstar_ca
        + params.ypr(CgToTg) * stats.cstar_cg
}

const T_BRACKET_CAP: f64 = 1024.0; // 2^10
const T_TOLERANCE: f64 = 1e-12;

/// Inverts a strictly decreasing curve with range `(x_star^2, x_star]` at
/// the observed value by bisection to absolute tolerance 1e-12 in `t`. The
/// initial bracket [0, T] grows by doubling from 1 until the curve falls
/// below `obs`, capped at 2^10 (beyond that the observation is saturated).
pub fn invert_curve(
    curve: impl Fn(f64) -> Result<f64, KernelError>,
    obs: f64,
    x_star: f64,
) -> Result<f64, EstimatorError> {
    let lower = x_star * x_star;
    let out_of_range = || EstimatorError::ObsOutOfRange {
        obs,
        lower,
        upper: x_star,
    };
    if !obs.is_finite() || obs <= lower || obs > x_star {
        return Err(out_of_range());
    }
    let mut hi = 1.0;
    while curve(hi)? >= obs {
        hi *= 2.0;
        if hi > T_BRACKET_CAP {
            return Err(out_of_range());
        }
    }
    let mut lo = 0.0;
    while hi - lo > T_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if curve(mid)? > obs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

type Curve = Box<dyn Fn(f64) -> Result<f64, KernelError>>;

/// The decay curve matched by the estimator for a letter and setting, plus
/// its value at t = 0 (the stationary letter frequency): closed forms for
/// JC+CpG (the divergence A curve is evaluated numerically on the 6-state
/// chain), numeric 9-state kernels for general RN+YpR (letter C only).
fn conserved_curve(
    params: &SubstitutionParams,
    letter: Nucleotide,
    mode: PairMode,
) -> Result<(Curve, f64), EstimatorError> {
    check_letter(letter)?;
    match params.jc_cpg_rate() {
        Some(r) => {
            let sc = SpectralConstants::new(r)?;
            let curve: Curve = match (letter, mode) {
                (Nucleotide::C, PairMode::Ancestor) => Box::new(move |t| cc_closed_form(r, t)),
                (Nucleotide::C, PairMode::Divergence) => {
                    Box::new(move |t| cc_closed_form(r, 2.0 * t))
                }
                (Nucleotide::A, PairMode::Ancestor) => Box::new(move |t| aa_closed_form(r, t)),
                (Nucleotide::A, PairMode::Divergence) => {
                    let six = build_six_state_jc(r).map_err(KernelError::from)?;
                    let w_a = letter_states(&six, Nucleotide::A);
                    Box::new(move |t| pair_freq_divergence(&six, &w_a, &w_a, t))
                }
                _ => unreachable!(),
            };
            let x_star = match letter {
                Nucleotide::C => sc.c_star,
                _ => sc.a_star,
            };
            Ok((curve, x_star))
        }
        None => {
            if letter != Nucleotide::C {
                return Err(EstimatorError::InvalidLetter(letter.to_char()));
            }
            let nine = build_nine_state(params).map_err(KernelError::from)?;
            let w_c = letter_states(&nine, Nucleotide::C);
            let x_star = nine.stationary_mass(&w_c);
            let curve: Curve = match mode {
                PairMode::Ancestor => {
                    Box::new(move |t| pair_freq_ancestor(&nine, &w_c, &w_c, t))
                }
                PairMode::Divergence => {
                    Box::new(move |t| pair_freq_divergence(&nine, &w_c, &w_c, t))
                }
            };
            Ok((curve, x_star))
        }
    }
}

/// Value of the curve inverted by [`invert_observed`], mainly for reporting
/// analytic predictions next to Monte Carlo results.
pub fn curve_value(
    params: &SubstitutionParams,
    letter: Nucleotide,
    mode: PairMode,
    t: f64,
) -> Result<f64, EstimatorError> {
    let (curve, _) = conserved_curve(params, letter, mode)?;
    Ok(curve(t)?)
}

/// Solves the appropriate decay curve at an observed conserved-letter
/// frequency.
pub fn invert_observed(
    params: &SubstitutionParams,
    letter: Nucleotide,
    mode: PairMode,
    obs: f64,
) -> Result<f64, EstimatorError> {
    let (curve, x_star) = conserved_curve(params, letter, mode)?;
    invert_curve(|t| curve(t), obs, x_star)
}

/// A point estimate of the branch time with its asymptotic confidence
/// interval. `ci` is `None` when the plug-ins `kappa` or `nu` came out
/// nonpositive (possible on short alignments; almost surely positive for
/// large N).
#[derive(Clone, Copy, Debug)]
pub struct TimeEstimate {
    pub letter: Nucleotide,
    pub mode: PairMode,
    pub n: usize,
    pub t: f64,
    pub ci: Option<(f64, f64)>,
    pub kappa: f64,
    pub nu: f64,
    pub epsilon: f64,
}

impl TimeEstimate {
    pub const CSV_HEADER: &'static str = "letter,mode,N,T,ci_low,ci_high,kappa,nu,epsilon";

    pub fn csv_row(&self) -> String {
        let (lo, hi) = self.ci.unwrap_or((f64::NAN, f64::NAN));
        format!(
            "{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}",
            self.letter, self.mode, self.n, self.t, lo, hi, self.kappa, self.nu, self.epsilon
        )
    }
}

/// Full estimation pipeline for one letter and setting: observe, invert the
/// matching curve, and attach the plug-in confidence interval at level
/// `epsilon`.
pub fn estimate_time(
    pair: &AlignedPair,
    params: &SubstitutionParams,
    letter: Nucleotide,
    mode: PairMode,
    epsilon: f64,
) -> Result<TimeEstimate, EstimatorError> {
    check_letter(letter)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(EstimatorError::InvalidEpsilon(epsilon));
    }
    let stats = observe(pair);
    let (kappa, nu) = match params.jc_cpg_rate() {
        Some(_) => kappa_nu(&stats, params, letter, mode)?,
        None => {
            if letter != Nucleotide::C {
                return Err(EstimatorError::InvalidLetter(letter.to_char()));
            }
            let kappa = match mode {
                PairMode::Ancestor => kappa_rn(&stats, params),
                PairMode::Divergence => 2.0 * kappa_rn(&stats, params),
            };
            (kappa, nu_obs(&stats, letter)?)
        }
    };
    let t = invert_observed(params, letter, mode, stats.conserved(letter))?;
    let ci = if kappa > 0.0 && nu > 0.0 {
        let z = normal_quantile(epsilon)?;
        let half = z * (nu / stats.n as f64).sqrt() / kappa;
        Some((t - half, t + half))
    } else {
        None
    };
    Ok(TimeEstimate {
        letter,
        mode,
        n: stats.n,
        t,
        ci,
        kappa,
        nu,
        epsilon,
    })
}
