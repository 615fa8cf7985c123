//! Exact event-driven simulation of the neighbour-dependent substitution
//! process on circular sequences.
//!
//! Every site carries an exponential clock at its current total
//! substitution rate. When a site fires, the target letter is drawn from
//! the per-target rates, and the clocks of the site and its two neighbours
//! are redrawn (rates depend only on nearest neighbours, and exponential
//! clocks are memoryless, so redrawing is statistically exact). There is no
//! time discretization anywhere.

mod event_queue;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::kernels::KernelError;
use crate::model::encodings::build_nine_state;
use crate::model::sequence::{Nucleotide, Sequence, SequenceError};
use crate::model::SubstitutionParams;
use event_queue::EventQueue;

#[derive(Debug, Error, PartialEq)]
pub enum SimulatorError {
    #[error("time must be nonnegative and finite, got {0}")]
    BadTime(f64),
    #[error("burn-in must be positive and finite, got {0}")]
    BadBurnIn(f64),
    #[error("aligned sequences must have equal length ({left} vs {right})")]
    UnequalLengths { left: usize, right: usize },
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Which experimental setting produced an aligned pair: one ancestral and
/// one present sequence, or two present sequences diverged from a common
/// stationary ancestor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairMode {
    Ancestor,
    Divergence,
}

impl fmt::Display for PairMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairMode::Ancestor => "ancestor",
            PairMode::Divergence => "divergence",
        })
    }
}

impl FromStr for PairMode {
    type Err = String;

    fn from_str(s: &str) -> Result<PairMode, String> {
        match s {
            "ancestor" => Ok(PairMode::Ancestor),
            "divergence" => Ok(PairMode::Divergence),
            other => Err(format!(
                "unknown mode {other:?}; expected `ancestor` or `divergence`"
            )),
        }
    }
}

/// Two aligned equal-length sequences plus the setting they came from.
/// In ancestor mode `left` is the sequence at time 0 and `right` the one at
/// time `t`; in divergence mode both are descendants.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedPair {
    pub left: Sequence,
    pub right: Sequence,
    pub mode: PairMode,
}

impl AlignedPair {
    pub fn new(left: Sequence, right: Sequence, mode: PairMode) -> Result<Self, SimulatorError> {
        if left.len() != right.len() {
            return Err(SimulatorError::UnequalLengths {
                left: left.len(),
                right: right.len(),
            });
        }
        Ok(AlignedPair { left, right, mode })
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Full description of one simulation run.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub params: SubstitutionParams,
    pub n: usize,
    pub t: f64,
    pub mode: PairMode,
    pub burn_in: f64,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn new(
        params: SubstitutionParams,
        n: usize,
        t: f64,
        mode: PairMode,
        burn_in: f64,
        seed: u64,
    ) -> Result<Self, SimulatorError> {
        if n < 3 {
            return Err(SimulatorError::Sequence(SequenceError::TooShort(n)));
        }
        if !t.is_finite() || t < 0.0 {
            return Err(SimulatorError::BadTime(t));
        }
        if !burn_in.is_finite() || burn_in <= 0.0 {
            return Err(SimulatorError::BadBurnIn(burn_in));
        }
        Ok(ExperimentSpec {
            params,
            n,
            t,
            mode,
            burn_in,
            seed,
        })
    }
}

/// Burn-in long enough to make the residual distance to stationarity
/// negligible: 5 time units for JC+CpG (slowest relevant relaxation rate is
/// 4, so the residual is about e^-20), and 10 / gap for general parameters,
/// where gap is the smallest nonzero decay rate of the 9-state chain.
pub fn default_burn_in(params: &SubstitutionParams) -> Result<f64, SimulatorError> {
    if params.jc_cpg_rate().is_some() {
        return Ok(5.0);
    }
    let nine = build_nine_state(params).map_err(KernelError::from)?;
    let eigen = nine.generator.complex_eigenvalues();
    let gap = eigen
        .iter()
        .map(|l| -l.re)
        .filter(|&x| x > 1e-9)
        .fold(f64::INFINITY, f64::min);
    Ok(10.0 / gap)
}

/// The deterministic RNG family used everywhere: ChaCha12, seeded from a
/// 64-bit value, with independent per-replicate streams.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

#[inline]
fn exponential(rng: &mut impl Rng, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    // 1 - U lies in (0, 1], so the log is finite.
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// Per-context substitution rates, tabulated once per run:
/// `rate[left][x][right][y]` and the per-site totals.
struct RateTable {
    rate: [[[[f64; 4]; 4]; 4]; 4],
    total: [[[f64; 4]; 4]; 4],
}

impl RateTable {
    fn new(params: &SubstitutionParams) -> RateTable {
        let mut rate = [[[[0.0; 4]; 4]; 4]; 4];
        let mut total = [[[0.0; 4]; 4]; 4];
        for left in Nucleotide::ALL {
            for x in Nucleotide::ALL {
                for right in Nucleotide::ALL {
                    let mut sum = 0.0;
                    for y in Nucleotide::ALL {
                        if y == x {
                            continue;
                        }
                        let r = params
                            .site_rate(left, x, right, y)
                            .expect("distinct letters");
                        rate[left.index()][x.index()][right.index()][y.index()] = r;
                        sum += r;
                    }
                    total[left.index()][x.index()][right.index()] = sum;
                }
            }
        }
        RateTable { rate, total }
    }

    #[inline]
    fn total_at(&self, seq: &[Nucleotide], i: usize) -> f64 {
        let n = seq.len();
        let left = seq[(i + n - 1) % n].index();
        let right = seq[(i + 1) % n].index();
        self.total[left][seq[i].index()][right]
    }
}

fn evolve_in_place(
    seq: &mut [Nucleotide],
    table: &RateTable,
    t: f64,
    rng: &mut impl Rng,
) {
    let n = seq.len();
    let mut queue = EventQueue::new(n);
    for i in 0..n {
        queue.set(i, exponential(rng, table.total_at(seq, i)));
    }
    loop {
        let (now, i) = queue.min();
        if now > t {
            break;
        }
        // Draw the target from the per-target rates of the current context.
        let left = seq[(i + n - 1) % n].index();
        let right = seq[(i + 1) % n].index();
        let rates = &table.rate[left][seq[i].index()][right];
        let total = table.total[left][seq[i].index()][right];
        let mut u = rng.random::<f64>() * total;
        let mut target = None;
        for y in Nucleotide::ALL {
            let r = rates[y.index()];
            if r <= 0.0 {
                continue;
            }
            if u < r {
                target = Some(y);
                break;
            }
            u -= r;
        }
        // Roundoff in the cumulative sums can push u past the last positive
        // rate; fall back to it.
        let target = target.unwrap_or_else(|| {
            Nucleotide::ALL
                .into_iter()
                .rev()
                .find(|y| rates[y.index()] > 0.0)
                .expect("site has positive total rate")
        });
        seq[i] = target;
        // The event changes the context of the site and both neighbours;
        // their clocks are redrawn from the event time.
        for j in [(i + n - 1) % n, i, (i + 1) % n] {
            queue.set(j, now + exponential(rng, table.total_at(seq, j)));
        }
    }
}

/// Runs the process for time `t` starting from `seq`. Event times and
/// targets are statistically exact realizations of the chain.
pub fn evolve(
    seq: &Sequence,
    params: &SubstitutionParams,
    t: f64,
    rng: &mut impl Rng,
) -> Result<Sequence, SimulatorError> {
    if !t.is_finite() || t < 0.0 {
        return Err(SimulatorError::BadTime(t));
    }
    let table = RateTable::new(params);
    let mut bases = seq.as_slice().to_vec();
    evolve_in_place(&mut bases, &table, t, rng);
    Ok(Sequence::new(bases)?)
}

/// Draws an approximately stationary sequence: uniform i.i.d. start, then
/// `burn_in` time units of evolution.
pub fn sample_stationary(
    params: &SubstitutionParams,
    n: usize,
    burn_in: f64,
    rng: &mut impl Rng,
) -> Result<Sequence, SimulatorError> {
    if !burn_in.is_finite() || burn_in <= 0.0 {
        return Err(SimulatorError::BadBurnIn(burn_in));
    }
    let bases: Vec<Nucleotide> = (0..n)
        .map(|_| Nucleotide::from_index(rng.random_range(0..4)))
        .collect();
    let seq = Sequence::new(bases)?;
    evolve(&seq, params, burn_in, rng)
}

/// Ancestor setting: left is a stationary ancestor, right its descendant
/// after time `t`.
pub fn experiment_ancestor(
    spec: &ExperimentSpec,
    rng: &mut impl Rng,
) -> Result<AlignedPair, SimulatorError> {
    let ancestor = sample_stationary(&spec.params, spec.n, spec.burn_in, rng)?;
    let present = evolve(&ancestor, &spec.params, spec.t, rng)?;
    AlignedPair::new(ancestor, present, PairMode::Ancestor)
}

/// Divergence setting: two independent descendants of one stationary
/// ancestor, each after time `t`.
pub fn experiment_divergence(
    spec: &ExperimentSpec,
    rng: &mut impl Rng,
) -> Result<AlignedPair, SimulatorError> {
    let ancestor = sample_stationary(&spec.params, spec.n, spec.burn_in, rng)?;
    let left = evolve(&ancestor, &spec.params, spec.t, rng)?;
    let right = evolve(&ancestor, &spec.params, spec.t, rng)?;
    AlignedPair::new(left, right, PairMode::Divergence)
}

/// Runs the experiment described by `spec` with its own seeded RNG, so the
/// output is a pure function of the spec.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<AlignedPair, SimulatorError> {
    run_experiment_replicate(spec, 0)
}

/// Same as [`run_experiment`] with an independent RNG stream per replicate
/// index; replicates can run in parallel and still be reproducible.
pub fn run_experiment_replicate(
    spec: &ExperimentSpec,
    replicate: u64,
) -> Result<AlignedPair, SimulatorError> {
    let mut rng = replicate_rng(spec.seed, replicate);
    match spec.mode {
        PairMode::Ancestor => experiment_ancestor(spec, &mut rng),
        PairMode::Divergence => experiment_divergence(spec, &mut rng),
    }
}

/// Conservative standard error for the mean of 0/1 site statistics whose
/// dependence range is `lag` (indicators of words up to `lag+1` sites
/// apart are independent): sqrt((1 + 2 lag) p (1-p) / n).
pub fn dependent_se(p_hat: f64, n: usize, lag: usize) -> f64 {
    let p = p_hat.clamp(1e-12, 1.0 - 1e-12);
    ((1.0 + 2.0 * lag as f64) * p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::cc_closed_form;
    use approx::assert_abs_diff_eq;

    fn letter_fraction(seq: &Sequence, x: Nucleotide) -> f64 {
        seq.as_slice().iter().filter(|&&b| b == x).count() as f64 / seq.len() as f64
    }

    #[test]
    fn evolve_zero_time_is_identity() {
        let p = SubstitutionParams::jc_cpg(5.0).unwrap();
        let seq: Sequence = "ACGTACGTAC".parse().unwrap();
        let mut rng = replicate_rng(7, 0);
        assert_eq!(evolve(&seq, &p, 0.0, &mut rng).unwrap(), seq);
    }

    #[test]
    fn experiments_are_deterministic_in_the_seed() {
        let p = SubstitutionParams::jc_cpg(10.0).unwrap();
        let spec = ExperimentSpec::new(p, 500, 0.4, PairMode::Divergence, 2.0, 42).unwrap();
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a, b);
        let c = run_experiment_replicate(&spec, 1).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ancestor_mode_at_zero_time_gives_identical_records() {
        let p = SubstitutionParams::jc_cpg(3.0).unwrap();
        let spec = ExperimentSpec::new(p, 200, 0.0, PairMode::Ancestor, 1.0, 9).unwrap();
        let pair = run_experiment(&spec).unwrap();
        assert_eq!(pair.left, pair.right);
    }

    #[test]
    fn single_site_marginal_matches_jukes_cantor_kernel() {
        // r = 0: P(site unchanged at t) = 1/4 + 3/4 e^{-4t}.
        let p = SubstitutionParams::jc_cpg(0.0).unwrap();
        let n = 100_000;
        let t = 0.5;
        let mut rng = replicate_rng(11, 0);
        let start = sample_stationary(&p, n, 5.0, &mut rng).unwrap();
        let end = evolve(&start, &p, t, &mut rng).unwrap();
        let conserved = start
            .as_slice()
            .iter()
            .zip(end.as_slice())
            .filter(|(a, b)| a == b)
            .count() as f64
            / n as f64;
        let expected = 0.25 + 0.75 * (-4.0 * t).exp();
        let se = dependent_se(expected, n, 2);
        assert!(
            (conserved - expected).abs() < 3.0 * se,
            "conserved {conserved} vs {expected} (3se = {})",
            3.0 * se
        );
    }

    #[test]
    fn stationary_sample_matches_known_frequencies() {
        let n = 100_000;
        // r = 0: uniform letters.
        let p0 = SubstitutionParams::jc_cpg(0.0).unwrap();
        let mut rng = replicate_rng(13, 0);
        let s0 = sample_stationary(&p0, n, 5.0, &mut rng).unwrap();
        for x in Nucleotide::ALL {
            let f = letter_fraction(&s0, x);
            assert!((f - 0.25).abs() < 3.0 * dependent_se(0.25, n, 2));
        }
        // r = 3: (C)* = (4+r)/(16+5r).
        let p3 = SubstitutionParams::jc_cpg(3.0).unwrap();
        let mut rng = replicate_rng(13, 1);
        let s3 = sample_stationary(&p3, n, 5.0, &mut rng).unwrap();
        let expected_c = 7.0 / 31.0;
        let f_c = letter_fraction(&s3, Nucleotide::C);
        assert!((f_c - expected_c).abs() < 3.0 * dependent_se(expected_c, n, 2));
        // r = 10: (CG)* = 1/66.
        let p10 = SubstitutionParams::jc_cpg(10.0).unwrap();
        let mut rng = replicate_rng(13, 2);
        let s10 = sample_stationary(&p10, n, 5.0, &mut rng).unwrap();
        let cg = (0..n)
            .filter(|&i| s10.at(i) == Nucleotide::C && s10.at(i + 1) == Nucleotide::G)
            .count() as f64
            / n as f64;
        let expected_cg = 1.0 / 66.0;
        assert!(
            (cg - expected_cg).abs() < 3.0 * dependent_se(expected_cg, n, 3),
            "CG frequency {cg} vs {expected_cg}"
        );
    }

    #[test]
    fn conserved_c_fraction_tracks_the_closed_form() {
        let r = 10.0;
        let p = SubstitutionParams::jc_cpg(r).unwrap();
        let n = 100_000;
        let t = 0.3;
        let spec = ExperimentSpec::new(p, n, t, PairMode::Ancestor, 5.0, 101).unwrap();
        let pair = run_experiment(&spec).unwrap();
        let both_c = (0..n)
            .filter(|&i| pair.left.at(i) == Nucleotide::C && pair.right.at(i) == Nucleotide::C)
            .count() as f64
            / n as f64;
        let expected = cc_closed_form(r, t).unwrap();
        let se = dependent_se(expected, n, 2);
        assert!(
            (both_c - expected).abs() < 3.0 * se,
            "(C,C)_obs {both_c} vs {expected} (3se = {})",
            3.0 * se
        );
    }

    #[test]
    fn divergence_bracket_matches_doubled_time() {
        let r = 10.0;
        let p = SubstitutionParams::jc_cpg(r).unwrap();
        let n = 100_000;
        let t = 0.2;
        let spec = ExperimentSpec::new(p, n, t, PairMode::Divergence, 5.0, 202).unwrap();
        let pair = run_experiment(&spec).unwrap();
        let both_c = (0..n)
            .filter(|&i| pair.left.at(i) == Nucleotide::C && pair.right.at(i) == Nucleotide::C)
            .count() as f64
            / n as f64;
        let expected = cc_closed_form(r, 2.0 * t).unwrap();
        let se = dependent_se(expected, n, 2);
        assert!(
            (both_c - expected).abs() < 3.0 * se,
            "[C,C]_obs {both_c} vs {expected}"
        );
    }

    #[test]
    fn default_burn_in_rules() {
        let jc = SubstitutionParams::jc_cpg(7.0).unwrap();
        assert_eq!(default_burn_in(&jc).unwrap(), 5.0);
        let kimura = crate::model::presets::kimura_cpg();
        let b = default_burn_in(&kimura).unwrap();
        assert!(b > 0.0 && b < 10.0, "burn-in {b}");
    }

    #[test]
    fn spec_validation() {
        let p = SubstitutionParams::jc_cpg(1.0).unwrap();
        assert!(ExperimentSpec::new(p.clone(), 2, 0.1, PairMode::Ancestor, 1.0, 0).is_err());
        assert!(ExperimentSpec::new(p.clone(), 10, -0.1, PairMode::Ancestor, 1.0, 0).is_err());
        assert!(ExperimentSpec::new(p, 10, 0.1, PairMode::Ancestor, 0.0, 0).is_err());
    }
}
