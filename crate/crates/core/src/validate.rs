//! Numerical self-checks behind `yprsim validate`: generator sanity,
//! closed forms against matrix exponentials, the reversibility dichotomy,
//! the derivative identities and the lumping consistency of the encodings.

use nalgebra::DMatrix;

use crate::kernels::{
    aa_closed_form, cc_closed_form, curve_derivative_identities, letter_states,
    pair_freq_ancestor_at, pair_freq_divergence_at, transition_grid, transition_matrix,
    KernelError,
};
use crate::model::chain::EncodedChain;
use crate::model::encodings::{
    build_four_state_jc, build_nine_state, build_six_state_jc, build_windowed,
    window_to_nine_label,
};
use crate::model::presets;
use crate::model::sequence::Nucleotide;
use crate::model::SubstitutionParams;

/// Whether a check requires its value to stay below a tolerance or to
/// exceed a margin (the non-reversibility checks are of the second kind).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Requirement {
    AtMost,
    AtLeast,
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub threshold: f64,
    pub requirement: Requirement,
}

impl Check {
    fn at_most(name: &'static str, value: f64, threshold: f64) -> Check {
        Check {
            name,
            value,
            threshold,
            requirement: Requirement::AtMost,
        }
    }

    fn at_least(name: &'static str, value: f64, threshold: f64) -> Check {
        Check {
            name,
            value,
            threshold,
            requirement: Requirement::AtLeast,
        }
    }

    pub fn passed(&self) -> bool {
        match self.requirement {
            Requirement::AtMost => self.value <= self.threshold,
            Requirement::AtLeast => self.value >= self.threshold,
        }
    }

    pub fn describe(&self) -> String {
        let rel = match self.requirement {
            Requirement::AtMost => "<=",
            Requirement::AtLeast => ">=",
        };
        format!(
            "{:<28} {:>12.3e} (required {} {:.1e})  {}",
            self.name,
            self.value,
            rel,
            self.threshold,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Max of |row sums| and of the negative part of off-diagonal entries.
pub fn generator_residual(chain: &EncodedChain) -> f64 {
    let n = chain.n();
    let mut worst = 0.0_f64;
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            row_sum += chain.generator[(i, j)];
            if i != j {
                worst = worst.max(-chain.generator[(i, j)]);
            }
        }
        worst = worst.max(row_sum.abs());
    }
    worst
}

/// Max of |pi' Q| entries, |sum(pi) - 1| and the negative part of pi.
pub fn stationarity_residual(chain: &EncodedChain) -> f64 {
    let residual = (chain.generator.transpose() * &chain.stationary).amax();
    let mass: f64 = chain.stationary.iter().sum();
    let neg = chain.stationary.iter().fold(0.0_f64, |a, &x| a.max(-x));
    residual.max((mass - 1.0).abs()).max(neg)
}

/// Max over state pairs of |pi_a Q(a,b) - pi_b Q(b,a)|.
pub fn detailed_balance_residual(chain: &EncodedChain) -> f64 {
    let n = chain.n();
    let mut worst = 0.0_f64;
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let forward = chain.stationary[a] * chain.generator[(a, b)];
            let backward = chain.stationary[b] * chain.generator[(b, a)];
            worst = worst.max((forward - backward).abs());
        }
    }
    worst
}

/// Relative imbalance of the Kolmogorov cycle products along `cycle`
/// (labels, implicitly closed). Zero for a reversible chain.
pub fn cycle_imbalance(chain: &EncodedChain, cycle: &[&str]) -> f64 {
    let idx: Vec<usize> = cycle
        .iter()
        .map(|l| chain.state_index(l).expect("cycle state"))
        .collect();
    let mut forward = 1.0;
    let mut backward = 1.0;
    for k in 0..idx.len() {
        let a = idx[k];
        let b = idx[(k + 1) % idx.len()];
        forward *= chain.generator[(a, b)];
        backward *= chain.generator[(b, a)];
    }
    (forward - backward).abs() / forward.abs().max(backward.abs())
}

/// Stationary-weighted transition kernel of a lumped partition:
/// `P'(g,h) = sum_{a in g} pi(a)/pi(g) sum_{b in h} P(a,b)`.
fn lumped_kernel(chain: &EncodedChain, p: &DMatrix<f64>, groups: &[Vec<usize>]) -> DMatrix<f64> {
    let m = groups.len();
    let mut out = DMatrix::zeros(m, m);
    for (g, members) in groups.iter().enumerate() {
        let mass: f64 = members.iter().map(|&a| chain.stationary[a]).sum();
        for (h, targets) in groups.iter().enumerate() {
            let mut acc = 0.0;
            for &a in members {
                let row: f64 = targets.iter().map(|&b| p[(a, b)]).sum();
                acc += chain.stationary[a] * row;
            }
            out[(g, h)] = acc / mass;
        }
    }
    out
}

pub fn run_all() -> Result<Vec<Check>, KernelError> {
    let mut checks = Vec::new();
    let jc_rates = [0.0, 1.0, 10.0];
    let rn_sets = [
        SubstitutionParams::jc_cpg(1.0).expect("valid"),
        presets::kimura_cpg(),
        presets::survey_params()[6].1.clone(),
    ];

    // Generator and stationary invariants across every encoding.
    let mut generator_worst = 0.0_f64;
    let mut stationary_worst = 0.0_f64;
    let mut chains: Vec<EncodedChain> = Vec::new();
    for &r in &jc_rates {
        chains.push(build_four_state_jc(r)?);
        chains.push(build_six_state_jc(r)?);
    }
    for params in &rn_sets {
        chains.push(build_nine_state(params)?);
    }
    chains.push(build_windowed(&rn_sets[0], 3)?);
    chains.push(build_windowed(&rn_sets[0], 4)?);
    for chain in &chains {
        generator_worst = generator_worst.max(generator_residual(chain));
        stationary_worst = stationary_worst.max(stationarity_residual(chain));
    }
    checks.push(Check::at_most("generator_invariants", generator_worst, 1e-12));
    checks.push(Check::at_most("stationary_invariants", stationary_worst, 1e-10));

    // Closed forms against the matrix exponentials, sampled grid.
    let mut cc_worst = 0.0_f64;
    let mut aa_worst = 0.0_f64;
    let mut bracket_cc_worst = 0.0_f64;
    let mut bracket_aa_gap = 0.0_f64;
    for &r in &[0.0, 0.5, 1.0, 3.0, 10.0] {
        let four = build_four_state_jc(r)?;
        let six = build_six_state_jc(r)?;
        let w_c = letter_states(&four, Nucleotide::C);
        let w_a = letter_states(&six, Nucleotide::A);
        let step = 0.25;
        let count = 21; // covers [0, 5]
        for (k, (p4, p6)) in transition_grid(&four, step, count)?
            .zip(transition_grid(&six, step, count)?)
            .enumerate()
        {
            let t = step * k as f64;
            let cc = pair_freq_ancestor_at(&four, &w_c, &w_c, &p4);
            let aa = pair_freq_ancestor_at(&six, &w_a, &w_a, &p6);
            cc_worst = cc_worst.max((cc - cc_closed_form(r, t)?).abs());
            aa_worst = aa_worst.max((aa - aa_closed_form(r, t)?).abs());
            let cc_div = pair_freq_divergence_at(&four, &w_c, &w_c, &p4);
            bracket_cc_worst = bracket_cc_worst.max((cc_div - cc_closed_form(r, 2.0 * t)?).abs());
            if r == 10.0 {
                let aa_div = pair_freq_divergence_at(&six, &w_a, &w_a, &p6);
                bracket_aa_gap = bracket_aa_gap.max((aa_div - aa_closed_form(r, 2.0 * t)?).abs());
            }
        }
    }
    checks.push(Check::at_most("closed_form_cc", cc_worst, 1e-10));
    checks.push(Check::at_most("closed_form_aa", aa_worst, 1e-10));
    checks.push(Check::at_most("bracket_identity_cc", bracket_cc_worst, 1e-10));
    checks.push(Check::at_least("bracket_gap_aa_r10", bracket_aa_gap, 1e-9));

    // Reversibility dichotomy.
    let mut balance_worst = 0.0_f64;
    for &r in &jc_rates {
        balance_worst = balance_worst.max(detailed_balance_residual(&build_four_state_jc(r)?));
    }
    checks.push(Check::at_most("detailed_balance_4state", balance_worst, 1e-10));
    let six = build_six_state_jc(1.0)?;
    checks.push(Check::at_least(
        "cycle_imbalance_6state_r1",
        cycle_imbalance(&six, &["CA", "CY", "CG"]),
        1e-6,
    ));

    // Derivative identities.
    let mut derivative_worst = 0.0_f64;
    for &r in &jc_rates {
        let params = SubstitutionParams::jc_cpg(r).expect("valid");
        for &t in &[0.1, 0.5, 1.0, 2.0] {
            derivative_worst = derivative_worst.max(curve_derivative_identities(&params, t)?.max());
        }
    }
    checks.push(Check::at_most("derivative_identities", derivative_worst, 1e-7));

    // Lumping consistency: 9 -> 4 states for JC+CpG.
    let mut lump_worst = 0.0_f64;
    for &r in &jc_rates {
        let nine = build_nine_state(&SubstitutionParams::jc_cpg(r).expect("valid"))?;
        let four = build_four_state_jc(r)?;
        let lumped = nine
            .lump(|l| {
                let b = l.as_bytes();
                format!(
                    "{}{}",
                    if b[0] == b'C' { 'C' } else { 'c' },
                    if b[1] == b'G' { 'G' } else { 'g' }
                )
            })
            .map_err(crate::model::encodings::EncodingError::from)?;
        for (li, label_i) in lumped.labels.iter().enumerate() {
            let fi = four.state_index(label_i).expect("4-state label");
            for (lj, label_j) in lumped.labels.iter().enumerate() {
                let fj = four.state_index(label_j).expect("4-state label");
                lump_worst =
                    lump_worst.max((lumped.generator[(li, lj)] - four.generator[(fi, fj)]).abs());
            }
        }
    }
    checks.push(Check::at_most("lumping_nine_to_four", lump_worst, 1e-12));

    // Window kernel marginal against the 9-state kernel at a fixed time.
    let params = &rn_sets[2];
    let nine = build_nine_state(params)?;
    let w3 = build_windowed(params, 3)?;
    let t = 0.7;
    let p36 = transition_matrix(&w3, t)?;
    let p9 = transition_matrix(&nine, t)?;
    let groups: Vec<Vec<usize>> = nine
        .labels
        .iter()
        .map(|target| w3.states_matching(|l| window_to_nine_label(l) == *target))
        .collect();
    let marginal = lumped_kernel(&w3, &p36, &groups);
    let mut kernel_worst = 0.0_f64;
    for i in 0..9 {
        for j in 0..9 {
            kernel_worst = kernel_worst.max((marginal[(i, j)] - p9[(i, j)]).abs());
        }
    }
    checks.push(Check::at_most("lumping_window_kernel", kernel_worst, 1e-10));

    Ok(checks)
}
