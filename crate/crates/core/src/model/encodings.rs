//! Builders for the encoded autonomous chains.
//!
//! Neighbour influence in the RN+YpR class only flows between a pyrimidine
//! and the purine to its right, and only through substitutions that stay
//! inside a class (C<->T, A<->G). Coding the leftmost site of a window as
//! {R,T,C} and the rightmost as {Y,G,A} therefore yields a Markov chain
//! that is autonomous: everything the boundary sites need to know about
//! their outside neighbours is invisible inside the codes R and Y.
//!
//! Label conventions:
//! * window chains (9/36/144 states): one character per coordinate, e.g.
//!   `"CG"`, `"CATY"` — first in {R,T,C}, middles in {A,T,C,G}, last in
//!   {Y,G,A};
//! * the 4- and 6-state Jukes-Cantor+CpG chains use a lowercase letter for
//!   the complement class: `"cG"` reads "site is not C, right neighbour is
//!   G", `"cY"` reads "not C, right neighbour is a pyrimidine".

use nalgebra::DMatrix;

use super::chain::{ChainError, EncodedChain};
use super::sequence::Nucleotide;
use super::{ModelError, SubstitutionParams, YprTransition};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EncodingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

const FIRST_CODES: [char; 3] = ['R', 'T', 'C'];
const LAST_CODES: [char; 3] = ['Y', 'G', 'A'];

/// The 4x4 chain tracking (C-status of a site, G-status of its right
/// neighbour) under JC+CpG. States in order: CG, cG, cg, Cg.
pub fn build_four_state_jc(r: f64) -> Result<EncodedChain, EncodingError> {
    SubstitutionParams::jc_cpg(r)?; // validates r
    let labels: Vec<String> = ["CG", "cG", "cg", "Cg"].iter().map(|s| s.to_string()).collect();
    #[rustfmt::skip]
    let rates = DMatrix::from_row_slice(4, 4, &[
        0.0,     3.0 + r, 0.0, 3.0 + r,
        1.0,     0.0,     3.0, 0.0,
        0.0,     1.0,     0.0, 1.0,
        1.0,     0.0,     3.0, 0.0,
    ]);
    Ok(EncodedChain::from_rates(labels, rates)?)
}

/// The 6-state chain tracking (C-status of a site, its right neighbour
/// coded as A, G or Y) under JC+CpG. States in order: CA, CG, CY, cA, cG,
/// cY. Unlike the 4-state chain this one is not reversible for r > 0.
///
/// Rates are read off the per-site rate rule; representatives of each coded
/// class are required to agree, which is what makes the encoding autonomous.
pub fn build_six_state_jc(r: f64) -> Result<EncodedChain, EncodingError> {
    use Nucleotide::*;
    let p = SubstitutionParams::jc_cpg(r)?;
    let labels: Vec<String> = ["CA", "CG", "CY", "cA", "cG", "cY"]
        .iter()
        .map(|s| s.to_string())
        .collect();

    let agree = |values: &[f64]| -> f64 {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi - lo < 1e-12, "encoding is not autonomous: {values:?}");
        values[0]
    };
    // Representative letters for the coded coordinate values.
    let not_c = [A, T, G];
    let y_class = [C, T];
    let rep_right = |c2: usize| -> Vec<Nucleotide> {
        match c2 {
            0 => vec![A],
            1 => vec![G],
            _ => y_class.to_vec(),
        }
    };
    let rep_left = |c1: usize| -> Vec<Nucleotide> {
        if c1 == 0 {
            vec![C]
        } else {
            not_c.to_vec()
        }
    };

    let mut rates = DMatrix::zeros(6, 6);
    let idx = |c1: usize, c2: usize| c1 * 3 + c2;
    for c1 in 0..2 {
        for c2 in 0..3 {
            let from = idx(c1, c2);
            // First coordinate: C <-> not-C, second coordinate fixed.
            if c1 == 0 {
                let exits: Vec<f64> = rep_right(c2)
                    .iter()
                    .map(|&rt| {
                        [A, T, G]
                            .iter()
                            .map(|&y| p.site_rate(A, C, rt, y).unwrap())
                            .sum()
                    })
                    .collect();
                rates[(from, idx(1, c2))] = agree(&exits);
            } else {
                let entries: Vec<f64> = not_c
                    .iter()
                    .flat_map(|&src| {
                        rep_right(c2)
                            .iter()
                            .map(|&rt| p.site_rate(A, src, rt, C).unwrap())
                            .collect::<Vec<_>>()
                    })
                    .collect();
                rates[(from, idx(0, c2))] = agree(&entries);
            }
            // Second coordinate: A, G, Y; first coordinate fixed. The right
            // neighbour of this site lies outside the encoding; a pyrimidine
            // representative keeps it inert.
            let lefts = rep_left(c1);
            let rate_to = |targets: &[Nucleotide], src: Nucleotide| -> f64 {
                let vals: Vec<f64> = lefts
                    .iter()
                    .map(|&l| targets.iter().map(|&y| p.site_rate(l, src, C, y).unwrap()).sum())
                    .collect();
                agree(&vals)
            };
            match c2 {
                0 => {
                    rates[(from, idx(c1, 1))] = rate_to(&[G], A);
                    rates[(from, idx(c1, 2))] = rate_to(&y_class, A);
                }
                1 => {
                    rates[(from, idx(c1, 0))] = rate_to(&[A], G);
                    rates[(from, idx(c1, 2))] = rate_to(&y_class, G);
                }
                _ => {
                    let into_a: Vec<f64> = lefts
                        .iter()
                        .flat_map(|&l| {
                            y_class
                                .iter()
                                .map(|&src| p.site_rate(l, src, C, A).unwrap())
                                .collect::<Vec<_>>()
                        })
                        .collect();
                    let into_g: Vec<f64> = lefts
                        .iter()
                        .flat_map(|&l| {
                            y_class
                                .iter()
                                .map(|&src| p.site_rate(l, src, C, G).unwrap())
                                .collect::<Vec<_>>()
                        })
                        .collect();
                    rates[(from, idx(c1, 0))] = agree(&into_a);
                    rates[(from, idx(c1, 1))] = agree(&into_g);
                }
            }
        }
    }
    // Relabel indices: c2 order above is A, G, Y -> label order CA CG CY.
    let order = [idx(0, 0), idx(0, 1), idx(0, 2), idx(1, 0), idx(1, 1), idx(1, 2)];
    let mut reordered = DMatrix::zeros(6, 6);
    for (i, &oi) in order.iter().enumerate() {
        for (j, &oj) in order.iter().enumerate() {
            reordered[(i, j)] = rates[(oi, oj)];
        }
    }
    Ok(EncodedChain::from_rates(labels, reordered)?)
}

/// The 9-state dinucleotide chain over {R,T,C} x {Y,G,A}, valid for every
/// RN+YpR parameter set.
pub fn build_nine_state(params: &SubstitutionParams) -> Result<EncodedChain, EncodingError> {
    build_window_chain(params, 2)
}

/// Window chains over {R,T,C} x {A,T,C,G}^(width-2) x {Y,G,A}: 36 states
/// for width 3, 144 for width 4. Their marginals on any embedded
/// dinucleotide reproduce the 9-state quantities; the wider windows exist to
/// evaluate pair frequencies of two- and three-site words.
pub fn build_windowed(
    params: &SubstitutionParams,
    width: usize,
) -> Result<EncodedChain, EncodingError> {
    if !(3..=4).contains(&width) {
        return Err(ModelError::InvalidWidth(width).into());
    }
    build_window_chain(params, width)
}

fn build_window_chain(
    params: &SubstitutionParams,
    width: usize,
) -> Result<EncodedChain, EncodingError> {
    use Nucleotide::*;
    let k = width - 2; // number of fully resolved middle sites
    let n_mid = 4usize.pow(k as u32);
    let n = 3 * n_mid * 3;

    let decode = |s: usize| -> (usize, Vec<Nucleotide>, usize) {
        let last = s % 3;
        let rest = s / 3;
        let mid_idx = rest % n_mid;
        let first = rest / n_mid;
        let mut mids = vec![A; k];
        let mut m = mid_idx;
        for j in (0..k).rev() {
            mids[j] = Nucleotide::from_index(m % 4);
            m /= 4;
        }
        (first, mids, last)
    };
    let encode = |first: usize, mids: &[Nucleotide], last: usize| -> usize {
        let mut mid_idx = 0usize;
        for &m in mids {
            mid_idx = mid_idx * 4 + m.index();
        }
        (first * n_mid + mid_idx) * 3 + last
    };

    let labels: Vec<String> = (0..n)
        .map(|s| {
            let (first, mids, last) = decode(s);
            let mut l = String::with_capacity(width);
            l.push(FIRST_CODES[first]);
            for m in &mids {
                l.push(m.to_char());
            }
            l.push(LAST_CODES[last]);
            l
        })
        .collect();

    let v_r = params.v_purines();
    let v_y = params.v_pyrimidines();
    // Pyrimidine identity of a coded first coordinate (for boosts of its
    // right neighbour), and purine identity of a coded last coordinate (for
    // boosts of its left neighbour).
    let first_letter = |first: usize| -> Option<Nucleotide> {
        match first {
            1 => Some(T),
            2 => Some(C),
            _ => None, // R: a purine, never the pyrimidine of a YpR pair
        }
    };
    let last_letter = |last: usize| -> Option<Nucleotide> {
        match last {
            1 => Some(G),
            2 => Some(A),
            _ => None, // Y: a pyrimidine, never the purine of a YpR pair
        }
    };
    let boost_second = |left: Option<Nucleotide>, from: Nucleotide, to: Nucleotide| -> f64 {
        left.and_then(|l| YprTransition::second_position(l, from, to))
            .map(|t| params.ypr(t))
            .unwrap_or(0.0)
    };
    let boost_first = |from: Nucleotide, to: Nucleotide, right: Option<Nucleotide>| -> f64 {
        right
            .and_then(|r| YprTransition::first_position(from, to, r))
            .map(|t| params.ypr(t))
            .unwrap_or(0.0)
    };

    let mut rates = DMatrix::zeros(n, n);
    for s in 0..n {
        let (first, mids, last) = decode(s);

        // First coordinate. Its right neighbour is the first middle site,
        // or the last coordinate when the window is a bare dinucleotide.
        let right_of_first = if k > 0 {
            Some(mids[0]).filter(|m| m.is_purine())
        } else {
            last_letter(last)
        };
        match first {
            0 => {
                rates[(s, encode(1, &mids, last))] = params.v(T);
                rates[(s, encode(2, &mids, last))] = params.v(C);
            }
            1 => {
                rates[(s, encode(0, &mids, last))] = v_r;
                rates[(s, encode(2, &mids, last))] =
                    params.w(C) + boost_first(T, C, right_of_first);
            }
            _ => {
                rates[(s, encode(0, &mids, last))] = v_r;
                rates[(s, encode(1, &mids, last))] =
                    params.w(T) + boost_first(C, T, right_of_first);
            }
        }

        // Middle sites carry full letters; both neighbours are visible.
        for j in 0..k {
            let x = mids[j];
            let left = if j == 0 {
                first_letter(first)
            } else {
                Some(mids[j - 1]).filter(|m| m.is_pyrimidine())
            };
            let right = if j + 1 == k {
                last_letter(last)
            } else {
                Some(mids[j + 1]).filter(|m| m.is_purine())
            };
            for y in Nucleotide::ALL {
                if y == x {
                    continue;
                }
                let mut rate = params.base_rate(x, y);
                if x.is_purine() && y.is_purine() {
                    rate += boost_second(left, x, y);
                }
                if x.is_pyrimidine() && y.is_pyrimidine() {
                    rate += boost_first(x, y, right);
                }
                let mut new_mids = mids.clone();
                new_mids[j] = y;
                rates[(s, encode(first, &new_mids, last))] = rate;
            }
        }

        // Last coordinate. Its left neighbour is the last middle site, or
        // the first coordinate when the window is a bare dinucleotide.
        let left_of_last = if k > 0 {
            Some(mids[k - 1]).filter(|m| m.is_pyrimidine())
        } else {
            first_letter(first)
        };
        match last {
            0 => {
                rates[(s, encode(first, &mids, 1))] = params.v(G);
                rates[(s, encode(first, &mids, 2))] = params.v(A);
            }
            1 => {
                rates[(s, encode(first, &mids, 0))] = v_y;
                rates[(s, encode(first, &mids, 2))] =
                    params.w(A) + boost_second(left_of_last, G, A);
            }
            _ => {
                rates[(s, encode(first, &mids, 0))] = v_y;
                rates[(s, encode(first, &mids, 1))] =
                    params.w(G) + boost_second(left_of_last, A, G);
            }
        }
    }

    Ok(EncodedChain::from_rates(labels, rates)?)
}

/// Maps a window-chain label onto the embedded dinucleotide label formed by
/// its first two coordinates, recoding the second coordinate into {Y,G,A}.
/// Used to check that wider windows lump exactly onto the 9-state chain.
pub fn window_to_nine_label(label: &str) -> String {
    let mut chars = label.chars();
    let first = chars.next().expect("window label");
    let second = chars.next().expect("window label");
    let second = match second {
        'A' => 'A',
        'G' => 'G',
        'C' | 'T' | 'Y' => 'Y',
        other => other,
    };
    format!("{first}{second}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use approx::assert_abs_diff_eq;

    fn entry(chain: &EncodedChain, from: &str, to: &str) -> f64 {
        let i = chain.state_index(from).unwrap();
        let j = chain.state_index(to).unwrap();
        chain.generator[(i, j)]
    }

    #[test]
    fn four_state_matrix_entries() {
        let r = 2.0;
        let c = build_four_state_jc(r).unwrap();
        assert_eq!(entry(&c, "CG", "CG"), -(6.0 + 2.0 * r));
        assert_eq!(entry(&c, "CG", "cG"), 3.0 + r);
        assert_eq!(entry(&c, "cG", "cg"), 3.0);
        assert_eq!(entry(&c, "cg", "cg"), -2.0);
        assert_eq!(entry(&c, "Cg", "CG"), 1.0);
    }

    #[test]
    fn four_state_stationary_closed_form() {
        for r in [0.0, 2.0, 10.0] {
            let c = build_four_state_jc(r).unwrap();
            let d = 16.0 + 5.0 * r;
            let expected = [1.0, 3.0 + r, 9.0 + 3.0 * r, 3.0 + r];
            for (i, e) in expected.iter().enumerate() {
                assert_abs_diff_eq!(c.stationary[i], e / d, epsilon = 1e-13);
            }
        }
        // r = 2 pins (CG)_* = 1/26.
        let c = build_four_state_jc(2.0).unwrap();
        assert_abs_diff_eq!(c.stationary[0], 1.0 / 26.0, epsilon = 1e-14);
    }

    #[test]
    fn four_state_detailed_balance() {
        let c = build_four_state_jc(3.0).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let forward = c.stationary[a] * c.generator[(a, b)];
                let backward = c.stationary[b] * c.generator[(b, a)];
                assert_abs_diff_eq!(forward, backward, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn six_state_cycle_criterion() {
        // Forward product around CA -> CY -> CG -> CA versus the reverse
        // product: they differ exactly when r > 0.
        for (r, reversible) in [(0.0, true), (1.0, false), (10.0, false)] {
            let c = build_six_state_jc(r).unwrap();
            let fwd = entry(&c, "CA", "CY") * entry(&c, "CY", "CG") * entry(&c, "CG", "CA");
            let rev = entry(&c, "CA", "CG") * entry(&c, "CG", "CY") * entry(&c, "CY", "CA");
            if reversible {
                assert_abs_diff_eq!(fwd, rev, epsilon = 1e-12);
            } else {
                let margin = (fwd - rev).abs() / fwd.max(rev);
                assert!(margin > 1e-6, "cycle margin {margin} at r={r}");
            }
        }
    }

    #[test]
    fn six_state_rates_match_site_rule() {
        let r = 5.0;
        let c = build_six_state_jc(r).unwrap();
        assert_eq!(entry(&c, "CG", "CA"), 1.0 + r); // G -> A next to C
        assert_eq!(entry(&c, "CG", "cG"), 3.0 + r); // C -> * before G
        assert_eq!(entry(&c, "CA", "cA"), 3.0);
        assert_eq!(entry(&c, "cY", "CY"), 1.0);
        assert_eq!(entry(&c, "CY", "CA"), 1.0);
        assert_eq!(entry(&c, "CA", "CY"), 2.0);
    }

    #[test]
    fn nine_state_entries_follow_the_rate_rules() {
        let r = 3.0;
        let p = SubstitutionParams::jc_cpg(r).unwrap();
        let c = build_nine_state(&p).unwrap();
        assert_eq!(entry(&c, "CG", "CA"), 1.0 + r);
        assert_eq!(entry(&c, "CG", "TG"), 1.0 + r);
        assert_eq!(entry(&c, "RY", "RG"), 1.0); // v_G
        assert_eq!(entry(&c, "RY", "RA"), 1.0); // v_A
        assert_eq!(entry(&c, "CA", "RA"), 2.0); // v_R
        assert_eq!(entry(&c, "CA", "CY"), 2.0); // v_Y
        assert_eq!(entry(&c, "TG", "CG"), 1.0); // w_C, no boost in JC+CpG
    }

    #[test]
    fn nine_state_entries_general_params() {
        let p = presets::kimura_cpg();
        let c = build_nine_state(&p).unwrap();
        assert_eq!(entry(&c, "CG", "CA"), 3.0 + 10.0); // w_A + r(CG->CA)
        assert_eq!(entry(&c, "CG", "TG"), 3.0 + 10.0); // w_T + r(CG->TG)
        assert_eq!(entry(&c, "CA", "CG"), 3.0); // w_G, no CA->CG rate here
        assert_eq!(entry(&c, "RA", "RG"), 3.0); // w_G after a purine
        assert_eq!(entry(&c, "TY", "CY"), 3.0); // w_C between pyrimidines
    }

    #[test]
    fn nine_state_jc_symmetric_c_mass_is_quarter() {
        let p = SubstitutionParams::jc_cpg(0.0).unwrap();
        let c = build_nine_state(&p).unwrap();
        let c_states = c.states_matching(|l| l.starts_with('C'));
        assert_abs_diff_eq!(c.stationary_mass(&c_states), 0.25, epsilon = 1e-12);
    }

    #[test]
    fn nine_state_lumps_to_four_state_for_jc_cpg() {
        for r in [0.0, 1.0, 10.0] {
            let nine = build_nine_state(&SubstitutionParams::jc_cpg(r).unwrap()).unwrap();
            let four = build_four_state_jc(r).unwrap();
            let lumped = nine
                .lump(|l| {
                    let b = l.as_bytes();
                    let c1 = if b[0] == b'C' { 'C' } else { 'c' };
                    let c2 = if b[1] == b'G' { 'G' } else { 'g' };
                    format!("{c1}{c2}")
                })
                .unwrap();
            for (li, label_i) in lumped.labels.iter().enumerate() {
                let fi = four.state_index(label_i).unwrap();
                for (lj, label_j) in lumped.labels.iter().enumerate() {
                    let fj = four.state_index(label_j).unwrap();
                    assert_abs_diff_eq!(
                        lumped.generator[(li, lj)],
                        four.generator[(fi, fj)],
                        epsilon = 1e-12
                    );
                }
                assert_abs_diff_eq!(
                    lumped.stationary[li],
                    four.stationary[fi],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn six_state_agrees_with_nine_state_lumping() {
        for r in [0.0, 0.5, 10.0] {
            let six = build_six_state_jc(r).unwrap();
            let nine = build_nine_state(&SubstitutionParams::jc_cpg(r).unwrap()).unwrap();
            let lumped = nine
                .lump(|l| {
                    let b = l.as_bytes();
                    let c1 = if b[0] == b'C' { 'C' } else { 'c' };
                    format!("{c1}{}", b[1] as char)
                })
                .unwrap();
            for (li, label_i) in lumped.labels.iter().enumerate() {
                let si = six.state_index(label_i).unwrap();
                for (lj, label_j) in lumped.labels.iter().enumerate() {
                    let sj = six.state_index(label_j).unwrap();
                    assert_abs_diff_eq!(
                        lumped.generator[(li, lj)],
                        six.generator[(si, sj)],
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn six_state_marginal_matches_letter_mass() {
        for r in [0.0, 1.0, 10.0] {
            let six = build_six_state_jc(r).unwrap();
            let a_states = six.states_matching(|l| l.ends_with('A'));
            let expected = (8.0 + 3.0 * r) / (2.0 * (16.0 + 5.0 * r));
            assert_abs_diff_eq!(six.stationary_mass(&a_states), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn windowed_sizes_and_width_validation() {
        let p = SubstitutionParams::jc_cpg(1.0).unwrap();
        assert_eq!(build_windowed(&p, 3).unwrap().n(), 36);
        assert_eq!(build_windowed(&p, 4).unwrap().n(), 144);
        assert_eq!(
            build_windowed(&p, 2).unwrap_err(),
            EncodingError::Model(ModelError::InvalidWidth(2))
        );
        assert_eq!(
            build_windowed(&p, 5).unwrap_err(),
            EncodingError::Model(ModelError::InvalidWidth(5))
        );
    }

    #[test]
    fn window_lumps_exactly_onto_nine_state() {
        // Project (first, m, last) onto (first, code(m)) and drop the last
        // coordinate: the generator must reproduce the 9-state chain. Run on
        // a parameter set with every rate distinct.
        let p = presets::survey_params()[6].1.clone();
        let nine = build_nine_state(&p).unwrap();
        let w3 = build_windowed(&p, 3).unwrap();
        let lumped = w3.lump(|l| window_to_nine_label(l)).unwrap();
        for (li, label_i) in lumped.labels.iter().enumerate() {
            let ni = nine.state_index(label_i).unwrap();
            assert_abs_diff_eq!(lumped.stationary[li], nine.stationary[ni], epsilon = 1e-12);
            for (lj, label_j) in lumped.labels.iter().enumerate() {
                let nj = nine.state_index(label_j).unwrap();
                assert_abs_diff_eq!(
                    lumped.generator[(li, lj)],
                    nine.generator[(ni, nj)],
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn width3_jc_symmetric_single_site_mass() {
        let p = SubstitutionParams::jc_cpg(0.0).unwrap();
        let w3 = build_windowed(&p, 3).unwrap();
        let mid_c = w3.states_matching(|l| l.as_bytes()[1] == b'C');
        assert_abs_diff_eq!(w3.stationary_mass(&mid_c), 0.25, epsilon = 1e-12);
    }
}
