//! Built-in RN+YpR parameter sets for the monotonicity survey.

use super::{SubstitutionParams, YprTransition};

fn rn(v: [f64; 4], w: [f64; 4], ypr_named: &[(YprTransition, f64)]) -> SubstitutionParams {
    let mut ypr = [0.0; 8];
    for &(t, rate) in ypr_named {
        ypr[t as usize] = rate;
    }
    SubstitutionParams::new(v, w, ypr).expect("preset rates are valid")
}

/// Kimura-style rates (transversions 1, transitions 3) with CpG decay at
/// rate 10 on both CG -> CA and CG -> TG.
pub fn kimura_cpg() -> SubstitutionParams {
    rn(
        [1.0; 4],
        [3.0; 4],
        &[(YprTransition::CgToCa, 10.0), (YprTransition::CgToTg, 10.0)],
    )
}

/// The seven-column survey grid used by `yprsim scan`, spanning uniform,
/// Kimura-like and strongly asymmetric rate sets with various YpR
/// intensities. Rates are indexed [A, T, C, G].
pub fn survey_params() -> Vec<(&'static str, SubstitutionParams)> {
    use YprTransition::*;
    let cpg10 = [(CgToCa, 10.0), (CgToTg, 10.0)];
    let all = |x: f64| {
        [
            (CgToCa, x),
            (CgToTg, x),
            (TaToCa, x),
            (TaToTg, x),
            (CaToCg, x),
            (CaToTa, x),
            (TgToCg, x),
            (TgToTa, x),
        ]
    };
    vec![
        ("uniform_cpg10", rn([1.0; 4], [1.0; 4], &cpg10)),
        ("kimura3_cpg10", kimura_cpg()),
        ("kimura0.3_cpg10", rn([1.0; 4], [0.3; 4], &cpg10)),
        ("kimura0.3_ypr10", rn([1.0; 4], [0.3; 4], &all(10.0))),
        ("kimura3_ypr0.3", rn([1.0; 4], [3.0; 4], &all(0.3))),
        (
            "mixed_v12_w36",
            rn(
                [1.0, 2.0, 1.0, 2.0],
                [3.0, 6.0, 3.0, 6.0],
                &[
                    (CgToCa, 10.0),
                    (CgToTg, 10.0),
                    (TaToCa, 5.0),
                    (TaToTg, 5.0),
                    (CaToCg, 3.0),
                    (CaToTa, 3.0),
                    (TgToCg, 1.0),
                    (TgToTa, 1.0),
                ],
            ),
        ),
        (
            "asymmetric_extreme",
            rn(
                [1.0, 0.3, 2.0, 10.0],
                [3.0, 1.0, 1.0, 0.1],
                &[
                    (CgToCa, 10.0),
                    (CgToTg, 5.0),
                    (TaToCa, 1.0),
                    (TaToTg, 0.5),
                    (CaToCg, 20.0),
                    (CaToTa, 3.0),
                    (TgToCg, 0.3),
                    (TgToTa, 0.1),
                ],
            ),
        ),
    ]
}
