//! Substitution parameters and encoded finite-state chains.
//!
//! An RN rate matrix sends `x -> y` at rate `v_y` when `x` and `y` belong
//! to different purine/pyrimidine classes and at rate `w_y` when they belong
//! to the same class. On top of that, the YpR mechanism adds eight extra
//! rates between YpR dinucleotides (CG, CA, TG, TA) differing in exactly one
//! position. These are the only neighbour effects in the class, which is
//! what makes window encodings such as {R,T,C} x {Y,G,A} autonomous.

pub mod chain;
pub mod encodings;
pub mod presets;
pub mod sequence;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use sequence::Nucleotide;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("rate {key} must be nonnegative, got {value}")]
    NegativeRate { key: String, value: f64 },
    #[error("rate {key} must be finite, got {value}")]
    NonFiniteRate { key: String, value: f64 },
    #[error("cross-class rate v_{0} must be positive (ergodicity requirement)")]
    ZeroCrossRate(char),
    #[error("source and target nucleotide are both {0}; a substitution must change the site")]
    SameNucleotide(char),
    #[error("window width must be 3 or 4, got {0}")]
    InvalidWidth(usize),
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamsFileError {
    #[error("cannot read parameter file: {0}")]
    Io(String),
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key:?}")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid numeric value {value:?} for key {key:?}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("`jc_cpg_r` conflicts with explicit rate keys")]
    ShorthandConflict,
    #[error("missing required key {0:?}")]
    MissingKey(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The eight YpR dinucleotide transitions, keyed by name to avoid the
/// sub/superscript ambiguity of the usual `r` notation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum YprTransition {
    CgToCa = 0,
    CgToTg = 1,
    TaToCa = 2,
    TaToTg = 3,
    CaToCg = 4,
    CaToTa = 5,
    TgToCg = 6,
    TgToTa = 7,
}

impl YprTransition {
    pub const ALL: [YprTransition; 8] = [
        YprTransition::CgToCa,
        YprTransition::CgToTg,
        YprTransition::TaToCa,
        YprTransition::TaToTg,
        YprTransition::CaToCg,
        YprTransition::CaToTa,
        YprTransition::TgToCg,
        YprTransition::TgToTa,
    ];

    pub fn file_key(self) -> &'static str {
        match self {
            YprTransition::CgToCa => "rCG2CA",
            YprTransition::CgToTg => "rCG2TG",
            YprTransition::TaToCa => "rTA2CA",
            YprTransition::TaToTg => "rTA2TG",
            YprTransition::CaToCg => "rCA2CG",
            YprTransition::CaToTa => "rCA2TA",
            YprTransition::TgToCg => "rTG2CG",
            YprTransition::TgToTa => "rTG2TA",
        }
    }

    /// Transition for a second-position change `(left, from) -> (left, to)`
    /// within the purines, where `left` is the pyrimidine that stays put.
    pub fn second_position(
        left: Nucleotide,
        from: Nucleotide,
        to: Nucleotide,
    ) -> Option<YprTransition> {
        use Nucleotide::*;
        match (left, from, to) {
            (C, G, A) => Some(YprTransition::CgToCa),
            (C, A, G) => Some(YprTransition::CaToCg),
            (T, G, A) => Some(YprTransition::TgToTa),
            (T, A, G) => Some(YprTransition::TaToTg),
            _ => None,
        }
    }

    /// Transition for a first-position change `(from, right) -> (to, right)`
    /// within the pyrimidines, where `right` is the purine that stays put.
    pub fn first_position(
        from: Nucleotide,
        to: Nucleotide,
        right: Nucleotide,
    ) -> Option<YprTransition> {
        use Nucleotide::*;
        match (from, to, right) {
            (C, T, G) => Some(YprTransition::CgToTg),
            (T, C, G) => Some(YprTransition::TgToCg),
            (C, T, A) => Some(YprTransition::CaToTa),
            (T, C, A) => Some(YprTransition::TaToCa),
            _ => None,
        }
    }
}

impl fmt::Display for YprTransition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            YprTransition::CgToCa => "CG->CA",
            YprTransition::CgToTg => "CG->TG",
            YprTransition::TaToCa => "TA->CA",
            YprTransition::TaToTg => "TA->TG",
            YprTransition::CaToCg => "CA->CG",
            YprTransition::CaToTa => "CA->TA",
            YprTransition::TgToCg => "TG->CG",
            YprTransition::TgToTa => "TG->TA",
        };
        f.write_str(s)
    }
}

/// Rates of an RN+YpR substitution process.
///
/// `v[y]` is the rate of substitutions into `y` from the opposite
/// purine/pyrimidine class, `w[y]` the rate from within the same class, and
/// `ypr` the eight extra dinucleotide rates. All rates are nonnegative and
/// the four `v` rates must be positive, which guarantees that every encoded
/// chain built from the parameters is irreducible.
#[derive(Clone, Debug, PartialEq)]
pub struct SubstitutionParams {
    v: [f64; 4],
    w: [f64; 4],
    ypr: [f64; 8],
}

impl SubstitutionParams {
    pub fn new(v: [f64; 4], w: [f64; 4], ypr: [f64; 8]) -> Result<Self, ModelError> {
        for (arr, prefix) in [(&v, "v"), (&w, "w")] {
            for n in Nucleotide::ALL {
                let x = arr[n.index()];
                let key = || format!("{prefix}_{n}");
                if !x.is_finite() {
                    return Err(ModelError::NonFiniteRate {
                        key: key(),
                        value: x,
                    });
                }
                if x < 0.0 {
                    return Err(ModelError::NegativeRate {
                        key: key(),
                        value: x,
                    });
                }
            }
        }
        for t in YprTransition::ALL {
            let x = ypr[t as usize];
            if !x.is_finite() {
                return Err(ModelError::NonFiniteRate {
                    key: t.file_key().to_string(),
                    value: x,
                });
            }
            if x < 0.0 {
                return Err(ModelError::NegativeRate {
                    key: t.file_key().to_string(),
                    value: x,
                });
            }
        }
        for n in Nucleotide::ALL {
            if v[n.index()] == 0.0 {
                return Err(ModelError::ZeroCrossRate(n.to_char()));
            }
        }
        Ok(SubstitutionParams { v, w, ypr })
    }

    /// Jukes-Cantor with CpG influence: every base rate is 1 and the
    /// dinucleotide CG decays to CA and to TG at extra rate `r`.
    pub fn jc_cpg(r: f64) -> Result<Self, ModelError> {
        if !r.is_finite() {
            return Err(ModelError::NonFiniteRate {
                key: "jc_cpg_r".into(),
                value: r,
            });
        }
        if r < 0.0 {
            return Err(ModelError::NegativeRate {
                key: "jc_cpg_r".into(),
                value: r,
            });
        }
        let mut ypr = [0.0; 8];
        ypr[YprTransition::CgToCa as usize] = r;
        ypr[YprTransition::CgToTg as usize] = r;
        SubstitutionParams::new([1.0; 4], [1.0; 4], ypr)
    }

    #[inline]
    pub fn v(&self, target: Nucleotide) -> f64 {
        self.v[target.index()]
    }

    #[inline]
    pub fn w(&self, target: Nucleotide) -> f64 {
        self.w[target.index()]
    }

    #[inline]
    pub fn ypr(&self, t: YprTransition) -> f64 {
        self.ypr[t as usize]
    }

    /// Sum of the cross-class rates into the purines (`v_A + v_G`).
    pub fn v_purines(&self) -> f64 {
        self.v(Nucleotide::A) + self.v(Nucleotide::G)
    }

    /// Sum of the cross-class rates into the pyrimidines (`v_T + v_C`).
    pub fn v_pyrimidines(&self) -> f64 {
        self.v(Nucleotide::T) + self.v(Nucleotide::C)
    }

    /// RN base rate for `x -> y`, ignoring neighbours. Requires `x != y`.
    #[inline]
    pub fn base_rate(&self, x: Nucleotide, y: Nucleotide) -> f64 {
        if x.is_purine() == y.is_purine() {
            self.w(y)
        } else {
            self.v(y)
        }
    }

    /// Full substitution rate of the middle site of the triplet
    /// `(left, x, right)` into `y`. This is the single source of truth for
    /// the simulator: the RN base rate plus the YpR increment whenever
    /// `(left, x)` or `(x, right)` forms the matching YpR dinucleotide.
    pub fn site_rate(
        &self,
        left: Nucleotide,
        x: Nucleotide,
        right: Nucleotide,
        y: Nucleotide,
    ) -> Result<f64, ModelError> {
        if x == y {
            return Err(ModelError::SameNucleotide(x.to_char()));
        }
        let mut rate = self.base_rate(x, y);
        if let Some(t) = YprTransition::second_position(left, x, y) {
            rate += self.ypr(t);
        }
        if let Some(t) = YprTransition::first_position(x, y, right) {
            rate += self.ypr(t);
        }
        Ok(rate)
    }

    /// Returns `Some(r)` when the parameters are exactly the JC+CpG
    /// parameterization of intensity `r`.
    pub fn jc_cpg_rate(&self) -> Option<f64> {
        if self.v != [1.0; 4] || self.w != [1.0; 4] {
            return None;
        }
        let r = self.ypr(YprTransition::CgToCa);
        if self.ypr(YprTransition::CgToTg) != r {
            return None;
        }
        for t in YprTransition::ALL {
            if !matches!(t, YprTransition::CgToCa | YprTransition::CgToTg) && self.ypr(t) != 0.0 {
                return None;
            }
        }
        Some(r)
    }

    /// One-line `key=value` rendering, used for simulation metadata.
    pub fn summary(&self) -> String {
        if let Some(r) = self.jc_cpg_rate() {
            return format!("jc_cpg_r={r}");
        }
        let mut parts = Vec::with_capacity(16);
        for n in Nucleotide::ALL {
            parts.push(format!("v_{}={}", n, self.v(n)));
        }
        for n in Nucleotide::ALL {
            parts.push(format!("w_{}={}", n, self.w(n)));
        }
        for t in YprTransition::ALL {
            parts.push(format!("{}={}", t.file_key(), self.ypr(t)));
        }
        parts.join(" ")
    }

    /// Parses the flat `key = value` parameter file format.
    ///
    /// Either the single shorthand key `jc_cpg_r` is given, or the eight
    /// base-rate keys `v_A v_T v_C v_G w_A w_T w_C w_G` (YpR keys default
    /// to 0 when omitted). Mixing the shorthand with explicit keys is an
    /// error. Lines starting with `#` and blank lines are ignored.
    pub fn parse_str(text: &str) -> Result<Self, ParamsFileError> {
        const V_KEYS: [&str; 4] = ["v_A", "v_T", "v_C", "v_G"];
        const W_KEYS: [&str; 4] = ["w_A", "w_T", "w_C", "w_G"];
        let mut seen = HashSet::new();
        let mut v = [f64::NAN; 4];
        let mut w = [f64::NAN; 4];
        let mut ypr = [0.0; 8];
        let mut shorthand: Option<f64> = None;
        let mut explicit = false;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = raw.trim();
            if stripped.is_empty() || stripped.starts_with('#') {
                continue;
            }
            let (key, value) = stripped.split_once('=').ok_or(ParamsFileError::Malformed {
                line,
                text: stripped.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(ParamsFileError::DuplicateKey {
                    line,
                    key: key.to_string(),
                });
            }
            let parsed: f64 = value.parse().map_err(|_| ParamsFileError::BadValue {
                line,
                key: key.to_string(),
                value: value.to_string(),
            })?;
            if key == "jc_cpg_r" {
                shorthand = Some(parsed);
                continue;
            }
            if let Some(i) = V_KEYS.iter().position(|k| *k == key) {
                v[Nucleotide::ALL[i].index()] = parsed;
                explicit = true;
            } else if let Some(i) = W_KEYS.iter().position(|k| *k == key) {
                w[Nucleotide::ALL[i].index()] = parsed;
                explicit = true;
            } else if let Some(&t) = YprTransition::ALL.iter().find(|t| t.file_key() == key) {
                ypr[t as usize] = parsed;
                explicit = true;
            } else {
                return Err(ParamsFileError::UnknownKey {
                    line,
                    key: key.to_string(),
                });
            }
        }

        match (shorthand, explicit) {
            (Some(_), true) => Err(ParamsFileError::ShorthandConflict),
            (Some(r), false) => Ok(SubstitutionParams::jc_cpg(r)?),
            (None, _) => {
                for (i, key) in V_KEYS.iter().enumerate() {
                    if v[Nucleotide::ALL[i].index()].is_nan() {
                        return Err(ParamsFileError::MissingKey(key));
                    }
                }
                for (i, key) in W_KEYS.iter().enumerate() {
                    if w[Nucleotide::ALL[i].index()].is_nan() {
                        return Err(ParamsFileError::MissingKey(key));
                    }
                }
                Ok(SubstitutionParams::new(v, w, ypr)?)
            }
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ParamsFileError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ParamsFileError::Io(format!("{}: {e}", path.display())))?;
        Self::parse_str(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Nucleotide::*;

    #[test]
    fn jc_cpg_zero_is_plain_jukes_cantor() {
        let p = SubstitutionParams::jc_cpg(0.0).unwrap();
        for n in Nucleotide::ALL {
            assert_eq!(p.v(n), 1.0);
            assert_eq!(p.w(n), 1.0);
        }
        for t in YprTransition::ALL {
            assert_eq!(p.ypr(t), 0.0);
        }
        assert_eq!(p.jc_cpg_rate(), Some(0.0));
    }

    #[test]
    fn jc_cpg_places_rate_on_cg_decay_only() {
        let p = SubstitutionParams::jc_cpg(10.0).unwrap();
        assert_eq!(p.ypr(YprTransition::CgToCa), 10.0);
        assert_eq!(p.ypr(YprTransition::CgToTg), 10.0);
        for t in YprTransition::ALL {
            if !matches!(t, YprTransition::CgToCa | YprTransition::CgToTg) {
                assert_eq!(p.ypr(t), 0.0);
            }
        }
    }

    #[test]
    fn jc_cpg_rejects_negative_rate() {
        assert!(matches!(
            SubstitutionParams::jc_cpg(-1.0),
            Err(ModelError::NegativeRate { .. })
        ));
    }

    #[test]
    fn total_exit_rate_of_c_before_g_is_three_plus_r() {
        // A C followed by G changes at global rate s = 3 + r.
        let p = SubstitutionParams::jc_cpg(2.0).unwrap();
        let total: f64 = [A, T, G]
            .iter()
            .map(|&y| p.site_rate(A, C, G, y).unwrap())
            .sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn site_rate_elevates_the_cpg_targets() {
        let p = SubstitutionParams::jc_cpg(2.0).unwrap();
        // G -> A inside a CG dinucleotide gets rate 1 + r.
        assert_eq!(p.site_rate(C, G, T, A).unwrap(), 3.0);
        // C -> T with no G on the right stays at the base rate.
        assert_eq!(p.site_rate(T, C, A, T).unwrap(), 1.0);
    }

    #[test]
    fn site_rate_general_rn_uses_named_transition() {
        // TA -> TG on the purine: w_G + r(TA->TG).
        let mut ypr = [0.0; 8];
        ypr[YprTransition::TaToTg as usize] = 0.7;
        let p = SubstitutionParams::new([1.0; 4], [0.25, 0.25, 0.25, 2.0], ypr).unwrap();
        assert_eq!(p.site_rate(T, A, C, G).unwrap(), 2.7);
        // Same substitution without the T on the left: just w_G.
        assert_eq!(p.site_rate(G, A, C, G).unwrap(), 2.0);
    }

    #[test]
    fn site_rate_rejects_identity() {
        let p = SubstitutionParams::jc_cpg(1.0).unwrap();
        assert_eq!(
            p.site_rate(A, C, G, C).unwrap_err(),
            ModelError::SameNucleotide('C')
        );
    }

    #[test]
    fn zero_cross_rate_rejected() {
        assert!(matches!(
            SubstitutionParams::new([1.0, 1.0, 0.0, 1.0], [1.0; 4], [0.0; 8]),
            Err(ModelError::ZeroCrossRate('C'))
        ));
        // Zero within-class rates are fine.
        assert!(SubstitutionParams::new([1.0; 4], [0.0; 4], [0.0; 8]).is_ok());
    }

    #[test]
    fn parse_shorthand_file() {
        let p = SubstitutionParams::parse_str("# comment\njc_cpg_r = 4.5\n").unwrap();
        assert_eq!(p.jc_cpg_rate(), Some(4.5));
    }

    #[test]
    fn parse_explicit_file_defaults_ypr_to_zero() {
        let text = "v_A=1\nv_T=1\nv_C=1\nv_G=1\nw_A=3\nw_T=3\nw_C=3\nw_G=3\nrCG2CA=10\nrCG2TG=10\n";
        let p = SubstitutionParams::parse_str(text).unwrap();
        assert_eq!(p.w(Nucleotide::A), 3.0);
        assert_eq!(p.ypr(YprTransition::CgToCa), 10.0);
        assert_eq!(p.ypr(YprTransition::TaToCa), 0.0);
        assert_eq!(p.jc_cpg_rate(), None);
    }

    #[test]
    fn parse_rejects_shorthand_mixed_with_explicit() {
        let err = SubstitutionParams::parse_str("jc_cpg_r = 1\nv_A = 1\n").unwrap_err();
        assert_eq!(err, ParamsFileError::ShorthandConflict);
    }

    #[test]
    fn parse_rejects_unknown_and_duplicate_keys() {
        assert!(matches!(
            SubstitutionParams::parse_str("v_a = 1\n"),
            Err(ParamsFileError::UnknownKey { .. })
        ));
        assert!(matches!(
            SubstitutionParams::parse_str("jc_cpg_r = 1\njc_cpg_r = 2\n"),
            Err(ParamsFileError::DuplicateKey { .. })
        ));
    }

    #[test]
    fn parse_requires_all_base_rates() {
        let err = SubstitutionParams::parse_str("v_A=1\n").unwrap_err();
        assert_eq!(err, ParamsFileError::MissingKey("v_T"));
    }

    #[test]
    fn summary_roundtrips_through_parser() {
        let p = SubstitutionParams::jc_cpg(10.0).unwrap();
        assert_eq!(p.summary(), "jc_cpg_r=10");
        let mut ypr = [0.0; 8];
        ypr[YprTransition::CgToCa as usize] = 10.0;
        ypr[YprTransition::CgToTg as usize] = 10.0;
        let kimura = SubstitutionParams::new([1.0; 4], [3.0; 4], ypr).unwrap();
        let text = kimura.summary().replace(' ', "\n");
        assert_eq!(SubstitutionParams::parse_str(&text).unwrap(), kimura);
    }
}
