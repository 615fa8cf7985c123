//! Nucleotides and circular sequences.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SequenceError {
    #[error("sequence length must be at least 3, got {0}")]
    TooShort(usize),
    #[error("invalid nucleotide character {0:?}")]
    InvalidCharacter(char),
}

/// One of the four DNA bases. Purines are A and G, pyrimidines C and T.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Nucleotide {
    A = 0,
    T = 1,
    C = 2,
    G = 3,
}

impl Nucleotide {
    pub const ALL: [Nucleotide; 4] = [Nucleotide::A, Nucleotide::T, Nucleotide::C, Nucleotide::G];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Nucleotide {
        Self::ALL[i]
    }

    #[inline]
    pub fn is_purine(self) -> bool {
        matches!(self, Nucleotide::A | Nucleotide::G)
    }

    #[inline]
    pub fn is_pyrimidine(self) -> bool {
        !self.is_purine()
    }

    pub fn to_char(self) -> char {
        match self {
            Nucleotide::A => 'A',
            Nucleotide::T => 'T',
            Nucleotide::C => 'C',
            Nucleotide::G => 'G',
        }
    }

    /// Accepts upper- and lower-case ACGT.
    pub fn from_char(c: char) -> Result<Nucleotide, SequenceError> {
        match c {
            'A' | 'a' => Ok(Nucleotide::A),
            'T' | 't' => Ok(Nucleotide::T),
            'C' | 'c' => Ok(Nucleotide::C),
            'G' | 'g' => Ok(Nucleotide::G),
            other => Err(SequenceError::InvalidCharacter(other)),
        }
    }
}

impl fmt::Display for Nucleotide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_char())
    }
}

/// A nucleotide sequence with circular topology: index arithmetic wraps, so
/// the left neighbour of site 0 is site `len - 1`. Minimum length is 3 so
/// that the neighbour-dependence window always fits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sequence(Vec<Nucleotide>);

impl Sequence {
    pub fn new(bases: Vec<Nucleotide>) -> Result<Sequence, SequenceError> {
        if bases.len() < 3 {
            return Err(SequenceError::TooShort(bases.len()));
        }
        Ok(Sequence(bases))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false // length >= 3 by construction
    }

    /// Circular access: any index is reduced modulo the length.
    #[inline]
    pub fn at(&self, i: usize) -> Nucleotide {
        self.0[i % self.0.len()]
    }

    pub fn as_slice(&self) -> &[Nucleotide] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Nucleotide> {
        self.0
    }

    /// Rotates the sequence left by `k` sites. Circular statistics are
    /// invariant under this operation.
    pub fn rotated(&self, k: usize) -> Sequence {
        let n = self.len();
        let k = k % n;
        let mut v = Vec::with_capacity(n);
        v.extend_from_slice(&self.0[k..]);
        v.extend_from_slice(&self.0[..k]);
        Sequence(v)
    }
}

impl FromStr for Sequence {
    type Err = SequenceError;

    fn from_str(s: &str) -> Result<Sequence, SequenceError> {
        let bases = s
            .chars()
            .map(Nucleotide::from_char)
            .collect::<Result<Vec<_>, _>>()?;
        Sequence::new(bases)
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{}", b.to_char())?;
        }
        Ok(())
    }
}
