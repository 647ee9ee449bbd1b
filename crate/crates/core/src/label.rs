use std::fmt;
use std::ops::Neg;

/// A binary label in {-1, +1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    /// Sign of a real score with ties broken towards `Pos`.
    #[inline]
    pub fn from_score(score: f64) -> Self {
        if score >= 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    #[inline]
    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    #[inline]
    pub fn value(self) -> i32 {
        match self {
            Label::Neg => -1,
            Label::Pos => 1,
        }
    }

    #[inline]
    pub fn as_f64(self) -> f64 {
        self.value() as f64
    }

    #[inline]
    pub fn is_pos(self) -> bool {
        self == Label::Pos
    }

    #[inline]
    pub fn flip(self) -> Self {
        -self
    }
}

impl Neg for Label {
    type Output = Label;

    fn neg(self) -> Label {
        match self {
            Label::Neg => Label::Pos,
            Label::Pos => Label::Neg,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.value())
    }
}
