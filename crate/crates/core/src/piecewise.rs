//! Contiguous chains of polynomial pieces, shared by histories and signals.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{lookup_pos, Piece, Poly, Side, MAX_DEGREE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PiecewiseError {
    #[error("no pieces given")]
    Empty,
    #[error("piece {index} is empty or reversed: [{from}, {to})")]
    BadInterval { index: usize, from: f64, to: f64 },
    #[error("gap or overlap between piece {index} (ends {end}) and the next (starts {start})")]
    NotContiguous { index: usize, end: f64, start: f64 },
    #[error("piece {index} has {got} components, expected {expected}")]
    Dimension {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("piece {index} has degree {degree}, at most {MAX_DEGREE} is supported")]
    Degree { index: usize, degree: usize },
    #[error("non-finite coefficient in piece {index}")]
    NonFinite { index: usize },
    #[error("unbounded piece {index} must be constant and last")]
    Unbounded { index: usize },
    #[error("{0}")]
    Domain(String),
}

/// Literal form of one piece: coefficients per component, ascending powers of
/// `s - from`. `to: null` marks an unbounded constant tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceLiteral {
    pub from: f64,
    pub to: Option<f64>,
    pub poly_coeffs: Vec<Vec<f64>>,
}

impl From<&Piece> for PieceLiteral {
    fn from(p: &Piece) -> Self {
        PieceLiteral {
            from: p.from,
            to: p.to.is_finite().then_some(p.to),
            poly_coeffs: p.comps.iter().map(|c| c.0.clone()).collect(),
        }
    }
}

impl From<&PieceLiteral> for Piece {
    fn from(l: &PieceLiteral) -> Self {
        Piece::new(
            l.from,
            l.to.unwrap_or(f64::INFINITY),
            l.poly_coeffs.iter().map(|c| Poly(c.clone())).collect(),
        )
    }
}

/// A function on `[start, end)` given by contiguous polynomial pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseFn {
    dim: usize,
    pieces: Vec<Piece>,
}

impl PiecewiseFn {
    pub fn new(dim: usize, pieces: Vec<Piece>) -> Result<Self, PiecewiseError> {
        if pieces.is_empty() {
            return Err(PiecewiseError::Empty);
        }
        for (index, p) in pieces.iter().enumerate() {
            if !p.is_finite() {
                return Err(PiecewiseError::NonFinite { index });
            }
            if !(p.from < p.to) {
                return Err(PiecewiseError::BadInterval {
                    index,
                    from: p.from,
                    to: p.to,
                });
            }
            if p.dim() != dim {
                return Err(PiecewiseError::Dimension {
                    index,
                    got: p.dim(),
                    expected: dim,
                });
            }
            let degree = p.degree();
            if degree > MAX_DEGREE {
                return Err(PiecewiseError::Degree { index, degree });
            }
            if p.to.is_infinite() && (degree > 0 || index + 1 != pieces.len()) {
                return Err(PiecewiseError::Unbounded { index });
            }
        }
        for (index, w) in pieces.windows(2).enumerate() {
            if w[0].to != w[1].from {
                return Err(PiecewiseError::NotContiguous {
                    index,
                    end: w[0].to,
                    start: w[1].from,
                });
            }
        }
        Ok(PiecewiseFn { dim, pieces })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn start(&self) -> f64 {
        self.pieces[0].from
    }

    pub fn end(&self) -> f64 {
        self.pieces[self.pieces.len() - 1].to
    }

    /// Interior piece boundaries.
    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.pieces.iter().skip(1).map(|p| p.from)
    }

    /// Index of the piece whose half-open interval contains `pos`, clamped to
    /// the first and last piece.
    pub fn locate(&self, pos: f64) -> usize {
        let i = self.pieces.partition_point(|p| p.from <= pos);
        i.saturating_sub(1)
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.start() && s < self.end()
    }

    pub fn eval_into(&self, s: f64, side: Side, h: f64, out: &mut [f64]) {
        let i = self.locate(lookup_pos(s, side, h));
        self.pieces[i].eval_into(s, out);
    }

    /// Half-open evaluation: at a boundary the piece starting there is used.
    pub fn eval(&self, s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(s, Side::Exact, 0.0, &mut out);
        out
    }

    /// Limit from the left at `s`.
    pub fn eval_left(&self, s: f64) -> Vec<f64> {
        let i = self
            .pieces
            .partition_point(|p| p.from < s)
            .saturating_sub(1);
        self.pieces[i].eval(s)
    }

    pub fn ess_sup(&self) -> f64 {
        self.pieces.iter().map(Piece::max_norm).fold(0.0, f64::max)
    }

    /// Ess-sup of the norm over `[a, b)`.
    pub fn ess_sup_on(&self, a: f64, b: f64) -> f64 {
        self.pieces
            .iter()
            .filter(|p| p.to > a && p.from < b)
            .map(|p| {
                let lo = p.from.max(a);
                let hi = p.to.min(b);
                if hi > lo {
                    p.max_norm_on(lo, hi)
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// Pieces intersected with `[a, b)`, each re-expanded at its new left end.
    pub fn restrict(&self, a: f64, b: f64) -> Vec<Piece> {
        self.pieces
            .iter()
            .filter(|p| p.to > a && p.from < b)
            .map(|p| {
                let lo = p.from.max(a);
                let hi = p.to.min(b);
                if lo == p.from {
                    Piece::new(lo, hi, p.comps.clone())
                } else {
                    p.restrict(lo, hi)
                }
            })
            .filter(|p| p.to > p.from)
            .collect()
    }

    pub fn scaled(&self, alpha: f64) -> PiecewiseFn {
        PiecewiseFn {
            dim: self.dim,
            pieces: self
                .pieces
                .iter()
                .map(|p| {
                    Piece::new(
                        p.from,
                        p.to,
                        p.comps.iter().map(|c| c.scale(alpha)).collect(),
                    )
                })
                .collect(),
        }
    }

    pub fn to_literals(&self) -> Vec<PieceLiteral> {
        self.pieces.iter().map(PieceLiteral::from).collect()
    }

    pub fn from_literals(dim: usize, lits: &[PieceLiteral]) -> Result<Self, PiecewiseError> {
        PiecewiseFn::new(dim, lits.iter().map(Piece::from).collect())
    }
}
