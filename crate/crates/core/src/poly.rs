//! Polynomials in a local variable and vector-valued polynomial pieces.
//!
//! A [`Piece`] lives on `[from, to)` and stores one polynomial per component,
//! each expressed in powers of `s - from`. Keeping the expansion point at the
//! left end of the piece keeps coefficients small after repeated shifting.

use serde::{Deserialize, Serialize};

/// Largest polynomial degree accepted in history and signal literals.
pub const MAX_DEGREE: usize = 5;

/// Scalar polynomial with ascending coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    pub fn zero() -> Self {
        Poly(vec![0.0])
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.0
    }

    /// Degree after dropping exact trailing zeros; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.0.iter().rposition(|&c| c != 0.0)
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly::zero();
        }
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(j, &c)| j as f64 * c)
                .collect(),
        )
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.0.is_empty() || other.0.is_empty() {
            return Poly::zero();
        }
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, &a) in self.0.iter().enumerate() {
            for (j, &b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let len = self.0.len().max(other.0.len());
        Poly(
            (0..len)
                .map(|i| {
                    self.0.get(i).copied().unwrap_or(0.0) + other.0.get(i).copied().unwrap_or(0.0)
                })
                .collect(),
        )
    }

    pub fn scale(&self, a: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * a).collect())
    }

    /// Returns `q` with `q(w) = p(w + delta)`.
    pub fn taylor_shift(&self, delta: f64) -> Poly {
        let mut c = self.0.clone();
        if delta == 0.0 {
            return Poly(c);
        }
        let n = c.len();
        for i in 0..n {
            for j in (i..n.saturating_sub(1)).rev() {
                c[j] += delta * c[j + 1];
            }
        }
        Poly(c)
    }

    /// Real roots in `[a, b]`, sorted.
    ///
    /// Roots of the derivative split the interval into monotone pieces; each
    /// sign change is then bracketed and bisected to full precision.
    pub fn roots_in(&self, a: f64, b: f64) -> Vec<f64> {
        if !(a <= b) {
            return Vec::new();
        }
        let deg = match self.degree() {
            None | Some(0) => return Vec::new(),
            Some(d) => d,
        };
        if deg == 1 {
            let r = -self.0[0] / self.0[1];
            return if r >= a && r <= b {
                vec![r]
            } else {
                Vec::new()
            };
        }
        let mut pts = vec![a];
        pts.extend(self.derivative().roots_in(a, b));
        pts.push(b);
        let mut roots: Vec<f64> = Vec::new();
        for w in pts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let (flo, fhi) = (self.eval(lo), self.eval(hi));
            if flo == 0.0 {
                roots.push(lo);
            } else if fhi != 0.0 && (flo < 0.0) != (fhi < 0.0) {
                roots.push(bisect(self, lo, hi, flo));
            }
        }
        if self.eval(b) == 0.0 {
            roots.push(b);
        }
        roots.sort_by(f64::total_cmp);
        roots.dedup();
        roots
    }
}

fn bisect(p: &Poly, mut lo: f64, mut hi: f64, mut flo: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = p.eval(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Which side of a possible discontinuity an evaluation should read from.
///
/// Integration stages at the left end of a step read right limits, stages at
/// the right end read left limits. `Exact` uses the plain half-open lookup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Exact,
    Right,
}

/// Position used to select a piece when evaluating at `s` from `side`, for a
/// step of width `h`.
pub(crate) fn lookup_pos(s: f64, side: Side, h: f64) -> f64 {
    let d = (1e-6 * h)
        .max(8.0 * f64::EPSILON * s.abs().max(1.0))
        .min(0.5 * h.abs().max(f64::MIN_POSITIVE));
    match side {
        Side::Left => s - d,
        Side::Exact => s,
        Side::Right => s + d,
    }
}

/// Vector-valued polynomial on `[from, to)`, expanded around `from`.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    pub from: f64,
    pub to: f64,
    pub comps: Vec<Poly>,
}

impl Piece {
    pub fn new(from: f64, to: f64, comps: Vec<Poly>) -> Self {
        Piece { from, to, comps }
    }

    pub fn constant(from: f64, to: f64, value: &[f64]) -> Self {
        Piece {
            from,
            to,
            comps: value.iter().map(|&v| Poly::constant(v)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn len(&self) -> f64 {
        self.to - self.from
    }

    pub fn degree(&self) -> usize {
        self.comps
            .iter()
            .filter_map(Poly::degree)
            .max()
            .unwrap_or(0)
    }

    pub fn eval_into(&self, s: f64, out: &mut [f64]) {
        let u = s - self.from;
        for (o, p) in out.iter_mut().zip(&self.comps) {
            *o = p.eval(u);
        }
    }

    pub fn eval(&self, s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(s, &mut out);
        out
    }

    pub fn derivative_at(&self, s: f64) -> Vec<f64> {
        let u = s - self.from;
        self.comps.iter().map(|p| p.derivative().eval(u)).collect()
    }

    /// Same function on `[a, b)`, re-expanded around `a`.
    pub fn restrict(&self, a: f64, b: f64) -> Piece {
        let delta = a - self.from;
        Piece {
            from: a,
            to: b,
            comps: self.comps.iter().map(|p| p.taylor_shift(delta)).collect(),
        }
    }

    /// The function `s -> self(s - dt)`, living on `[from + dt, to + dt)`.
    pub fn translate(&self, dt: f64) -> Piece {
        Piece {
            from: self.from + dt,
            to: self.to + dt,
            comps: self.comps.clone(),
        }
    }

    /// Exact maximum of the Euclidean norm on the closed interval `[a, b]`.
    ///
    /// Candidates are the endpoints and the real critical points of the
    /// squared norm, so no sampling tolerance enters.
    pub fn max_norm_on(&self, a: f64, b: f64) -> f64 {
        if self.comps.is_empty() {
            return 0.0;
        }
        let deg = self.degree();
        if !b.is_finite() {
            return if deg == 0 {
                norm(&self.eval(self.from))
            } else {
                f64::INFINITY
            };
        }
        let (ua, ub) = (a - self.from, b - self.from);
        let mut best = norm(&self.eval(a)).max(norm(&self.eval(b)));
        if deg == 0 {
            return best;
        }
        let sq = self
            .comps
            .iter()
            .fold(Poly::zero(), |acc, p| acc.add(&p.mul(p)));
        let mut buf = vec![0.0; self.dim()];
        for u in sq.derivative().roots_in(ua, ub) {
            self.eval_into(self.from + u, &mut buf);
            best = best.max(norm(&buf));
        }
        best
    }

    pub fn max_norm(&self) -> f64 {
        self.max_norm_on(self.from, self.to)
    }

    pub fn is_finite(&self) -> bool {
        self.from.is_finite()
            && !self.to.is_nan()
            && self.comps.iter().all(|p| p.0.iter().all(|c| c.is_finite()))
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Accumulates contiguous pieces, absorbing slivers shorter than `tol`
/// into their neighbours.
pub(crate) struct PieceChain {
    pieces: Vec<Piece>,
    pending_start: Option<f64>,
    tol: f64,
}

impl PieceChain {
    pub(crate) fn new(tol: f64) -> Self {
        PieceChain {
            pieces: Vec::new(),
            pending_start: None,
            tol,
        }
    }

    pub(crate) fn push(&mut self, mut piece: Piece) {
        if piece.len() < self.tol {
            match self.pieces.last_mut() {
                Some(last) => last.to = last.to.max(piece.to),
                None => {
                    self.pending_start.get_or_insert(piece.from);
                }
            }
            return;
        }
        if let Some(start) = self.pending_start.take() {
            piece = piece.restrict(start, piece.to);
        }
        if let Some(last) = self.pieces.last() {
            if piece.from != last.to {
                piece = piece.restrict(last.to, piece.to);
            }
        }
        self.pieces.push(piece);
    }

    /// Snaps the outer boundaries to exactly `start` and `end`.
    pub(crate) fn finish(mut self, start: f64, end: f64) -> Vec<Piece> {
        if let Some(first) = self.pieces.first_mut() {
            if first.from != start {
                *first = first.restrict(start, first.to);
            }
        }
        if let Some(last) = self.pieces.last_mut() {
            last.to = end;
        }
        self.pieces
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horner_and_derivative() {
        let p = Poly(vec![1.0, -2.0, 3.0]);
        assert_eq!(p.eval(2.0), 9.0);
        assert_eq!(p.derivative(), Poly(vec![-2.0, 6.0]));
    }

    #[test]
    fn taylor_shift_matches_direct_evaluation() {
        let p = Poly(vec![0.5, -1.0, 2.0, 0.25]);
        let q = p.taylor_shift(0.75);
        for &w in &[-1.0, 0.0, 0.3, 2.0] {
            assert!((q.eval(w) - p.eval(w + 0.75)).abs() < 1e-12);
        }
    }

    #[test]
    fn roots_of_cubic() {
        // (u - 1)(u + 0.5)(u - 2)
        let p = Poly(vec![1.0, 0.5, -2.5, 1.0]);
        let r = p.roots_in(-3.0, 3.0);
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([-0.5, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
        assert_eq!(p.roots_in(1.5, 1.9), Vec::<f64>::new());
    }

    #[test]
    fn max_norm_finds_interior_peak() {
        // 1 - (s + 0.5)^2 on [-1, 0): peak 1 at s = -0.5
        let piece = Piece::new(-1.0, 0.0, vec![Poly(vec![0.75, 1.0, -1.0])]);
        assert!((piece.max_norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn max_norm_of_vector_piece() {
        // (cos-like quadratic, linear) - just compare with a dense scan
        let piece = Piece::new(
            0.0,
            2.0,
            vec![Poly(vec![1.0, 0.0, -1.0]), Poly(vec![0.0, 1.5])],
        );
        let exact = piece.max_norm();
        let scan = (0..=20000)
            .map(|i| norm(&piece.eval(2.0 * i as f64 / 20000.0)))
            .fold(0.0, f64::max);
        assert!(exact >= scan - 1e-12);
        assert!(exact - scan < 1e-6);
    }

    #[test]
    fn chain_absorbs_slivers() {
        let mut chain = PieceChain::new(1e-12);
        chain.push(Piece::constant(-1.0, -1.0 + 1e-14, &[5.0]));
        chain.push(Piece::constant(-1.0 + 1e-14, -0.5, &[1.0]));
        chain.push(Piece::constant(-0.5, -0.5 + 1e-13, &[7.0]));
        chain.push(Piece::constant(-0.5 + 1e-13, 0.0, &[2.0]));
        let pieces = chain.finish(-1.0, 0.0);
        assert_eq!(pieces.len(), 2);
        assert_eq!(pieces[0].from, -1.0);
        assert_eq!(pieces[0].eval(-0.75), vec![1.0]);
        assert_eq!(pieces[1].from, pieces[0].to);
        assert_eq!(pieces[1].to, 0.0);
    }
}
