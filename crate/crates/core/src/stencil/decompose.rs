use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{check_diag_dominant, SpatialStencil};
use crate::error::{Error, Result};

const PSD_TOLERANCE: f64 = 1e-12;
const RESIDUAL_TOLERANCE: f64 = 1e-12;
const UPDATE_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecompositionMethod {
    /// Diagonally dominant input, exact over `{e_i, e_i +- e_j}`.
    ClosedForm,
    /// Cyclic projected coordinate descent.
    Descent,
    /// Descent stalled; finished by an active-set NNLS solve.
    Polished,
}

/// `a = sum_k weights[k] directions[k] directions[k]^T + residual`.
#[derive(Debug, Clone)]
pub struct BZDecomposition {
    pub directions: Vec<Vec<i32>>,
    pub weights: Vec<f64>,
    pub residual: DMatrix<f64>,
    pub method: DecompositionMethod,
}

impl BZDecomposition {
    pub fn dim(&self) -> usize {
        self.residual.nrows()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.directions
            .iter()
            .zip(&self.weights)
            .fold(DMatrix::zeros(n, n), |acc, (beta, &w)| {
                acc + w * outer(beta)
            })
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.amax()
    }

    pub fn weight(&self, beta: &[i32]) -> f64 {
        self.directions
            .iter()
            .zip(&self.weights)
            .filter(|(d, _)| d.as_slice() == beta)
            .map(|(_, &w)| w)
            .sum()
    }
}

fn outer(beta: &[i32]) -> DMatrix<f64> {
    let v = DVector::from_iterator(beta.len(), beta.iter().map(|&b| b as f64));
    &v * v.transpose()
}

fn quad_form(r: &DMatrix<f64>, beta: &[i32]) -> f64 {
    let n = beta.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += beta[i] as f64 * r[(i, j)] * beta[j] as f64;
        }
    }
    s
}

fn norm2(beta: &[i32]) -> f64 {
    beta.iter().map(|&b| (b * b) as f64).sum()
}

fn subtract_outer(r: &mut DMatrix<f64>, beta: &[i32], w: f64) {
    let n = beta.len();
    for i in 0..n {
        for j in 0..n {
            r[(i, j)] -= w * beta[i] as f64 * beta[j] as f64;
        }
    }
}

/// Writes a PSD matrix as a nonnegative combination of `beta beta^T`.
///
/// Diagonally dominant input uses the closed form
/// `a = sum_i (a_ii - sum_{j != i}|a_ij|) e_i e_i^T + sum_{i<j} a_ij^+ (e_i+e_j)(e_i+e_j)^T
///      + a_ij^- (e_i-e_j)(e_i-e_j)^T`.
/// Otherwise nonnegative least squares runs over primitive integer directions
/// with entries in `[-p, p]`, one representative per `+-` pair.
pub fn bz_decompose(a: &DMatrix<f64>, max_order: usize) -> Result<BZDecomposition> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "matrix".into(),
            location: "decomposition input".into(),
        });
    }
    if (a - a.transpose()).amax() > 1e-12 * (1.0 + a.amax()) {
        return Err(Error::Decomposition("matrix is not symmetric".into()));
    }
    let min_eig = SymmetricEigen::new(a.clone()).eigenvalues.min();
    if min_eig < -PSD_TOLERANCE {
        return Err(Error::Decomposition(format!(
            "matrix is not positive semidefinite (eigenvalue {min_eig})"
        )));
    }
    if check_diag_dominant(a) {
        return Ok(closed_form(a));
    }
    if max_order == 0 {
        return Err(Error::InvalidInput("max_order must be at least 1".into()));
    }
    Ok(descent(a, &directions(n, max_order as i32)))
}

fn closed_form(a: &DMatrix<f64>) -> BZDecomposition {
    let n = a.nrows();
    let mut directions = Vec::new();
    let mut weights = Vec::new();
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
        let mut e = vec![0; n];
        e[i] = 1;
        directions.push(e);
        weights.push(a[(i, i)] - off);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let v = a[(i, j)];
            if v == 0.0 {
                continue;
            }
            let mut beta = vec![0; n];
            beta[i] = 1;
            beta[j] = if v > 0.0 { 1 } else { -1 };
            directions.push(beta);
            weights.push(v.abs());
        }
    }
    finish(a, directions, weights, DecompositionMethod::ClosedForm)
}

fn finish(
    a: &DMatrix<f64>,
    directions: Vec<Vec<i32>>,
    weights: Vec<f64>,
    method: DecompositionMethod,
) -> BZDecomposition {
    let mut dec = BZDecomposition {
        directions,
        weights,
        residual: DMatrix::zeros(a.nrows(), a.nrows()),
        method,
    };
    dec.residual = a - dec.reconstruct();
    dec
}

fn gcd(a: i32, b: i32) -> i32 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Primitive vectors in `[-p, p]^n` whose first nonzero entry is positive,
/// ordered by length then lexicographically.
fn directions(n: usize, p: i32) -> Vec<Vec<i32>> {
    let side = (2 * p + 1) as usize;
    let mut out = Vec::new();
    for flat in 0..side.pow(n as u32) {
        let mut rest = flat;
        let beta: Vec<i32> = (0..n)
            .map(|_| {
                let v = (rest % side) as i32 - p;
                rest /= side;
                v
            })
            .collect();
        let Some(&first) = beta.iter().find(|&&v| v != 0) else {
            continue;
        };
        if first < 0 || beta.iter().fold(0, |g, &v| gcd(g, v)) != 1 {
            continue;
        }
        out.push(beta);
    }
    out.sort_by(|x, y| norm2(x).total_cmp(&norm2(y)).then_with(|| y.cmp(x)));
    out
}

fn descent(a: &DMatrix<f64>, dirs: &[Vec<i32>]) -> BZDecomposition {
    let mut w = vec![0.0; dirs.len()];
    let mut r = a.clone();
    let scale: Vec<f64> = dirs.iter().map(|d| norm2(d) * norm2(d)).collect();
    for _ in 0..MAX_SWEEPS {
        let mut biggest = 0.0f64;
        for (k, beta) in dirs.iter().enumerate() {
            let next = (w[k] + quad_form(&r, beta) / scale[k]).max(0.0);
            let delta = next - w[k];
            if delta != 0.0 {
                subtract_outer(&mut r, beta, delta);
                w[k] = next;
                biggest = biggest.max(delta.abs());
            }
        }
        if biggest < UPDATE_TOLERANCE {
            break;
        }
    }
    let dec = finish(a, dirs.to_vec(), w, DecompositionMethod::Descent);
    if dec.max_residual() <= RESIDUAL_TOLERANCE {
        return dec;
    }
    match polish(a, &dec) {
        Some(p) if p.max_residual() < dec.max_residual() => p,
        _ => dec,
    }
}

/// Lawson-Hanson active-set NNLS over the same directions, used when the
/// descent stalls above the residual tolerance. Off-diagonal equations carry
/// weight `sqrt 2` so the objective is the Frobenius norm.
fn polish(a: &DMatrix<f64>, dec: &BZDecomposition) -> Option<BZDecomposition> {
    let n = a.nrows();
    let rows: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let scale = |i: usize, j: usize| {
        if i == j {
            1.0
        } else {
            std::f64::consts::SQRT_2
        }
    };
    let design = DMatrix::from_fn(rows.len(), dec.directions.len(), |r, c| {
        let (i, j) = rows[r];
        let beta = &dec.directions[c];
        scale(i, j) * (beta[i] * beta[j]) as f64
    });
    let rhs = DVector::from_iterator(
        rows.len(),
        rows.iter().map(|&(i, j)| scale(i, j) * a[(i, j)]),
    );
    let weights = lawson_hanson(&design, &rhs)?;
    Some(finish(
        a,
        dec.directions.clone(),
        weights,
        DecompositionMethod::Polished,
    ))
}

fn lawson_hanson(design: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<Vec<f64>> {
    let cols = design.ncols();
    let tol = 1e-14 * (1.0 + rhs.amax());
    let mut x = DVector::zeros(cols);
    let mut passive = vec![false; cols];
    for _ in 0..3 * cols {
        let grad = design.transpose() * (rhs - design * &x);
        let next = (0..cols)
            .filter(|&j| !passive[j] && grad[j] > tol)
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = next else { break };
        passive[j] = true;
        loop {
            let active: Vec<usize> = (0..cols).filter(|&k| passive[k]).collect();
            if active.is_empty() {
                break;
            }
            let sub = DMatrix::from_fn(design.nrows(), active.len(), |r, c| design[(r, active[c])]);
            let z = sub.svd(true, true).solve(rhs, 1e-14).ok()?;
            let mut s = DVector::zeros(cols);
            for (c, &k) in active.iter().enumerate() {
                s[k] = z[c];
            }
            if active.iter().all(|&k| s[k] > 0.0) {
                x = s;
                break;
            }
            let alpha = active
                .iter()
                .filter(|&&k| s[k] <= 0.0)
                .map(|&k| x[k] / (x[k] - s[k]))
                .fold(f64::INFINITY, f64::min);
            x += alpha * (&s - &x);
            for &k in &active {
                if x[k] <= tol {
                    x[k] = 0.0;
                    passive[k] = false;
                }
            }
        }
    }
    Some(x.iter().map(|&v| v.max(0.0)).collect())
}

/// `C(+-beta) = w_beta / dx^2` for every direction and upwinded drift on `+-e_i`.
pub fn bz_stencil(dec: &BZDecomposition, b: &DVector<f64>, dx: f64) -> Result<SpatialStencil> {
    let residual = dec.max_residual();
    if residual > RESIDUAL_TOLERANCE {
        return Err(Error::Decomposition(format!(
            "decomposition residual {residual} exceeds {RESIDUAL_TOLERANCE}"
        )));
    }
    let n = dec.dim();
    if b.len() != n {
        return Err(Error::InvalidInput(format!(
            "drift has {} entries, expected {n}",
            b.len()
        )));
    }
    let mut st = SpatialStencil::new(n);
    let h2 = dx * dx;
    for (beta, &w) in dec.directions.iter().zip(&dec.weights) {
        debug_assert!(w >= 0.0);
        if w == 0.0 {
            continue;
        }
        st.add(beta.clone(), w / h2);
        st.add(beta.iter().map(|v| -v).collect(), w / h2);
    }
    for i in 0..n {
        let mut e = vec![0; n];
        e[i] = 1;
        if b[i] > 0.0 {
            st.add(e.clone(), b[i] / dx);
        }
        if b[i] < 0.0 {
            st.add(e.iter().map(|v| -v).collect(), -b[i] / dx);
        }
    }
    debug_assert!(st.is_positive_type());
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stencil::kushner_stencil;
    use proptest::prelude::*;

    fn m(n: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, v)
    }

    fn sound(a: &DMatrix<f64>, dec: &BZDecomposition) -> bool {
        let back = dec.reconstruct() + &dec.residual;
        (back - a).amax() <= 1e-12 && dec.weights.iter().all(|&w| w >= 0.0)
    }

    #[test]
    fn identity_is_coordinate_directions() {
        let d = bz_decompose(&DMatrix::identity(2, 2), 2).unwrap();
        assert_eq!(d.method, DecompositionMethod::ClosedForm);
        assert_eq!(d.weight(&[1, 0]), 1.0);
        assert_eq!(d.weight(&[0, 1]), 1.0);
        assert_eq!(d.max_residual(), 0.0);
    }

    #[test]
    fn two_one_one_two() {
        let a = m(2, &[2.0, 1.0, 1.0, 2.0]);
        let d = bz_decompose(&a, 2).unwrap();
        assert_eq!(d.weight(&[1, 0]), 1.0);
        assert_eq!(d.weight(&[0, 1]), 1.0);
        assert_eq!(d.weight(&[1, 1]), 1.0);
        assert_eq!(d.max_residual(), 0.0);
        // reconstruction oracle: I + (1,1)(1,1)^T
        let oracle = DMatrix::identity(2, 2) + m(2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(d.reconstruct(), oracle);
    }

    #[test]
    fn weakly_dominant_rank_one() {
        let d = bz_decompose(&m(2, &[1.0, -1.0, -1.0, 1.0]), 2).unwrap();
        assert_eq!(d.method, DecompositionMethod::ClosedForm);
        assert_eq!(d.weight(&[1, -1]), 1.0);
        assert_eq!(d.weight(&[1, 0]), 0.0);
        assert_eq!(d.max_residual(), 0.0);
    }

    #[test]
    fn non_dominant_rank_one_is_recovered() {
        for beta in [[1, 2], [2, -3], [3, 1]] {
            let a = outer(&beta);
            let d = bz_decompose(&a, 3).unwrap();
            assert_ne!(d.method, DecompositionMethod::ClosedForm);
            assert!(d.max_residual() <= 1e-12, "{beta:?}: {}", d.max_residual());
            assert!((d.weight(&beta) - 1.0).abs() < 1e-9, "{beta:?}");
        }
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        assert!(matches!(
            bz_decompose(&m(2, &[1.0, 2.0, 2.0, 1.0]), 2),
            Err(Error::Decomposition(_))
        ));
        assert!(matches!(
            bz_decompose(&m(2, &[1.0, 0.5, 0.0, 1.0]), 2),
            Err(Error::Decomposition(_))
        ));
        assert!(bz_decompose(&DMatrix::zeros(2, 3), 2).is_err());
    }

    #[test]
    fn insufficient_order_leaves_residual() {
        // (1,3)(1,3)^T is not reachable with entries in [-2, 2]
        let a = outer(&[1, 3]);
        let d = bz_decompose(&a, 2).unwrap();
        assert!(sound(&a, &d));
        assert!(d.max_residual() > 1e-6);
        assert!(bz_stencil(&d, &DVector::zeros(2), 0.1).is_err());
    }

    #[test]
    fn direction_set_is_primitive_and_sign_normalised() {
        let dirs = directions(2, 2);
        // primitive vectors in [-2,2]^2 up to sign: 8
        assert_eq!(dirs.len(), 8);
        assert!(dirs.contains(&vec![1, 2]));
        assert!(!dirs.contains(&vec![2, 0]));
        assert!(!dirs.contains(&vec![-1, 1]));
        assert_eq!(directions(3, 1).len(), 13);
    }

    #[test]
    fn stencil_examples() {
        let unit = BZDecomposition {
            directions: vec![vec![1, 0], vec![0, 1]],
            weights: vec![1.0, 1.0],
            residual: DMatrix::zeros(2, 2),
            method: DecompositionMethod::ClosedForm,
        };
        let st = bz_stencil(&unit, &DVector::zeros(2), 0.1).unwrap();
        for e in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
            assert!((st.weight(&e) - 100.0).abs() < 1e-9);
        }

        let diag = BZDecomposition {
            directions: vec![vec![1, 1]],
            weights: vec![2.0],
            residual: DMatrix::zeros(2, 2),
            method: DecompositionMethod::Descent,
        };
        let st = bz_stencil(&diag, &DVector::zeros(2), 0.1).unwrap();
        assert!((st.weight(&[1, 1]) - 200.0).abs() < 1e-9);
        assert!((st.weight(&[-1, -1]) - 200.0).abs() < 1e-9);

        let empty = BZDecomposition {
            directions: vec![],
            weights: vec![],
            residual: DMatrix::zeros(2, 2),
            method: DecompositionMethod::ClosedForm,
        };
        let st = bz_stencil(&empty, &DVector::from_vec(vec![1.0, 0.0]), 0.5).unwrap();
        assert_eq!(st.len(), 1);
        assert_eq!(st.weight(&[1, 0]), 2.0);
    }

    #[test]
    fn matches_kushner_for_diagonal_diffusion() {
        let a = m(3, &[0.7, 0.0, 0.0, 0.0, 1.3, 0.0, 0.0, 0.0, 0.2]);
        let z = bz_stencil(&bz_decompose(&a, 1).unwrap(), &DVector::zeros(3), 0.05).unwrap();
        let k = kushner_stencil(&a, &DVector::zeros(3), 0.05);
        for (beta, w) in k.entries() {
            assert_eq!(w, z.weight(beta), "{beta:?}");
        }
        for (beta, w) in z.entries() {
            assert_eq!(w, k.weight(beta), "{beta:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn decomposition_is_sound_for_psd_input(
            entries in proptest::collection::vec(-1.0f64..1.0, 9),
        ) {
            let g = DMatrix::from_row_slice(3, 3, &entries);
            let a = &g * g.transpose();
            let d = bz_decompose(&a, 2).unwrap();
            prop_assert!(sound(&a, &d));
        }

        #[test]
        fn stencil_is_positive_type(
            d in proptest::collection::vec(0.5f64..2.0, 2), o in -0.5f64..0.5,
            b in proptest::collection::vec(-1.0f64..1.0, 2),
        ) {
            let a = m(2, &[d[0], o, o, d[1]]);
            let dec = bz_decompose(&a, 2).unwrap();
            let st = bz_stencil(&dec, &DVector::from_vec(b), 0.1).unwrap();
            prop_assert!(st.is_positive_type());
        }
    }
}
