use nalgebra::{DMatrix, DVector};

use super::SpatialStencil;

/// Kushner's stencil on `{+-e_i, +-(e_i + e_j), +-(e_i - e_j)}`:
///
/// ```text
/// C(+-e_i)          = a_ii/dx^2 - sum_{j != i} |a_ij|/dx^2 + b_i^{+-}/dx
/// C(+-(e_i + e_j))  = a_ij^+/dx^2
/// C(+-(e_i - e_j))  = a_ij^-/dx^2                      (i < j)
/// ```
///
/// The mixed second differences reproduce `2 a_ij d_ij` exactly on quadratics,
/// so the operator is consistent with `tr[a D^2] + b . D`. Weights may be
/// negative when `a` is not diagonally dominant.
pub fn kushner_stencil(a: &DMatrix<f64>, b: &DVector<f64>, dx: f64) -> SpatialStencil {
    let n = a.nrows();
    let h2 = dx * dx;
    let mut st = SpatialStencil::new(n);
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
        let base = (a[(i, i)] - off) / h2;
        let mut plus = vec![0; n];
        plus[i] = 1;
        let minus: Vec<i32> = plus.iter().map(|v| -v).collect();
        st.add(plus, base + b[i].max(0.0) / dx);
        st.add(minus, base + (-b[i]).max(0.0) / dx);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (pos, neg) = (a[(i, j)].max(0.0), (-a[(i, j)]).max(0.0));
            for (si, sj, w) in [(1, 1, pos), (-1, -1, pos), (1, -1, neg), (-1, 1, neg)] {
                let mut beta = vec![0; n];
                beta[i] = si;
                beta[j] = sj;
                st.add(beta, w / h2);
            }
        }
    }
    st
}
