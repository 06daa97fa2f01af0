//! Sparse symmetric (indefinite) block LDLᵀ factorization.
//!
//! The matrix is stored as square `bs × bs` blocks. The factorization pivots
//! only on whole diagonal blocks, which is enough whenever every leading
//! block principal submatrix is nonsingular. The saddle systems of the
//! smoother have this property (the stiffness matrix restricted to interior
//! nodes is positive definite), and so do the positive definite ridge
//! systems of the compactly supported baselines (`bs = 1`).
//!
//! Fill is kept down by a geometric nested-dissection ordering of the
//! blocks. Solves run iterative refinement against the original matrix and
//! fall back to MINRES when refinement stalls.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Symmetric block-sparse matrix. Both triangles are stored.
#[derive(Clone, Debug)]
pub struct BlockMatrix<T> {
    bs: usize,
    rows: Vec<Vec<(usize, Vec<T>)>>,
}

impl<T: Real> BlockMatrix<T> {
    /// `rows[i]` lists `(j, block)` with blocks in row-major order.
    pub fn from_rows(bs: usize, mut rows: Vec<Vec<(usize, Vec<T>)>>) -> Result<Self> {
        let n = rows.len();
        for row in rows.iter_mut() {
            row.sort_by_key(|(j, _)| *j);
            for w in row.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::DimensionMismatch(format!("duplicate block column {}", w[0].0)));
                }
            }
            if row.iter().any(|(j, b)| *j >= n || b.len() != bs * bs) {
                return Err(Error::DimensionMismatch("block out of range or misshaped".into()));
            }
        }
        Ok(BlockMatrix { bs, rows })
    }

    pub fn block_size(&self) -> usize {
        self.bs
    }

    pub fn num_blocks(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows.len() * self.bs
    }

    pub fn row(&self, i: usize) -> &[(usize, Vec<T>)] {
        &self.rows[i]
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&[T]> {
        let row = &self.rows[i];
        row.binary_search_by_key(&j, |(c, _)| *c)
            .ok()
            .map(|k| row[k].1.as_slice())
    }

    /// Number of stored scalar entries that are not exactly zero.
    pub fn nnz(&self) -> usize {
        self.rows
            .iter()
            .flatten()
            .map(|(_, b)| b.iter().filter(|v| **v != T::zero()).count())
            .sum()
    }

    pub fn mul(&self, x: &[T]) -> Vec<T> {
        let bs = self.bs;
        let mut y = vec![T::zero(); self.dim()];
        for (i, row) in self.rows.iter().enumerate() {
            let yi = &mut y[i * bs..(i + 1) * bs];
            for (j, b) in row {
                let xj = &x[j * bs..(j + 1) * bs];
                for r in 0..bs {
                    let mut acc = T::zero();
                    for c in 0..bs {
                        acc += b[r * bs + c] * xj[c];
                    }
                    yi[r] += acc;
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let bs = self.bs;
        let mut m = vec![vec![T::zero(); self.dim()]; self.dim()];
        for (i, row) in self.rows.iter().enumerate() {
            for (j, b) in row {
                for r in 0..bs {
                    for c in 0..bs {
                        m[i * bs + r][j * bs + c] = b[r * bs + c];
                    }
                }
            }
        }
        m
    }

    /// Largest `|M_ij - M_ji|`.
    pub fn asymmetry(&self) -> T {
        let bs = self.bs;
        let mut worst = T::zero();
        for (i, row) in self.rows.iter().enumerate() {
            for (j, b) in row {
                let Some(bt) = self.block(*j, i) else {
                    return T::infinity();
                };
                for r in 0..bs {
                    for c in 0..bs {
                        worst = worst.max((b[r * bs + c] - bt[c * bs + r]).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Geometric nested dissection over block coordinates.
///
/// Sets are split at the median of the longer bounding-box axis; the
/// smaller one-sided boundary between the halves becomes the separator and
/// is ordered last. Sets of at most 32 blocks keep their natural order.
pub fn nested_dissection<T: Real>(matrix: &BlockMatrix<T>, coords: &[[f64; 2]]) -> Vec<usize> {
    let n = matrix.num_blocks();
    assert_eq!(coords.len(), n, "one coordinate per block");
    let mut side = vec![0u8; n];
    let mut out = Vec::with_capacity(n);
    dissect((0..n).collect(), matrix, coords, &mut side, &mut out);
    out
}

fn dissect<T: Real>(
    mut set: Vec<usize>,
    matrix: &BlockMatrix<T>,
    coords: &[[f64; 2]],
    side: &mut [u8],
    out: &mut Vec<usize>,
) {
    if set.len() <= 32 {
        set.sort_unstable();
        out.extend(set);
        return;
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &v in &set {
        for k in 0..2 {
            lo[k] = lo[k].min(coords[v][k]);
            hi[k] = hi[k].max(coords[v][k]);
        }
    }
    let axis = usize::from(hi[1] - lo[1] > hi[0] - lo[0]);
    set.sort_by(|&a, &b| coords[a][axis].total_cmp(&coords[b][axis]).then(a.cmp(&b)));
    let right = set.split_off(set.len() / 2);
    let left = set;
    for &v in &left {
        side[v] = 1;
    }
    for &v in &right {
        side[v] = 2;
    }
    let touches = |v: usize, other: u8, side: &[u8]| matrix.row(v).iter().any(|(j, _)| side[*j] == other);
    let sep_l: Vec<usize> = left.iter().copied().filter(|&v| touches(v, 2, side)).collect();
    let sep_r: Vec<usize> = right.iter().copied().filter(|&v| touches(v, 1, side)).collect();
    for &v in left.iter().chain(&right) {
        side[v] = 0;
    }
    let (sep, cut_left) = if sep_r.len() < sep_l.len() {
        (sep_r, false)
    } else {
        (sep_l, true)
    };
    for &v in &sep {
        side[v] = 3;
    }
    let left: Vec<usize> = left.into_iter().filter(|&v| !(cut_left && side[v] == 3)).collect();
    let right: Vec<usize> = right.into_iter().filter(|&v| !(!cut_left && side[v] == 3)).collect();
    for &v in &sep {
        side[v] = 0;
    }
    dissect(left, matrix, coords, side, out);
    dissect(right, matrix, coords, side, out);
    let mut sep = sep;
    sep.sort_unstable();
    out.extend(sep);
}

/// `c -= a * b` for `bs × bs` row-major blocks.
#[inline]
fn gemm_sub<T: Real>(c: &mut [T], a: &[T], b: &[T], bs: usize) {
    for r in 0..bs {
        for k in 0..bs {
            let ark = a[r * bs + k];
            if ark == T::zero() {
                continue;
            }
            for s in 0..bs {
                c[r * bs + s] -= ark * b[k * bs + s];
            }
        }
    }
}

/// `aᵀ * b`.
#[inline]
fn gemm_tn<T: Real>(a: &[T], b: &[T], bs: usize) -> Vec<T> {
    let mut c = vec![T::zero(); bs * bs];
    for k in 0..bs {
        for r in 0..bs {
            let akr = a[k * bs + r];
            if akr == T::zero() {
                continue;
            }
            for s in 0..bs {
                c[r * bs + s] += akr * b[k * bs + s];
            }
        }
    }
    c
}

/// Inverse of a small dense block by LU with partial pivoting.
fn invert_block<T: Real>(m: &[T], bs: usize) -> Option<Vec<T>> {
    let mut a = m.to_vec();
    let mut inv = vec![T::zero(); bs * bs];
    for i in 0..bs {
        inv[i * bs + i] = T::one();
    }
    let scale = m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if scale == T::zero() {
        return None;
    }
    let tiny = scale * T::default_epsilon() * T::lit(16.0);
    for col in 0..bs {
        let piv = (col..bs)
            .max_by(|&x, &y| {
                a[x * bs + col]
                    .abs()
                    .partial_cmp(&a[y * bs + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty range");
        let p = a[piv * bs + col];
        if !(p.abs() > tiny) {
            return None;
        }
        if piv != col {
            for k in 0..bs {
                a.swap(piv * bs + k, col * bs + k);
                inv.swap(piv * bs + k, col * bs + k);
            }
        }
        let p_inv = T::one() / p;
        for k in 0..bs {
            a[col * bs + k] *= p_inv;
            inv[col * bs + k] *= p_inv;
        }
        for r in 0..bs {
            if r == col {
                continue;
            }
            let f = a[r * bs + col];
            if f == T::zero() {
                continue;
            }
            for k in 0..bs {
                let (ack, ick) = (a[col * bs + k], inv[col * bs + k]);
                a[r * bs + k] -= f * ack;
                inv[r * bs + k] -= f * ick;
            }
        }
    }
    Some(inv)
}

/// Block LDLᵀ factors of a symmetrically scaled and permuted matrix.
#[derive(Clone, Debug)]
pub struct BlockLdl<T> {
    bs: usize,
    perm: Vec<usize>,
    scale: Vec<T>,
    /// Column `j` of `L`: row block indices and blocks.
    col_rows: Vec<Vec<usize>>,
    col_vals: Vec<Vec<T>>,
    d_inv: Vec<T>,
}

impl<T: Real> BlockLdl<T> {
    /// `perm[new] = old`.
    pub fn factor(matrix: &BlockMatrix<T>, perm: &[usize]) -> Result<Self> {
        let n = matrix.num_blocks();
        let bs = matrix.bs;
        let b2 = bs * bs;
        if perm.len() != n {
            return Err(Error::DimensionMismatch("ordering length".into()));
        }
        if n == 0 {
            return Err(Error::SingularSystem("empty system".into()));
        }
        let mut pinv = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }
        if pinv.contains(&usize::MAX) {
            return Err(Error::DimensionMismatch("ordering is not a permutation".into()));
        }
        let scale = equilibrate(matrix);

        // Elimination tree and column counts.
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for (j, _) in matrix.row(perm[k]) {
                let mut i = pinv[*j];
                if i >= k {
                    continue;
                }
                while flag[i] != k {
                    if parent[i] == usize::MAX {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }

        let mut col_rows: Vec<Vec<usize>> = lnz.iter().map(|&c| Vec::with_capacity(c)).collect();
        let mut col_vals: Vec<Vec<T>> = lnz.iter().map(|&c| Vec::with_capacity(c * b2)).collect();
        let mut d_inv = vec![T::zero(); n * b2];
        let mut y = vec![T::zero(); n * b2];
        let mut pattern = vec![0usize; n];
        let mut stack = vec![0usize; n];
        flag.fill(usize::MAX);
        let mut d = vec![T::zero(); b2];

        for k in 0..n {
            flag[k] = k;
            let mut top = n;
            let ko = perm[k];
            for (j, blk) in matrix.row(ko) {
                let i0 = pinv[*j];
                if i0 > k {
                    continue;
                }
                // Scaled block A(k, i0); column k of the upper triangle is its transpose.
                let yi = &mut y[i0 * b2..(i0 + 1) * b2];
                for r in 0..bs {
                    for c in 0..bs {
                        let v = blk[r * bs + c] * scale[ko * bs + r] * scale[*j * bs + c];
                        yi[c * bs + r] += v;
                    }
                }
                let mut i = i0;
                let mut len = 0;
                while flag[i] != k {
                    stack[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = stack[len];
                }
            }
            d.copy_from_slice(&y[k * b2..(k + 1) * b2]);
            y[k * b2..(k + 1) * b2].fill(T::zero());
            for &i in &pattern[top..n] {
                let yi: Vec<T> = y[i * b2..(i + 1) * b2].to_vec();
                y[i * b2..(i + 1) * b2].fill(T::zero());
                for (idx, &p) in col_rows[i].iter().enumerate() {
                    let lpi = &col_vals[i][idx * b2..(idx + 1) * b2];
                    gemm_sub(&mut y[p * b2..(p + 1) * b2], lpi, &yi, bs);
                }
                let lki = gemm_tn(&yi, &d_inv[i * b2..(i + 1) * b2], bs);
                gemm_sub(&mut d, &lki, &yi, bs);
                col_rows[i].push(k);
                col_vals[i].extend_from_slice(&lki);
            }
            let inv = invert_block(&d, bs).ok_or_else(|| {
                Error::SingularSystem(format!("zero pivot block at position {k} (block {ko})"))
            })?;
            d_inv[k * b2..(k + 1) * b2].copy_from_slice(&inv);
        }
        Ok(BlockLdl {
            bs,
            perm: perm.to_vec(),
            scale,
            col_rows,
            col_vals,
            d_inv,
        })
    }

    /// Stored scalar entries of `L` (excluding the unit diagonal) plus `D`.
    pub fn factor_nnz(&self) -> usize {
        let b2 = self.bs * self.bs;
        self.col_rows.iter().map(Vec::len).sum::<usize>() * b2 + self.perm.len() * b2
    }

    /// One application of the factors: `x ≈ M⁻¹ b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let bs = self.bs;
        let b2 = bs * bs;
        let n = self.perm.len();
        let mut z = vec![T::zero(); n * bs];
        for (k, &old) in self.perm.iter().enumerate() {
            for r in 0..bs {
                z[k * bs + r] = b[old * bs + r] * self.scale[old * bs + r];
            }
        }
        // Forward: L z = b.
        for j in 0..n {
            let zj: Vec<T> = z[j * bs..(j + 1) * bs].to_vec();
            for (idx, &k) in self.col_rows[j].iter().enumerate() {
                let l = &self.col_vals[j][idx * b2..(idx + 1) * b2];
                for r in 0..bs {
                    let mut acc = T::zero();
                    for c in 0..bs {
                        acc += l[r * bs + c] * zj[c];
                    }
                    z[k * bs + r] -= acc;
                }
            }
        }
        // Block diagonal.
        for j in 0..n {
            let dj = &self.d_inv[j * b2..(j + 1) * b2];
            let zj: Vec<T> = z[j * bs..(j + 1) * bs].to_vec();
            for r in 0..bs {
                let mut acc = T::zero();
                for c in 0..bs {
                    acc += dj[r * bs + c] * zj[c];
                }
                z[j * bs + r] = acc;
            }
        }
        // Backward: Lᵀ x = z.
        for j in (0..n).rev() {
            for (idx, &k) in self.col_rows[j].iter().enumerate() {
                let l = &self.col_vals[j][idx * b2..(idx + 1) * b2];
                for c in 0..bs {
                    let mut acc = T::zero();
                    for r in 0..bs {
                        acc += l[r * bs + c] * z[k * bs + r];
                    }
                    z[j * bs + c] -= acc;
                }
            }
        }
        let mut x = vec![T::zero(); n * bs];
        for (k, &old) in self.perm.iter().enumerate() {
            for r in 0..bs {
                x[old * bs + r] = z[k * bs + r] * self.scale[old * bs + r];
            }
        }
        x
    }
}

/// Symmetric Ruiz scaling so that every row has max-norm close to one.
fn equilibrate<T: Real>(matrix: &BlockMatrix<T>) -> Vec<T> {
    let bs = matrix.bs;
    let mut s = vec![T::one(); matrix.dim()];
    for _ in 0..5 {
        let mut row_max = vec![T::zero(); matrix.dim()];
        for (i, row) in matrix.rows.iter().enumerate() {
            for (j, b) in row {
                for r in 0..bs {
                    for c in 0..bs {
                        let v = (b[r * bs + c] * s[i * bs + r] * s[*j * bs + c]).abs();
                        let m = &mut row_max[i * bs + r];
                        if v > *m {
                            *m = v;
                        }
                    }
                }
            }
        }
        for (si, m) in s.iter_mut().zip(&row_max) {
            if *m > T::zero() && m.is_finite_value() {
                *si /= m.sqrt();
            }
        }
    }
    s
}

/// Outcome of a refined solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveInfo {
    pub refinement_steps: usize,
    pub relative_residual: f64,
    pub minres_iterations: usize,
}

fn norm2<T: Real>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).sum::<T>().sqrt()
}

/// Factor-based solve with iterative refinement and a MINRES fallback.
pub fn solve_refined<T: Real>(
    matrix: &BlockMatrix<T>,
    factor: &BlockLdl<T>,
    b: &[T],
    tol: T,
    max_minres: usize,
) -> Result<(Vec<T>, SolveInfo)> {
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        return Ok((
            vec![T::zero(); b.len()],
            SolveInfo {
                refinement_steps: 0,
                relative_residual: 0.0,
                minres_iterations: 0,
            },
        ));
    }
    let mut x = factor.solve(b);
    let mut steps = 0;
    let mut best = (T::infinity(), x.clone());
    let mut prev = T::infinity();
    loop {
        let ax = matrix.mul(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
        let rel = norm2(&r) / bnorm;
        let finite = rel.is_finite_value();
        if finite && rel < best.0 {
            best = (rel, x.clone());
        }
        if finite && rel <= tol {
            return Ok((
                x,
                SolveInfo {
                    refinement_steps: steps,
                    relative_residual: rel.as_f64(),
                    minres_iterations: 0,
                },
            ));
        }
        // Stop refining once it no longer helps.
        if !finite || steps >= 10 || rel > prev * T::lit(0.5) {
            break;
        }
        prev = rel;
        let dx = factor.solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += *di;
        }
        steps += 1;
    }
    log::debug!("refinement stalled at {:e}; running MINRES", best.0.as_f64());
    let start = if best.0.is_finite_value() {
        best.1
    } else {
        vec![T::zero(); b.len()]
    };
    let (x, iters, rel) = minres(matrix, b, start, tol, max_minres);
    if rel <= tol.as_f64() {
        Ok((
            x,
            SolveInfo {
                refinement_steps: steps,
                relative_residual: rel,
                minres_iterations: iters,
            },
        ))
    } else {
        Err(Error::NonConvergence {
            iterations: iters,
            residual: rel,
        })
    }
}

/// Unpreconditioned MINRES for symmetric `M`. Returns the iterate, the
/// iteration count and the true relative residual.
pub fn minres<T: Real>(
    matrix: &BlockMatrix<T>,
    b: &[T],
    x0: Vec<T>,
    tol: T,
    max_iter: usize,
) -> (Vec<T>, usize, f64) {
    let n = b.len();
    let mut x = x0;
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        return (vec![T::zero(); n], 0, 0.0);
    }
    let ax = matrix.mul(&x);
    let mut r1: Vec<T> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
    let mut y = r1.clone();
    let mut r2 = r1.clone();
    let beta1 = norm2(&r1);
    let true_rel = |x: &[T]| {
        let ax = matrix.mul(x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
        (norm2(&r) / bnorm).as_f64()
    };
    if beta1 == T::zero() {
        return (x, 0, 0.0);
    }
    let (mut oldb, mut beta) = (T::zero(), beta1);
    let (mut dbar, mut epsln, mut phibar) = (T::zero(), T::zero(), beta1);
    let (mut cs, mut sn) = (-T::one(), T::zero());
    let mut w = vec![T::zero(); n];
    let mut w2 = vec![T::zero(); n];
    let mut iters = 0;
    for itn in 1..=max_iter {
        iters = itn;
        let s = T::one() / beta;
        let v: Vec<T> = y.iter().map(|yi| *yi * s).collect();
        y = matrix.mul(&v);
        if itn >= 2 {
            let f = beta / oldb;
            for (yi, ri) in y.iter_mut().zip(&r1) {
                *yi -= f * *ri;
            }
        }
        let alfa: T = v.iter().zip(&y).map(|(a, b)| *a * *b).sum();
        let f = alfa / beta;
        for (yi, ri) in y.iter_mut().zip(&r2) {
            *yi -= f * *ri;
        }
        r1 = std::mem::replace(&mut r2, y.clone());
        oldb = beta;
        beta = norm2(&y);
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(T::default_epsilon());
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        let w1 = std::mem::replace(&mut w2, w.clone());
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
            x[i] += phi * w[i];
        }
        if phibar / bnorm <= tol || beta == T::zero() {
            break;
        }
    }
    let rel = true_rel(&x);
    (x, iters, rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random symmetric block matrix on a path-like pattern with a
    /// nonsingular saddle structure in each diagonal block.
    fn random_matrix(n: usize, bs: usize, seed: u64) -> BlockMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows: Vec<Vec<(usize, Vec<f64>)>> = vec![Vec::new(); n];
        for i in 0..n {
            for j in [i + 1, i + 3] {
                if j >= n {
                    continue;
                }
                let b: Vec<f64> = (0..bs * bs).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mut bt = vec![0.0; bs * bs];
                for r in 0..bs {
                    for c in 0..bs {
                        bt[c * bs + r] = b[r * bs + c];
                    }
                }
                rows[i].push((j, b));
                rows[j].push((i, bt));
            }
            let mut d = vec![0.0; bs * bs];
            for r in 0..bs {
                for c in 0..=r {
                    let v = rng.random_range(-1.0..1.0);
                    d[r * bs + c] = v;
                    d[c * bs + r] = v;
                }
                d[r * bs + r] += if r % 2 == 0 { 8.0 } else { -8.0 };
            }
            rows[i].push((i, d));
        }
        BlockMatrix::from_rows(bs, rows).unwrap()
    }

    fn dense_solve(m: &BlockMatrix<f64>, b: &[f64]) -> Vec<f64> {
        let d = m.to_dense();
        let n = d.len();
        let dm = DMatrix::from_fn(n, n, |i, j| d[i][j]);
        dm.lu().solve(&DVector::from_column_slice(b)).unwrap().as_slice().to_vec()
    }

    #[test]
    fn matches_dense_solve_for_several_orderings() {
        for (bs, n) in [(1, 40), (4, 30), (3, 17)] {
            let m = random_matrix(n, bs, 7 + n as u64);
            assert_eq!(m.asymmetry(), 0.0);
            let b: Vec<f64> = (0..m.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
            let oracle = dense_solve(&m, &b);
            let coords: Vec<[f64; 2]> = (0..n).map(|i| [i as f64, (i % 5) as f64]).collect();
            let mut rev: Vec<usize> = (0..n).collect();
            rev.reverse();
            for perm in [(0..n).collect::<Vec<_>>(), rev, nested_dissection(&m, &coords)] {
                let f = BlockLdl::factor(&m, &perm).unwrap();
                let (x, info) = solve_refined(&m, &f, &b, 1e-12, 100).unwrap();
                assert!(info.relative_residual <= 1e-12);
                for (a, o) in x.iter().zip(&oracle) {
                    assert!((a - o).abs() <= 1e-10 * (1.0 + o.abs()));
                }
            }
        }
    }

    #[test]
    fn nested_dissection_is_a_permutation() {
        let n = 400;
        let mut rows: Vec<Vec<(usize, Vec<f64>)>> = vec![Vec::new(); n];
        for i in 0..20 {
            for j in 0..20 {
                let v = i * 20 + j;
                rows[v].push((v, vec![4.0]));
                if j + 1 < 20 {
                    rows[v].push((v + 1, vec![-1.0]));
                    rows[v + 1].push((v, vec![-1.0]));
                }
                if i + 1 < 20 {
                    rows[v].push((v + 20, vec![-1.0]));
                    rows[v + 20].push((v, vec![-1.0]));
                }
            }
        }
        let m = BlockMatrix::from_rows(1, rows).unwrap();
        let coords: Vec<[f64; 2]> = (0..n).map(|v| [(v % 20) as f64, (v / 20) as f64]).collect();
        let perm = nested_dissection(&m, &coords);
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        let nd = BlockLdl::factor(&m, &perm).unwrap().factor_nnz();
        let natural = BlockLdl::factor(&m, &(0..n).collect::<Vec<_>>()).unwrap().factor_nnz();
        assert!(nd < natural, "{nd} vs {natural}");
    }

    #[test]
    fn singular_block_is_reported() {
        let m = BlockMatrix::from_rows(1, vec![vec![(0, vec![0.0])]]).unwrap();
        assert!(matches!(BlockLdl::factor(&m, &[0]), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn minres_solves_indefinite_system() {
        let m = random_matrix(25, 2, 3);
        let b: Vec<f64> = (0..m.dim()).map(|i| 1.0 + (i as f64).cos()).collect();
        let (x, _, rel) = minres(&m, &b, vec![0.0; b.len()], 1e-12, 2000);
        assert!(rel < 1e-10, "{rel}");
        let oracle = dense_solve(&m, &b);
        for (a, o) in x.iter().zip(&oracle) {
            assert!((a - o).abs() < 1e-8);
        }
    }
}
