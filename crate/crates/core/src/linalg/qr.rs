use nalgebra::DMatrix;

/// Householder QR with column pivoting, `A P = Q R`.
///
/// Pivot ties go to the lowest column index. Used for rank-revealing
/// least squares and for QDEIM index selection.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    qr: DMatrix<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
    steps: usize,
    rank: usize,
}

impl PivotedQr {
    /// Factorizes with the default rank tolerance `ε·max(m, n)` relative to `|R₁₁|`.
    pub fn new(a: DMatrix<f64>) -> Self {
        let tol = f64::EPSILON * a.nrows().max(a.ncols()) as f64;
        Self::with_tolerance(a, tol)
    }

    pub fn with_tolerance(mut a: DMatrix<f64>, rel_tol: f64) -> Self {
        let (m, n) = a.shape();
        let kmax = m.min(n);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut tau = Vec::with_capacity(kmax);
        let mut norms = vec![0.0; n];
        let mut steps = 0;
        for j in 0..kmax {
            for (c, nv) in norms.iter_mut().enumerate().skip(j) {
                *nv = super::nrm2(&a.as_slice()[c * m + j..(c + 1) * m]);
            }
            let mut piv = j;
            for c in j + 1..n {
                if norms[c] > norms[piv] {
                    piv = c;
                }
            }
            if norms[piv] == 0.0 {
                break;
            }
            if piv != j {
                a.swap_columns(j, piv);
                perm.swap(j, piv);
            }
            let t = householder_in_place(&mut a, j);
            tau.push(t);
            steps += 1;
        }
        let mut rank = 0;
        if steps > 0 {
            let r00 = a[(0, 0)].abs();
            rank = (0..steps).take_while(|&j| a[(j, j)].abs() > rel_tol * r00).count();
        }
        PivotedQr { qr: a, tau, perm, steps, rank }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `perm[j]` is the original column moved to position `j`.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn r_diag(&self) -> Vec<f64> {
        (0..self.steps).map(|j| self.qr[(j, j)]).collect()
    }

    /// Minimum-norm least-squares solution of `A x = b` for every column of `b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let (m, n) = self.qr.shape();
        assert_eq!(b.nrows(), m, "rhs row count");
        let k = self.rank;
        let mut x = DMatrix::zeros(n, b.ncols());
        if k == 0 {
            return x;
        }
        // Complete orthogonal step for rank-deficient or wide problems.
        let cod = if k < n {
            let t = DMatrix::from_fn(n, k, |i, j| if i >= j { self.qr[(j, i)] } else { 0.0 });
            let qr = t.qr();
            Some((qr.q(), qr.r()))
        } else {
            None
        };
        let mut c = vec![0.0; m];
        for col in 0..b.ncols() {
            c.copy_from_slice(b.column(col).as_slice());
            self.apply_qt(&mut c);
            let y = match &cod {
                None => {
                    let mut y = c[..k].to_vec();
                    for i in (0..k).rev() {
                        let mut s = y[i];
                        for j in i + 1..k {
                            s -= self.qr[(i, j)] * y[j];
                        }
                        y[i] = s / self.qr[(i, i)];
                    }
                    y
                }
                Some((w, rt)) => {
                    let mut z = c[..k].to_vec();
                    for i in 0..k {
                        let mut s = z[i];
                        for j in 0..i {
                            s -= rt[(j, i)] * z[j];
                        }
                        z[i] = s / rt[(i, i)];
                    }
                    (0..n).map(|i| (0..k).map(|j| w[(i, j)] * z[j]).sum()).collect()
                }
            };
            for (j, &p) in self.perm.iter().enumerate() {
                x[(p, col)] = y[j];
            }
        }
        x
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let bm = DMatrix::from_column_slice(b.len(), 1, b);
        self.solve(&bm).as_slice().to_vec()
    }

    fn apply_qt(&self, c: &mut [f64]) {
        let m = self.qr.nrows();
        for (j, &t) in self.tau.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let v = &self.qr.as_slice()[j * m..(j + 1) * m];
            let mut s = c[j];
            for i in j + 1..m {
                s += v[i] * c[i];
            }
            s *= t;
            c[j] -= s;
            for i in j + 1..m {
                c[i] -= s * v[i];
            }
        }
    }
}

/// Reflects column `j` of `a` below the diagonal, applies the reflector to
/// the trailing columns, and leaves the essential part of `v` below the diagonal.
fn householder_in_place(a: &mut DMatrix<f64>, j: usize) -> f64 {
    let (m, n) = a.shape();
    let data = a.as_mut_slice();
    let col = &mut data[j * m..(j + 1) * m];
    let alpha = col[j];
    let xnorm = super::nrm2(&col[j + 1..]);
    if xnorm == 0.0 {
        return 0.0;
    }
    let norm = alpha.hypot(xnorm);
    let beta = if alpha >= 0.0 { -norm } else { norm };
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for v in col[j + 1..].iter_mut() {
        *v *= scale;
    }
    col[j] = beta;
    let (head, tail) = data.split_at_mut((j + 1) * m);
    let v = &head[j * m..(j + 1) * m];
    for c in 0..n - j - 1 {
        let target = &mut tail[c * m..(c + 1) * m];
        let mut s = target[j];
        for i in j + 1..m {
            s += v[i] * target[i];
        }
        s *= tau;
        target[j] -= s;
        for i in j + 1..m {
            target[i] -= s * v[i];
        }
    }
    tau
}

/// Minimum-norm least-squares solve returning the solution and numerical rank.
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let qr = PivotedQr::new(a.clone());
    let x = qr.solve(b);
    (x, qr.rank())
}
