//! Dense primal-dual interior-point solver for block-diagonal real SDPs with
//! free variables.
//!
//! Primal: minimize `<C, X> + c_u^T u` subject to `A(X) + B u = b`, `X ⪰ 0`.
//! Dual: maximize `b^T y` subject to `A^T(y) + Z = C`, `B^T y = c_u`, `Z ⪰ 0`.
//!
//! HKM search direction, Mehrotra predictor-corrector, infeasible start.
//! Constraint matrices are sparse symmetric matrices drawn from a shared
//! library, so the Schur complement is assembled once per distinct pair of
//! library matrices in each block and scattered to the constraints.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Sparse symmetric matrix. Each entry `(i, j, v)` with `i <= j` sets both
/// `(i, j)` and `(j, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn unit(n: usize, i: usize, j: usize, v: f64) -> Self {
        let mut s = Self::new(n);
        s.push(i, j, v);
        s
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.entries.push((i, j, v));
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            entries: (0..n).map(|i| (i, i, 1.0)).collect(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        m
    }

    /// `<S, M>` for dense `M` (not necessarily symmetric).
    pub fn inner(&self, m: &DMatrix<f64>) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| {
                if i == j {
                    v * m[(i, i)]
                } else {
                    v * (m[(i, j)] + m[(j, i)])
                }
            })
            .sum()
    }

    /// `M += s * S`.
    pub fn add_to(&self, m: &mut DMatrix<f64>, s: f64) {
        for &(i, j, v) in &self.entries {
            m[(i, j)] += s * v;
            if i != j {
                m[(j, i)] += s * v;
            }
        }
    }

    /// `M S` for dense `M`.
    fn right_mul(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), self.n);
        for &(i, j, v) in &self.entries {
            for r in 0..m.nrows() {
                out[(r, j)] += v * m[(r, i)];
                if i != j {
                    out[(r, i)] += v * m[(r, j)];
                }
            }
        }
        out
    }

    fn frob_sq(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum()
    }
}

/// One term `coeff * <basis[basis_id], X_block>` of a constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub block: usize,
    pub basis_id: usize,
    pub coeff: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Constraint {
    pub terms: Vec<Term>,
    /// `(free variable index, coefficient)`.
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdpProblem {
    pub block_sizes: Vec<usize>,
    pub basis: Vec<SparseSym>,
    pub constraints: Vec<Constraint>,
    /// Objective terms `(basis_id, coeff)` per block.
    pub objective: Vec<Vec<(usize, f64)>>,
    pub free_objective: Vec<f64>,
}

impl SdpProblem {
    pub fn new(block_sizes: Vec<usize>, num_free: usize) -> Self {
        let nb = block_sizes.len();
        Self {
            block_sizes,
            basis: Vec::new(),
            constraints: Vec::new(),
            objective: vec![Vec::new(); nb],
            free_objective: vec![0.0; num_free],
        }
    }

    pub fn add_basis(&mut self, s: SparseSym) -> usize {
        self.basis.push(s);
        self.basis.len() - 1
    }

    pub fn num_free(&self) -> usize {
        self.free_objective.len()
    }

    fn check(&self) -> Result<()> {
        for (k, c) in self.constraints.iter().enumerate() {
            for t in &c.terms {
                let ok = t.block < self.block_sizes.len()
                    && t.basis_id < self.basis.len()
                    && self.basis[t.basis_id].n == self.block_sizes[t.block];
                if !ok {
                    return Err(Error::Shape(format!("constraint {k} has an inconsistent term")));
                }
            }
            if c.free.iter().any(|&(u, _)| u >= self.num_free()) {
                return Err(Error::Shape(format!("constraint {k} references a missing free variable")));
            }
        }
        if self.objective.len() != self.block_sizes.len() {
            return Err(Error::Shape("one objective list per block required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpSettings {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    pub step_fraction: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self {
            gap_tol: 1e-8,
            feas_tol: 1e-9,
            max_iter: 120,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: Vec<DMatrix<f64>>,
    pub u: DVector<f64>,
    pub y: DVector<f64>,
    pub z: Vec<DMatrix<f64>>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub rel_gap: f64,
}

/// Per-block view of the constraint terms.
struct BlockTerms {
    /// `(constraint, local id, coeff)`.
    terms: Vec<(usize, usize, f64)>,
    /// Library ids used in this block, indexed by local id.
    ids: Vec<usize>,
}

struct Workspace<'a> {
    p: &'a SdpProblem,
    blocks: Vec<BlockTerms>,
    c_dense: Vec<DMatrix<f64>>,
    b: DVector<f64>,
    bmat: DMatrix<f64>,
}

impl<'a> Workspace<'a> {
    fn new(p: &'a SdpProblem) -> Self {
        let mut blocks: Vec<BlockTerms> = p
            .block_sizes
            .iter()
            .map(|_| BlockTerms {
                terms: Vec::new(),
                ids: Vec::new(),
            })
            .collect();
        let mut local: Vec<std::collections::HashMap<usize, usize>> =
            vec![Default::default(); p.block_sizes.len()];
        for (i, c) in p.constraints.iter().enumerate() {
            for t in &c.terms {
                let bt = &mut blocks[t.block];
                let lid = *local[t.block].entry(t.basis_id).or_insert_with(|| {
                    bt.ids.push(t.basis_id);
                    bt.ids.len() - 1
                });
                bt.terms.push((i, lid, t.coeff));
            }
        }
        let c_dense = p
            .block_sizes
            .iter()
            .zip(&p.objective)
            .map(|(&n, obj)| {
                let mut m = DMatrix::zeros(n, n);
                for &(id, v) in obj {
                    p.basis[id].add_to(&mut m, v);
                }
                m
            })
            .collect();
        let m = p.constraints.len();
        let b = DVector::from_iterator(m, p.constraints.iter().map(|c| c.rhs));
        let mut bmat = DMatrix::zeros(m, p.num_free());
        for (i, c) in p.constraints.iter().enumerate() {
            for &(k, v) in &c.free {
                bmat[(i, k)] += v;
            }
        }
        Self {
            p,
            blocks,
            c_dense,
            b,
            bmat,
        }
    }

    /// `A(X)`.
    fn apply_a(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.p.constraints.len());
        for (bi, bt) in self.blocks.iter().enumerate() {
            let vals: Vec<f64> = bt
                .ids
                .iter()
                .map(|&id| self.p.basis[id].inner(&x[bi]))
                .collect();
            for &(i, lid, c) in &bt.terms {
                out[i] += c * vals[lid];
            }
        }
        out
    }

    /// `A^T(y)`.
    fn apply_at(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.blocks
            .iter()
            .zip(&self.p.block_sizes)
            .map(|(bt, &n)| {
                let mut w = vec![0.0; bt.ids.len()];
                for &(i, lid, c) in &bt.terms {
                    w[lid] += c * y[i];
                }
                let mut m = DMatrix::zeros(n, n);
                for (lid, &id) in bt.ids.iter().enumerate() {
                    if w[lid] != 0.0 {
                        self.p.basis[id].add_to(&mut m, w[lid]);
                    }
                }
                m
            })
            .collect()
    }

    /// Schur complement `M_ij = sum_b Tr(A_ib X_b A_jb Z_b^{-1})`.
    fn schur(&self, x: &[DMatrix<f64>], zinv: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m = self.p.constraints.len();
        let mut out = DMatrix::zeros(m, m);
        for (bi, bt) in self.blocks.iter().enumerate() {
            let k = bt.ids.len();
            if k == 0 {
                continue;
            }
            // G_l = X E_l Z^{-1}; S_{l l'} = Tr(E_l G_l').
            let g: Vec<DMatrix<f64>> = bt
                .ids
                .iter()
                .map(|&id| self.p.basis[id].right_mul(&x[bi]) * &zinv[bi])
                .collect();
            let mut s = DMatrix::zeros(k, k);
            for l in 0..k {
                for l2 in l..k {
                    let v = self.p.basis[bt.ids[l]].inner(&g[l2].transpose());
                    s[(l, l2)] = v;
                    s[(l2, l)] = v;
                }
            }
            for &(i, li, ci) in &bt.terms {
                for &(j, lj, cj) in &bt.terms {
                    out[(i, j)] += ci * cj * s[(li, lj)];
                }
            }
        }
        out
    }
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

fn chol(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(sym(m)).ok_or_else(|| Error::SolverFailure(format!("{what} lost positive definiteness")))
}

/// Largest `alpha <= 1` keeping `X + alpha dX` in the cone, scaled by `tau`.
fn step_length(x: &[DMatrix<f64>], dx: &[DMatrix<f64>], tau: f64) -> Result<f64> {
    let mut alpha: f64 = 1.0;
    for (xb, dxb) in x.iter().zip(dx) {
        let l = chol(xb, "iterate")?.l();
        let linv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SolverFailure("singular Cholesky factor".into()))?;
        let w = sym(&(&linv * dxb * linv.transpose()));
        let lmin = if w.nrows() == 1 {
            w[(0, 0)]
        } else {
            SymmetricEigen::new(w).eigenvalues.min()
        };
        if lmin < 0.0 {
            alpha = alpha.min(-tau / lmin);
        }
    }
    Ok(alpha.min(1.0))
}

/// Cholesky factorization, retried with growing diagonal shifts.
fn regularized_cholesky(m: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let s = sym(m);
    if let Some(c) = Cholesky::new(s.clone()) {
        return Some(c);
    }
    let scale = s.diagonal().amax().max(f64::MIN_POSITIVE);
    for delta in [1e-14, 1e-12, 1e-10] {
        let mut t = s.clone();
        for i in 0..t.nrows() {
            t[(i, i)] += delta * scale;
        }
        if let Some(c) = Cholesky::new(t) {
            return Some(c);
        }
    }
    None
}

pub fn solve(p: &SdpProblem) -> Result<SdpSolution> {
    solve_with(p, &SdpSettings::default())
}

pub fn solve_with(p: &SdpProblem, set: &SdpSettings) -> Result<SdpSolution> {
    p.check()?;
    let ws = Workspace::new(p);
    let m = p.constraints.len();
    let nf = p.num_free();
    let ntot: usize = p.block_sizes.iter().sum();
    let cu = DVector::from_vec(p.free_objective.clone());

    // Starting point scaled to the data.
    let mut a_norm = vec![0.0f64; m];
    for bt in &ws.blocks {
        for &(i, lid, c) in &bt.terms {
            a_norm[i] += c * c * p.basis[bt.ids[lid]].frob_sq();
        }
    }
    let a_norm: Vec<f64> = a_norm.iter().map(|v| v.sqrt()).collect();
    let mut x: Vec<DMatrix<f64>> = Vec::new();
    let mut z: Vec<DMatrix<f64>> = Vec::new();
    for (bi, &n) in p.block_sizes.iter().enumerate() {
        let nf64 = n as f64;
        let mut xi: f64 = 10f64.max(nf64.sqrt());
        let mut eta: f64 = 10f64.max(nf64.sqrt()).max(ws.c_dense[bi].norm());
        for &(i, _, _) in &ws.blocks[bi].terms {
            xi = xi.max(nf64 * (1.0 + ws.b[i].abs()) / (1.0 + a_norm[i]));
            eta = eta.max(a_norm[i]);
        }
        x.push(DMatrix::identity(n, n) * xi);
        z.push(DMatrix::identity(n, n) * eta);
    }
    let mut u = DVector::zeros(nf);
    let mut y = DVector::zeros(m);

    let b_norm = ws.b.norm();
    let c_norm = frob(&ws.c_dense) + cu.norm();
    let mut last = None;

    for iter in 0..set.max_iter {
        let ax = ws.apply_a(&x);
        let rp = &ws.b - &ax - &ws.bmat * &u;
        let aty = ws.apply_at(&y);
        let rd: Vec<DMatrix<f64>> = (0..x.len())
            .map(|k| &ws.c_dense[k] - &z[k] - &aty[k])
            .collect();
        let ru = &cu - ws.bmat.transpose() * &y;

        let pobj = inner(&ws.c_dense, &x) + cu.dot(&u);
        let dobj = ws.b.dot(&y);
        let xz = inner(&x, &z);
        let prim_res = rp.norm() / (1.0 + b_norm);
        let dual_res = (frob(&rd).powi(2) + ru.norm_squared()).sqrt() / (1.0 + c_norm);
        let rel_gap = (pobj - dobj).abs().max(xz.abs()) / (1.0 + pobj.abs() + dobj.abs());
        last = Some((prim_res, dual_res, rel_gap));
        if prim_res <= set.feas_tol && dual_res <= set.feas_tol && rel_gap <= set.gap_tol {
            return Ok(SdpSolution {
                x,
                u,
                y,
                z,
                primal_objective: pobj,
                dual_objective: dobj,
                iterations: iter,
                primal_residual: prim_res,
                dual_residual: dual_res,
                rel_gap,
            });
        }

        // Near the optimum the Newton system can become numerically singular;
        // an iterate within 100x of the tolerances is then accepted.
        let stalled = |iter: usize| -> Result<SdpSolution> {
            let loose = 100.0;
            if prim_res <= loose * set.feas_tol
                && dual_res <= loose * set.feas_tol
                && rel_gap <= loose * set.gap_tol
            {
                Ok(SdpSolution {
                    x: x.clone(),
                    u: u.clone(),
                    y: y.clone(),
                    z: z.clone(),
                    primal_objective: pobj,
                    dual_objective: dobj,
                    iterations: iter,
                    primal_residual: prim_res,
                    dual_residual: dual_res,
                    rel_gap,
                })
            } else {
                Err(Error::SolverFailure(format!(
                    "Newton system singular at iteration {iter} (primal residual {prim_res:.2e}, dual residual {dual_res:.2e}, gap {rel_gap:.2e})"
                )))
            }
        };
        let mu = xz / ntot as f64;
        let zinv: Vec<DMatrix<f64>> = z
            .iter()
            .map(|zb| chol(zb, "dual iterate").map(|c| c.inverse()))
            .collect::<Result<_>>()?;
        let schur = ws.schur(&x, &zinv);
        let schur_chol = match regularized_cholesky(&schur) {
            Some(c) => c,
            None => return stalled(iter),
        };
        let minv_b = schur_chol.solve(&ws.bmat);
        let btmb = ws.bmat.transpose() * &minv_b;
        let btmb_chol = if nf > 0 {
            match regularized_cholesky(&btmb) {
                Some(c) => Some(c),
                None => return stalled(iter),
            }
        } else {
            None
        };
        let x_rd_zinv: Vec<DMatrix<f64>> = (0..x.len()).map(|k| &x[k] * &rd[k] * &zinv[k]).collect();
        let a_xrdz = ws.apply_a(&x_rd_zinv);

        // Solves for a given T = target - X.
        // Solves the reduced system `M dy + B du = h`, `B^T dy = g`.
        let reduced = |h: &DVector<f64>, g: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
            let minv_h = schur_chol.solve(h);
            let du = match &btmb_chol {
                Some(c) => c.solve(&(ws.bmat.transpose() * &minv_h - g)),
                None => DVector::zeros(0),
            };
            let dy = &minv_h - &minv_b * &du;
            (dy, du)
        };
        let direction = |t: &[DMatrix<f64>]| -> (Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>, Vec<DMatrix<f64>>) {
            let h = &rp - ws.apply_a(t) + &a_xrdz;
            let (mut dy, mut du) = reduced(&h, &ru);
            let build = |dy: &DVector<f64>| {
                let atdy = ws.apply_at(dy);
                let dz: Vec<DMatrix<f64>> = (0..x.len()).map(|k| &rd[k] - &atdy[k]).collect();
                let dx: Vec<DMatrix<f64>> = (0..x.len())
                    .map(|k| &t[k] - sym(&(&x[k] * &dz[k] * &zinv[k])))
                    .collect();
                (dx, dz)
            };
            let (mut dx, mut dz) = build(&dy);
            // Iterative refinement against the unreduced primal equation.
            for _ in 0..2 {
                let e = &rp - ws.apply_a(&dx) - &ws.bmat * &du;
                if e.amax() <= 1e-3 * set.feas_tol * (1.0 + b_norm) {
                    break;
                }
                let eu = &ru - ws.bmat.transpose() * &dy;
                let (cy, cu) = reduced(&e, &eu);
                dy += cy;
                du += cu;
                (dx, dz) = build(&dy);
            }
            (dx, du, dy, dz)
        };

        // Predictor.
        let t_aff: Vec<DMatrix<f64>> = x.iter().map(|xb| -xb).collect();
        let (dxa, _, _, dza) = direction(&t_aff);
        let ap = step_length(&x, &dxa, 1.0)?;
        let ad = step_length(&z, &dza, 1.0)?;
        let x_aff: Vec<DMatrix<f64>> = (0..x.len()).map(|k| &x[k] + &dxa[k] * ap).collect();
        let z_aff: Vec<DMatrix<f64>> = (0..x.len()).map(|k| &z[k] + &dza[k] * ad).collect();
        let mu_aff = inner(&x_aff, &z_aff) / ntot as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector.
        let t_cc: Vec<DMatrix<f64>> = (0..x.len())
            .map(|k| &zinv[k] * (sigma * mu) - &x[k] - sym(&(&dxa[k] * &dza[k] * &zinv[k])))
            .collect();
        let (dx, du, dy, dz) = direction(&t_cc);
        let ap = step_length(&x, &dx, set.step_fraction)?;
        let ad = step_length(&z, &dz, set.step_fraction)?;
        for k in 0..x.len() {
            x[k] += &dx[k] * ap;
            z[k] += &dz[k] * ad;
            x[k] = sym(&x[k]);
            z[k] = sym(&z[k]);
        }
        u += du * ap;
        y += dy * ad;
    }
    let (pr, dr, g) = last.unwrap_or((f64::NAN, f64::NAN, f64::NAN));
    Err(Error::SolverFailure(format!(
        "no convergence in {} iterations (primal residual {pr:.2e}, dual residual {dr:.2e}, gap {g:.2e})",
        set.max_iter
    )))
}
