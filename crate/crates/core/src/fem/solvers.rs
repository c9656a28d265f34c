//! Krylov solvers, preconditioners and a banded direct solver.

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cg,
    Gmres,
    Minres,
    Direct,
}

#[derive(Clone, Debug, PartialEq, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precond {
    None,
    Jacobi,
    Ssor,
    Ilu0,
    /// User-supplied positive diagonal; the preconditioner divides by it.
    #[serde(skip)]
    Diagonal(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSolverConfig {
    pub method: Method,
    pub precond: Precond,
    pub rtol: f64,
    pub atol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl LinearSolverConfig {
    pub fn cg() -> Self {
        LinearSolverConfig { method: Method::Cg, precond: Precond::Ssor, ..Self::default() }
    }
    pub fn minres() -> Self {
        LinearSolverConfig { method: Method::Minres, precond: Precond::Jacobi, ..Self::default() }
    }
    pub fn direct() -> Self {
        LinearSolverConfig { method: Method::Direct, precond: Precond::None, ..Self::default() }
    }
    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }
}

impl Default for LinearSolverConfig {
    fn default() -> Self {
        LinearSolverConfig {
            method: Method::Gmres,
            precond: Precond::Ilu0,
            rtol: 1e-10,
            atol: 1e-300,
            max_iter: 2000,
            restart: 50,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ConvergenceRecord {
    pub iterations: usize,
    /// Final residual relative to `|b|`.
    pub residual: f64,
    pub converged: bool,
    pub breakdown: bool,
    pub history: Vec<f64>,
}

pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

struct Identity;
impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct Jacobi {
    inv: Vec<f64>,
}
impl Jacobi {
    pub fn new(a: &CsrMatrix) -> Self {
        Self::from_diagonal(&a.diagonal())
    }
    pub fn from_diagonal(d: &[f64]) -> Self {
        Jacobi { inv: d.iter().map(|&x| if x.abs() > 0.0 { 1.0 / x.abs() } else { 1.0 }).collect() }
    }
}
impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for i in 0..r.len() {
            z[i] = r[i] * self.inv[i];
        }
    }
}

/// Symmetric Gauss-Seidel (SSOR with unit relaxation).
pub struct Ssor<'a> {
    a: &'a CsrMatrix,
    diag: Vec<f64>,
}
impl<'a> Ssor<'a> {
    pub fn new(a: &'a CsrMatrix) -> Self {
        let diag = a.diagonal().into_iter().map(|d| if d != 0.0 { d } else { 1.0 }).collect();
        Ssor { a, diag }
    }
}
impl Preconditioner for Ssor<'_> {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let (c, v) = self.a.row(i);
            let mut s = r[i];
            for k in 0..c.len() {
                if c[k] < i {
                    s -= v[k] * y[c[k]];
                }
            }
            y[i] = s / self.diag[i];
        }
        for i in 0..n {
            y[i] *= self.diag[i];
        }
        for i in (0..n).rev() {
            let (c, v) = self.a.row(i);
            let mut s = y[i];
            for k in 0..c.len() {
                if c[k] > i {
                    s -= v[k] * z[c[k]];
                }
            }
            z[i] = s / self.diag[i];
        }
    }
}

/// Incomplete LU factorisation on the pattern of `A`.
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let mut lu = a.clone();
        let indptr = lu.indptr().to_vec();
        let indices = lu.indices().to_vec();
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in indptr[i]..indptr[i + 1] {
                if indices[k] == i {
                    diag_pos[i] = k;
                }
            }
            if diag_pos[i] == usize::MAX {
                return Err(Error::Solver(format!("ILU0: row {i} has no diagonal entry")));
            }
        }
        let scale = a.max_abs().max(1e-300);
        let mut pos = vec![usize::MAX; n];
        let vals = lu.values_mut();
        for i in 0..n {
            for k in indptr[i]..indptr[i + 1] {
                pos[indices[k]] = k;
            }
            for k in indptr[i]..indptr[i + 1] {
                let col = indices[k];
                if col >= i {
                    break;
                }
                let piv = vals[diag_pos[col]];
                vals[k] /= piv;
                let lik = vals[k];
                for kk in diag_pos[col] + 1..indptr[col + 1] {
                    let j = indices[kk];
                    if pos[j] != usize::MAX {
                        vals[pos[j]] -= lik * vals[kk];
                    }
                }
            }
            if vals[diag_pos[i]].abs() < 1e-14 * scale {
                vals[diag_pos[i]] = if vals[diag_pos[i]] < 0.0 { -1e-14 } else { 1e-14 } * scale;
            }
            for k in indptr[i]..indptr[i + 1] {
                pos[indices[k]] = usize::MAX;
            }
        }
        Ok(Ilu0 { lu, diag_pos })
    }
}

impl Preconditioner for Ilu0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        let (ip, ix, v) = (self.lu.indptr(), self.lu.indices(), self.lu.values());
        for i in 0..n {
            let mut s = r[i];
            for k in ip[i]..self.diag_pos[i] {
                s -= v[k] * z[ix[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in self.diag_pos[i] + 1..ip[i + 1] {
                s -= v[k] * z[ix[k]];
            }
            z[i] = s / v[self.diag_pos[i]];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    let ax = a.mul(x);
    b.iter().zip(ax).map(|(bi, ai)| bi - ai).collect()
}

fn check_finite(v: f64, what: &str, it: usize) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Solver(format!("{what}: non-finite residual at iteration {it}")))
    }
}

/// Solve `A x = b` starting from `x0` (zero if `None`).
pub fn solve(a: &CsrMatrix, b: &[f64], x0: Option<&[f64]>, cfg: &LinearSolverConfig) -> Result<(Vec<f64>, ConvergenceRecord)> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Dimension(format!("system {}x{} with rhs of length {}", n, a.ncols(), b.len())));
    }
    if b.iter().any(|x| !x.is_finite()) {
        return Err(Error::Solver("non-finite right-hand side".into()));
    }
    let x0 = x0.map_or_else(|| vec![0.0; n], |x| x.to_vec());
    if cfg.method == Method::Direct {
        let lu = BandedLu::factor(a)?;
        let x = lu.solve(b);
        let r = norm(&residual(a, b, &x)) / norm(b).max(1e-300);
        check_finite(r, "direct", 0)?;
        return Ok((x, ConvergenceRecord { iterations: 1, residual: r, converged: true, breakdown: false, history: vec![r] }));
    }
    let pre: Box<dyn Preconditioner + '_> = match &cfg.precond {
        Precond::None => Box::new(Identity),
        Precond::Jacobi => Box::new(Jacobi::new(a)),
        Precond::Ssor => Box::new(Ssor::new(a)),
        Precond::Ilu0 => Box::new(Ilu0::new(a)?),
        Precond::Diagonal(d) => Box::new(Jacobi::from_diagonal(d)),
    };
    match cfg.method {
        Method::Cg => cg(a, b, x0, pre.as_ref(), cfg),
        Method::Gmres => gmres(a, b, x0, pre.as_ref(), cfg),
        Method::Minres => minres(a, b, x0, pre.as_ref(), cfg),
        Method::Direct => unreachable!(),
    }
}

fn cg(a: &CsrMatrix, b: &[f64], mut x: Vec<f64>, m: &dyn Preconditioner, cfg: &LinearSolverConfig) -> Result<(Vec<f64>, ConvergenceRecord)> {
    let n = b.len();
    let bn = norm(b);
    let mut rec = ConvergenceRecord::default();
    if bn == 0.0 {
        rec.converged = true;
        return Ok((vec![0.0; n], rec));
    }
    let mut r = residual(a, b, &x);
    let mut z = vec![0.0; n];
    m.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..cfg.max_iter {
        let rel = norm(&r) / bn;
        check_finite(rel, "CG", it)?;
        rec.history.push(rel);
        rec.iterations = it;
        rec.residual = rel;
        if rel <= cfg.rtol || rel * bn <= cfg.atol {
            rec.converged = true;
            return Ok((x, rec));
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            rec.breakdown = true;
            return Ok((x, rec));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        m.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    rec.residual = norm(&residual(a, b, &x)) / bn;
    rec.converged = rec.residual <= cfg.rtol;
    rec.iterations = cfg.max_iter;
    Ok((x, rec))
}

fn gmres(a: &CsrMatrix, b: &[f64], mut x: Vec<f64>, m: &dyn Preconditioner, cfg: &LinearSolverConfig) -> Result<(Vec<f64>, ConvergenceRecord)> {
    let n = b.len();
    let bn = norm(b);
    let mut rec = ConvergenceRecord::default();
    if bn == 0.0 {
        rec.converged = true;
        return Ok((vec![0.0; n], rec));
    }
    let restart = cfg.restart.max(1);
    let mut total = 0;
    let mut tmp = vec![0.0; n];
    loop {
        let r = residual(a, b, &x);
        let beta = norm(&r);
        let rel = beta / bn;
        check_finite(rel, "GMRES", total)?;
        rec.residual = rel;
        rec.iterations = total;
        if rel <= cfg.rtol || beta <= cfg.atol {
            rec.converged = true;
            return Ok((x, rec));
        }
        if total >= cfg.max_iter {
            return Ok((x, rec));
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for j in 0..restart {
            m.apply(&v[j], &mut tmp);
            let mut w = a.mul(&tmp);
            for i in 0..=j {
                h[i][j] = dot(&w, &v[i]);
                for l in 0..n {
                    w[l] -= h[i][j] * v[i][l];
                }
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = h[j][j].hypot(h[j + 1][j]);
            if d == 0.0 {
                rec.breakdown = true;
                break;
            }
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            k_used = j + 1;
            total += 1;
            let rel = g[j + 1].abs() / bn;
            check_finite(rel, "GMRES", total)?;
            rec.history.push(rel);
            if rel <= cfg.rtol || total >= cfg.max_iter || hn <= 1e-300 {
                if hn <= 1e-300 {
                    rec.breakdown = rel > cfg.rtol;
                }
                break;
            }
            v.push(w.iter().map(|wi| wi / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for l in i + 1..k_used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        let mut u = vec![0.0; n];
        for (i, yi) in y.iter().enumerate() {
            for l in 0..n {
                u[l] += yi * v[i][l];
            }
        }
        m.apply(&u, &mut tmp);
        for l in 0..n {
            x[l] += tmp[l];
        }
        if rec.breakdown {
            rec.residual = norm(&residual(a, b, &x)) / bn;
            rec.converged = rec.residual <= cfg.rtol;
            rec.iterations = total;
            return Ok((x, rec));
        }
    }
}

fn minres(a: &CsrMatrix, b: &[f64], mut x: Vec<f64>, m: &dyn Preconditioner, cfg: &LinearSolverConfig) -> Result<(Vec<f64>, ConvergenceRecord)> {
    let n = b.len();
    let bn = norm(b);
    let mut rec = ConvergenceRecord::default();
    if bn == 0.0 {
        rec.converged = true;
        return Ok((vec![0.0; n], rec));
    }
    let mut total = 0;
    // restarts guard against loss of orthogonality hiding the true residual
    for _ in 0..10 {
        let r0 = residual(a, b, &x);
        let rel = norm(&r0) / bn;
        check_finite(rel, "MINRES", total)?;
        rec.residual = rel;
        rec.iterations = total;
        if rel <= cfg.rtol || rel * bn <= cfg.atol {
            rec.converged = true;
            return Ok((x, rec));
        }
        if total >= cfg.max_iter {
            return Ok((x, rec));
        }
        let mut y = vec![0.0; n];
        m.apply(&r0, &mut y);
        let beta1 = dot(&r0, &y);
        if beta1 < 0.0 {
            return Err(Error::Solver("MINRES: preconditioner is not positive definite".into()));
        }
        let beta1 = beta1.sqrt();
        let (mut r1, mut r2) = (r0.clone(), r0);
        let (mut oldb, mut beta, mut dbar, mut epsln, mut phibar) = (0.0, beta1, 0.0, 0.0, beta1);
        let (mut cs, mut sn) = (-1.0, 0.0);
        let mut w = vec![0.0; n];
        let mut w2 = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut dx = vec![0.0; n];
        // preconditioned residual norm relates to |r| only loosely; aim lower
        let target = cfg.rtol * 0.1;
        let mut local = 0;
        while total < cfg.max_iter {
            local += 1;
            total += 1;
            let s = 1.0 / beta;
            for i in 0..n {
                v[i] = s * y[i];
            }
            a.matvec(&v, &mut y);
            if local >= 2 {
                for i in 0..n {
                    y[i] -= (beta / oldb) * r1[i];
                }
            }
            let alfa = dot(&v, &y);
            for i in 0..n {
                y[i] -= (alfa / beta) * r2[i];
            }
            std::mem::swap(&mut r1, &mut r2);
            r2.copy_from_slice(&y);
            m.apply(&r2, &mut y);
            oldb = beta;
            let bb = dot(&r2, &y);
            if bb < 0.0 {
                return Err(Error::Solver("MINRES: preconditioner is not positive definite".into()));
            }
            beta = bb.sqrt();
            let oldeps = epsln;
            let delta = cs * dbar + sn * alfa;
            let gbar = sn * dbar - cs * alfa;
            epsln = sn * beta;
            dbar = -cs * beta;
            let gamma = gbar.hypot(beta).max(f64::EPSILON);
            cs = gbar / gamma;
            sn = beta / gamma;
            let phi = cs * phibar;
            phibar *= sn;
            for i in 0..n {
                let w1 = w2[i];
                w2[i] = w[i];
                w[i] = (v[i] - oldeps * w1 - delta * w2[i]) / gamma;
                dx[i] += phi * w[i];
            }
            let est = phibar / beta1 * rel;
            check_finite(est, "MINRES", total)?;
            rec.history.push(est);
            if est <= target || beta == 0.0 {
                break;
            }
        }
        for i in 0..n {
            x[i] += dx[i];
        }
    }
    rec.residual = norm(&residual(a, b, &x)) / bn;
    rec.converged = rec.residual <= cfg.rtol;
    rec.iterations = total;
    Ok((x, rec))
}

/// Reverse Cuthill-McKee ordering of the symmetrised pattern.
pub fn rcm_ordering(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let (c, _) = a.row(i);
        for &j in c {
            if j != i {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for l in adj.iter_mut() {
        l.sort_unstable();
        l.dedup();
    }
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| adj[i].len());
    for &start in &by_degree {
        if seen[start] {
            continue;
        }
        // pseudo-peripheral start: farthest node of a BFS from `start`
        let far = bfs_last(&adj, start, &seen);
        let mut queue = std::collections::VecDeque::from([far]);
        seen[far] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nb: Vec<usize> = adj[u].iter().copied().filter(|&w| !seen[w]).collect();
            nb.sort_by_key(|&w| adj[w].len());
            for w in nb {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_last(adj: &[Vec<usize>], start: usize, blocked: &[bool]) -> usize {
    let mut seen = blocked.to_vec();
    let mut queue = std::collections::VecDeque::from([start]);
    seen[start] = true;
    let mut last = start;
    while let Some(u) = queue.pop_front() {
        last = u;
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    last
}

/// LU factorisation with partial pivoting in band storage, after RCM reordering.
pub struct BandedLu {
    n: usize,
    kl: usize,
    width: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
    perm: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let perm = rcm_ordering(a);
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut kl = 0;
        let mut ku = 0;
        for i in 0..n {
            let (c, _) = a.row(i);
            for &j in c {
                let (pi, pj) = (inv[i], inv[j]);
                if pi > pj {
                    kl = kl.max(pi - pj);
                } else {
                    ku = ku.max(pj - pi);
                }
            }
        }
        // row i stores columns i - kl ..= i + kl + ku
        let width = 2 * kl + ku + 1;
        let mut ab = vec![0.0; n * width];
        for i in 0..n {
            let (c, v) = a.row(i);
            let pi = inv[i];
            for k in 0..c.len() {
                let pj = inv[c[k]];
                ab[pi * width + pj + kl - pi] += v[k];
            }
        }
        let mut lu = BandedLu { n, kl, width, ab, piv: vec![0; n], perm };
        lu.eliminate(ku)?;
        Ok(lu)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + j + self.kl - i
    }

    fn eliminate(&mut self, ku: usize) -> Result<()> {
        let (n, kl) = (self.n, self.kl);
        let scale = self.ab.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.ab[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.ab[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 1e-15 * scale) {
                return Err(Error::Solver(format!("direct solver: singular pivot at {k}")));
            }
            self.piv[k] = p;
            let last_col = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let (a, b) = (self.idx(k, j), self.idx(p, j));
                    self.ab.swap(a, b);
                }
            }
            let d = self.ab[self.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.ab[ik] / d;
                self.ab[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        let kj = self.ab[self.idx(k, j)];
                        let ij = self.idx(i, j);
                        self.ab[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl) = (self.n, self.kl);
        let ku = self.width - 2 * kl - 1;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for k in 0..n {
            y.swap(k, self.piv[k]);
            let last_row = (k + kl).min(n - 1);
            for i in k + 1..=last_row {
                y[i] -= self.ab[self.idx(i, k)] * y[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + kl + ku).min(n - 1);
            let mut s = y[k];
            for j in k + 1..=last_col {
                s -= self.ab[self.idx(k, j)] * y[j];
            }
            y[k] = s / self.ab[self.idx(k, k)];
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    fn nonsymmetric(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 4.0));
            if i > 0 {
                t.push((i, i - 1, -2.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -0.5));
            }
            if i + 7 < n {
                t.push((i, i + 7, 0.3));
            }
        }
        CsrMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn small_spd_system() {
        let a = CsrMatrix::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        for cfg in [LinearSolverConfig::cg(), LinearSolverConfig::default(), LinearSolverConfig::minres(), LinearSolverConfig::direct()] {
            let (x, rec) = solve(&a, &[5.0, 4.0], None, &cfg.with_rtol(1e-12)).unwrap();
            assert!(rec.converged);
            assert!((x[0] - 1.0).abs() < 1e-10 && (x[1] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn all_methods_agree_on_larger_systems() {
        let a = laplace_1d(200);
        let b: Vec<f64> = (0..200).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let (xd, _) = solve(&a, &b, None, &LinearSolverConfig::direct()).unwrap();
        for p in [Precond::None, Precond::Jacobi, Precond::Ssor] {
            let cfg = LinearSolverConfig { precond: p, ..LinearSolverConfig::cg() }.with_rtol(1e-12);
            let (x, rec) = solve(&a, &b, None, &cfg).unwrap();
            assert!(rec.converged);
            let err = x.iter().zip(&xd).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6, "{err}");
        }
        let (x, rec) = solve(&a, &b, None, &LinearSolverConfig::minres().with_rtol(1e-12)).unwrap();
        assert!(rec.converged, "{rec:?}");
        assert!(x.iter().zip(&xd).all(|(p, q)| (p - q).abs() < 1e-6));

        let a = nonsymmetric(300);
        let b: Vec<f64> = (0..300).map(|i| (i as f64).sin()).collect();
        let (xd, _) = solve(&a, &b, None, &LinearSolverConfig::direct()).unwrap();
        for p in [Precond::None, Precond::Jacobi, Precond::Ilu0] {
            let cfg = LinearSolverConfig { precond: p, restart: 10, ..Default::default() }.with_rtol(1e-12);
            let (x, rec) = solve(&a, &b, None, &cfg).unwrap();
            assert!(rec.converged);
            assert!(x.iter().zip(&xd).all(|(p, q)| (p - q).abs() < 1e-9));
        }
    }

    #[test]
    fn direct_solver_pivots() {
        let a = CsrMatrix::from_dense(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 2.0], vec![0.0, 2.0, 1.0]]);
        let x = BandedLu::factor(&a).unwrap().solve(&[1.0, 3.0, 3.0]);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14 && (x[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nan_rhs_is_reported() {
        let a = laplace_1d(3);
        assert!(solve(&a, &[f64::NAN, 0.0, 0.0], None, &LinearSolverConfig::cg()).is_err());
    }

    #[test]
    fn symmetric_indefinite_saddle() {
        // [[2, 0, 1], [0, 2, 1], [1, 1, 0]]
        let a = CsrMatrix::from_dense(&[vec![2.0, 0.0, 1.0], vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0]]);
        let cfg = LinearSolverConfig { precond: Precond::Diagonal(vec![2.0, 2.0, 1.0]), ..LinearSolverConfig::minres() }.with_rtol(1e-12);
        let (x, rec) = solve(&a, &[3.0, 1.0, 0.0], None, &cfg).unwrap();
        assert!(rec.converged);
        let r = residual(&a, &[3.0, 1.0, 0.0], &x);
        assert!(norm(&r) < 1e-10);
    }
}
