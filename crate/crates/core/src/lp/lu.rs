//! Sparse LU factorization of simplex bases with product-form updates.
//!
//! Left-looking (Gilbert-Peierls) elimination with threshold partial
//! pivoting. Columns are processed in order of increasing nonzero count so
//! the many singleton columns of a typical basis pivot without fill. Among
//! numerically acceptable pivots the row with the fewest basis nonzeros wins.

/// Entries below this magnitude are dropped from factors and etas.
const DROP_TOL: f64 = 1e-14;
/// Relative threshold for acceptable pivots.
const PIVOT_THRESHOLD: f64 = 0.1;
/// Absolute magnitude under which a column is declared singular.
const SINGULAR_TOL: f64 = 1e-11;

/// Column of the basis matrix handed to [`factorize`].
pub(crate) type SparseColumn = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Factor {
    m: usize,
    /// step -> pivot row
    pivot_row: Vec<usize>,
    /// step -> basis position
    pivot_pos: Vec<usize>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    /// strictly upper part, indexed by earlier steps
    u_start: Vec<usize>,
    u_idx: Vec<usize>,
    u_val: Vec<f64>,
    u_diag: Vec<f64>,
    etas: Vec<Eta>,
    eta_nnz: usize,
    base_nnz: usize,
}

/// Basis positions that could not be pivoted, paired with rows left unpivoted.
#[derive(Debug, Clone)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

pub(crate) fn factorize(m: usize, columns: &[SparseColumn]) -> Result<Factor, Singular> {
    debug_assert_eq!(columns.len(), m);
    let mut row_count = vec![0usize; m];
    for col in columns {
        for &(i, _) in col {
            row_count[i] += 1;
        }
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&c| (columns[c].len(), c));

    let mut row_step = vec![usize::MAX; m];
    let mut f = Factor {
        m,
        pivot_row: Vec::with_capacity(m),
        pivot_pos: Vec::with_capacity(m),
        l_start: vec![0],
        l_idx: Vec::new(),
        l_val: Vec::new(),
        u_start: vec![0],
        u_idx: Vec::new(),
        u_val: Vec::new(),
        u_diag: Vec::with_capacity(m),
        etas: Vec::new(),
        eta_nnz: 0,
        base_nnz: 0,
    };

    let mut work = vec![0.0f64; m];
    let mut mark = vec![false; m];
    let mut nz_rows: Vec<usize> = Vec::new();
    let mut topo: Vec<usize> = Vec::new();
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let mut singular_pos = Vec::new();

    for &pos in &order {
        // symbolic: rows reachable from the column pattern through L
        nz_rows.clear();
        topo.clear();
        for &(i, _) in &columns[pos] {
            if mark[i] {
                continue;
            }
            mark[i] = true;
            nz_rows.push(i);
            stack.push((i, 0));
            while let Some(top) = stack.last_mut() {
                let (r, child) = *top;
                let step = row_step[r];
                if step == usize::MAX {
                    stack.pop();
                    continue;
                }
                let (s, e) = (f.l_start[step], f.l_start[step + 1]);
                if s + child < e {
                    top.1 += 1;
                    let next = f.l_idx[s + child];
                    if !mark[next] {
                        mark[next] = true;
                        nz_rows.push(next);
                        stack.push((next, 0));
                    }
                } else {
                    topo.push(r);
                    stack.pop();
                }
            }
        }
        // numeric: x = L^{-1} b
        for &(i, v) in &columns[pos] {
            work[i] = v;
        }
        for &r in topo.iter().rev() {
            let step = row_step[r];
            let v = work[r];
            if v == 0.0 {
                continue;
            }
            for k in f.l_start[step]..f.l_start[step + 1] {
                work[f.l_idx[k]] -= f.l_val[k] * v;
            }
        }
        // pivot selection among unpivoted rows
        let mut max_abs = 0.0f64;
        for &i in &nz_rows {
            if row_step[i] == usize::MAX {
                max_abs = max_abs.max(work[i].abs());
            }
        }
        let step = f.pivot_row.len();
        let mut pivot: Option<usize> = None;
        if max_abs > SINGULAR_TOL {
            let threshold = PIVOT_THRESHOLD * max_abs;
            for &i in &nz_rows {
                if row_step[i] != usize::MAX || work[i].abs() < threshold {
                    continue;
                }
                pivot = match pivot {
                    None => Some(i),
                    Some(p) => {
                        let better = (row_count[i], std::cmp::Reverse(ord_key(work[i])), i)
                            < (row_count[p], std::cmp::Reverse(ord_key(work[p])), p);
                        Some(if better { i } else { p })
                    }
                };
            }
        }
        match pivot {
            None => {
                singular_pos.push(pos);
            }
            Some(p) => {
                let piv = work[p];
                for &i in &nz_rows {
                    let s = row_step[i];
                    if s != usize::MAX {
                        if work[i].abs() > DROP_TOL {
                            f.u_idx.push(s);
                            f.u_val.push(work[i]);
                        }
                    } else if i != p && work[i].abs() > DROP_TOL {
                        f.l_idx.push(i);
                        f.l_val.push(work[i] / piv);
                    }
                }
                f.u_start.push(f.u_idx.len());
                f.l_start.push(f.l_idx.len());
                f.u_diag.push(piv);
                f.pivot_row.push(p);
                f.pivot_pos.push(pos);
                row_step[p] = step;
            }
        }
        for &i in &nz_rows {
            work[i] = 0.0;
            mark[i] = false;
        }
    }

    if !singular_pos.is_empty() {
        let rows = (0..m).filter(|&i| row_step[i] == usize::MAX).collect();
        return Err(Singular { positions: singular_pos, rows });
    }
    f.base_nnz = f.l_idx.len() + f.u_idx.len() + m;
    Ok(f)
}

fn ord_key(v: f64) -> u64 {
    v.abs().to_bits()
}

impl Factor {
    pub(crate) fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// True when the eta file has grown enough that refactoring pays off.
    pub(crate) fn wants_refactor(&self, interval: usize) -> bool {
        self.etas.len() >= interval || self.eta_nnz > 2 * self.base_nnz + 4 * self.m
    }

    /// Solve `B z = b`. `rhs` is in row space and is consumed; the result is
    /// indexed by basis position.
    pub(crate) fn ftran(&self, rhs: &mut [f64], out: &mut [f64]) {
        let m = self.m;
        for k in 0..m {
            let v = rhs[self.pivot_row[k]];
            if v == 0.0 {
                continue;
            }
            for q in self.l_start[k]..self.l_start[k + 1] {
                rhs[self.l_idx[q]] -= self.l_val[q] * v;
            }
        }
        // y in step order, reuse `out` as scratch for steps
        let mut y: Vec<f64> = (0..m).map(|k| rhs[self.pivot_row[k]]).collect();
        for k in (0..m).rev() {
            let z = y[k] / self.u_diag[k];
            y[k] = z;
            if z == 0.0 {
                continue;
            }
            for q in self.u_start[k]..self.u_start[k + 1] {
                y[self.u_idx[q]] -= self.u_val[q] * z;
            }
        }
        for k in 0..m {
            out[self.pivot_pos[k]] = y[k];
        }
        for eta in &self.etas {
            let zp = out[eta.pos] / eta.pivot;
            out[eta.pos] = zp;
            if zp == 0.0 {
                continue;
            }
            for &(i, a) in &eta.entries {
                out[i] -= a * zp;
            }
        }
    }

    /// Solve `B^T y = c`. `c` is indexed by basis position and is consumed;
    /// the result is in row space.
    pub(crate) fn btran(&self, c: &mut [f64], out: &mut [f64]) {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let mut s = 0.0;
            for &(i, a) in &eta.entries {
                s += a * c[i];
            }
            c[eta.pos] = (c[eta.pos] - s) / eta.pivot;
        }
        let mut s_step = vec![0.0f64; m];
        for k in 0..m {
            let mut v = c[self.pivot_pos[k]];
            for q in self.u_start[k]..self.u_start[k + 1] {
                v -= self.u_val[q] * s_step[self.u_idx[q]];
            }
            s_step[k] = v / self.u_diag[k];
        }
        for k in (0..m).rev() {
            let mut v = s_step[k];
            for q in self.l_start[k]..self.l_start[k + 1] {
                v -= self.l_val[q] * out[self.l_idx[q]];
            }
            out[self.pivot_row[k]] = v;
        }
    }

    /// Record the replacement of the column at `pos` by a column whose
    /// FTRAN image is `alpha`.
    pub(crate) fn update(&mut self, pos: usize, alpha: &[f64]) {
        let pivot = alpha[pos];
        let entries: Vec<(usize, f64)> = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a.abs() > DROP_TOL)
            .map(|(i, &a)| (i, a))
            .collect();
        self.eta_nnz += entries.len() + 1;
        self.etas.push(Eta { pos, pivot, entries });
    }
}
