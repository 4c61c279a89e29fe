//! Brute-force reference answers for small problems. Nothing here shares
//! code with the solvers under test.

use nalgebra::{DMatrix, DVector};

/// `min c.x` subject to `a_eq x = b_eq`, `a_le x <= b_le` and finite bounds.
#[derive(Debug, Clone, Default)]
pub struct DenseLp {
    pub c: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_le: Vec<Vec<f64>>,
    pub b_le: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DenseLp {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.c, x)
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        let scale = |row: &[f64], b: f64| tol * (1.0 + b.abs() + row.iter().map(|a| a.abs()).sum::<f64>());
        self.a_eq.iter().zip(&self.b_eq).all(|(r, &b)| (dot(r, x) - b).abs() <= scale(r, b))
            && self.a_le.iter().zip(&self.b_le).all(|(r, &b)| dot(r, x) - b <= scale(r, b))
            && x.iter().zip(&self.lower).all(|(v, l)| *v >= l - tol * (1.0 + l.abs()))
            && x.iter().zip(&self.upper).all(|(v, u)| *v <= u + tol * (1.0 + u.abs()))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn combinations(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Every basic feasible point: all equalities plus `n - n_eq` tight
/// inequalities or bounds, solved as a square system.
pub fn feasible_vertices(lp: &DenseLp, tol: f64) -> Vec<Vec<f64>> {
    let n = lp.n();
    let mut rows: Vec<(Vec<f64>, f64)> = lp.a_le.iter().cloned().zip(lp.b_le.iter().copied()).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), lp.upper[j]));
        rows.push((e, lp.lower[j]));
    }
    let neq = lp.a_eq.len();
    if neq > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    combinations(rows.len(), n - neq, &mut |sel| {
        let mut m = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for (r, row) in lp.a_eq.iter().enumerate() {
            for j in 0..n {
                m[(r, j)] = row[j];
            }
            b[r] = lp.b_eq[r];
        }
        for (k, &s) in sel.iter().enumerate() {
            for j in 0..n {
                m[(neq + k, j)] = rows[s].0[j];
            }
            b[neq + k] = rows[s].1;
        }
        let svd = m.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smax > 0.0) || smin < 1e-10 * smax {
            return;
        }
        if let Some(x) = m.lu().solve(&b) {
            let x: Vec<f64> = x.iter().copied().collect();
            if lp.is_feasible(&x, tol) {
                out.push(x);
            }
        }
    });
    out
}

/// Optimal objective and a minimiser, or `None` when infeasible.
pub fn vertex_optimum(lp: &DenseLp) -> Option<(f64, Vec<f64>)> {
    feasible_vertices(lp, 1e-9)
        .into_iter()
        .map(|x| (lp.objective(&x), x))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

/// `min c_b.y + c_x.x` over binary `y` (k of them) and continuous `x`,
/// subject to `a_y y + a_x x <= b` and bounds on `x`: every assignment of
/// `y` is tried and the continuous remainder solved by vertex enumeration.
pub fn binary_milp_optimum(
    c_bin: &[f64],
    c_cont: &[f64],
    a_bin: &[Vec<f64>],
    a_cont: &[Vec<f64>],
    b: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Option<(f64, Vec<f64>)> {
    let k = c_bin.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << k) {
        let y: Vec<f64> = (0..k).map(|j| ((mask >> j) & 1) as f64).collect();
        let rhs: Vec<f64> = b.iter().zip(a_bin).map(|(bi, row)| bi - dot(row, &y)).collect();
        let (val, x) = if c_cont.is_empty() {
            if rhs.iter().any(|&r| r < -1e-9) {
                continue;
            }
            (0.0, Vec::new())
        } else {
            let lp = DenseLp {
                c: c_cont.to_vec(),
                a_le: a_cont.to_vec(),
                b_le: rhs,
                lower: lower.to_vec(),
                upper: upper.to_vec(),
                ..Default::default()
            };
            match vertex_optimum(&lp) {
                Some(v) => v,
                None => continue,
            }
        };
        let total = dot(c_bin, &y) + val;
        if best.as_ref().map(|(b, _)| total < *b).unwrap_or(true) {
            best = Some((total, y.into_iter().chain(x).collect()));
        }
    }
    best
}

/// Singular values as square roots of the eigenvalues of the smaller Gram
/// matrix, descending.
pub fn gram_singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let g = if a.nrows() <= a.ncols() { a * a.transpose() } else { a.transpose() * a };
    let mut ev: Vec<f64> = g.symmetric_eigen().eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Sample Pearson correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// A small network for exhaustive bilevel search. Bus indices are 0-based
/// and bus 0 is the PTDF reference.
#[derive(Debug, Clone)]
pub struct BilevelFixture {
    pub base_mva: f64,
    pub loads: Vec<f64>,
    /// `(bus, cost, p_min, p_max)`
    pub gens: Vec<(usize, f64, f64, f64)>,
    /// `(from, to, x, limit)`
    pub branches: Vec<(usize, usize, f64, f64)>,
    pub attack_buses: Vec<usize>,
    pub tau: f64,
    pub target: usize,
    pub max_angle: f64,
}

#[derive(Debug, Clone)]
pub struct GridOptimum {
    pub flow: f64,
    pub c: Vec<f64>,
    pub points: usize,
    pub feasible: usize,
}

impl BilevelFixture {
    pub fn b_bus(&self) -> DMatrix<f64> {
        let p = self.loads.len();
        let mut b = DMatrix::zeros(p, p);
        for &(f, t, x, _) in &self.branches {
            b[(f, f)] += 1.0 / x;
            b[(t, t)] += 1.0 / x;
            b[(f, t)] -= 1.0 / x;
            b[(t, f)] -= 1.0 / x;
        }
        b
    }

    pub fn ptdf(&self) -> DMatrix<f64> {
        let p = self.loads.len();
        let b = self.b_bus();
        let inv = b.view((1, 1), (p - 1, p - 1)).into_owned().try_inverse().expect("connected network");
        let mut x = DMatrix::zeros(p, p);
        x.view_mut((1, 1), (p - 1, p - 1)).copy_from(&inv);
        DMatrix::from_fn(self.branches.len(), p, |l, k| {
            let (f, t, xl, _) = self.branches[l];
            (x[(f, k)] - x[(t, k)]) / xl
        })
    }

    fn flows(&self, ptdf: &DMatrix<f64>, p_g: &[f64], loads: &[f64]) -> Vec<f64> {
        let mut inj: Vec<f64> = loads.iter().map(|l| -l).collect();
        for (g, &(bus, ..)) in self.gens.iter().enumerate() {
            inj[bus] += p_g[g];
        }
        (0..ptdf.nrows()).map(|l| (0..inj.len()).map(|k| ptdf[(l, k)] * inj[k]).sum()).collect()
    }

    /// Largest physical `|flow|` on the target over every grid point of `c`
    /// (step `step` in `[-max_angle, max_angle]` per attack bus) whose false
    /// loads are admissible and whose dispatch exists. Ties among optimal
    /// dispatches are broken in the attacker's favour.
    pub fn grid_search(&self, step: f64) -> GridOptimum {
        let p = self.loads.len();
        let b = self.b_bus();
        let ptdf = self.ptdf();
        let ng = self.gens.len();
        let steps = (self.max_angle / step).round() as i64;
        let m = self.attack_buses.len();
        let mut idx = vec![-steps; m];
        let mut best = GridOptimum { flow: f64::NEG_INFINITY, c: vec![0.0; m], points: 0, feasible: 0 };
        let gen_rows: Vec<Vec<f64>> = (0..self.branches.len())
            .map(|l| self.gens.iter().map(|&(bus, ..)| ptdf[(l, bus)]).collect())
            .collect();
        loop {
            best.points += 1;
            let c: Vec<f64> = idx.iter().map(|&k| k as f64 * step).collect();
            let dl: Vec<f64> = (0..p)
                .map(|i| -self.base_mva * (0..m).map(|k| b[(i, self.attack_buses[k])] * c[k]).sum::<f64>())
                .collect();
            if dl.iter().zip(&self.loads).all(|(d, l)| d.abs() <= self.tau * l.abs() + 1e-9) {
                let false_loads: Vec<f64> = self.loads.iter().zip(&dl).map(|(l, d)| l + d).collect();
                let mut lp = DenseLp {
                    c: self.gens.iter().map(|g| g.1).collect(),
                    a_eq: vec![vec![1.0; ng]],
                    b_eq: vec![false_loads.iter().sum()],
                    lower: self.gens.iter().map(|g| g.2).collect(),
                    upper: self.gens.iter().map(|g| g.3).collect(),
                    ..Default::default()
                };
                for (l, row) in gen_rows.iter().enumerate() {
                    let load_flow: f64 = (0..p).map(|k| ptdf[(l, k)] * false_loads[k]).sum();
                    let lim = self.branches[l].3;
                    lp.a_le.push(row.clone());
                    lp.b_le.push(lim + load_flow);
                    lp.a_le.push(row.iter().map(|a| -a).collect());
                    lp.b_le.push(lim - load_flow);
                }
                let verts = feasible_vertices(&lp, 1e-9);
                if let Some(cost) = verts.iter().map(|x| lp.objective(x)).min_by(f64::total_cmp) {
                    best.feasible += 1;
                    for x in verts.iter().filter(|x| lp.objective(x) <= cost + 1e-7 * (1.0 + cost.abs())) {
                        let f = self.flows(&ptdf, x, &self.loads)[self.target].abs();
                        if f > best.flow {
                            best.flow = f;
                            best.c = c.clone();
                        }
                    }
                }
            }
            let mut k = 0;
            loop {
                if k == m {
                    return best;
                }
                idx[k] += 1;
                if idx[k] <= steps {
                    break;
                }
                idx[k] = -steps;
                k += 1;
            }
        }
    }
}

impl BilevelFixture {
    /// Four buses in a ring with a chord, cheap generation at bus 0 behind a
    /// 40 MW line and expensive generation at bus 3. The attacker shifts
    /// buses 1 and 2.
    pub fn four_bus() -> Self {
        BilevelFixture {
            base_mva: 100.0,
            loads: vec![10.0, 60.0, 50.0, 20.0],
            gens: vec![(0, 10.0, 0.0, 200.0), (3, 30.0, 0.0, 200.0)],
            branches: vec![
                (0, 1, 1.0, 40.0),
                (1, 2, 1.0, 999.0),
                (2, 3, 1.0, 999.0),
                (3, 0, 1.0, 999.0),
                (0, 2, 1.0, 999.0),
            ],
            attack_buses: vec![1, 2],
            tau: 0.5,
            target: 0,
            max_angle: 0.3,
        }
    }

    /// The fixture in the case text format (bus `k` has id `k + 1`; branch
    /// `l` has id `l + 1`; no resistance or charging).
    pub fn case_text(&self) -> String {
        let mut s = format!("base_mva {}\n[bus]\n", self.base_mva);
        for (k, l) in self.loads.iter().enumerate() {
            s += &format!("{} 138 {} 0\n", k + 1, l);
        }
        s += "[branch]\n";
        for (l, &(f, t, x, lim)) in self.branches.iter().enumerate() {
            s += &format!("{} {} {} 0 {} 0 {}\n", l + 1, f + 1, t + 1, x, lim);
        }
        s += "[gen]\n";
        for &(bus, cost, lo, hi) in &self.gens {
            s += &format!("{} {} {} {}\n", bus + 1, lo, hi, cost);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square() {
        let lp = DenseLp { c: vec![-1.0, -2.0], lower: vec![0.0; 2], upper: vec![1.0; 2], ..Default::default() };
        assert_eq!(feasible_vertices(&lp, 1e-9).len(), 4);
        let (v, x) = vertex_optimum(&lp).unwrap();
        assert_eq!(v, -3.0);
        assert_eq!(x, vec![1.0, 1.0]);
    }

    #[test]
    fn equality_restricts_to_an_edge() {
        let lp = DenseLp {
            c: vec![1.0, 3.0],
            a_eq: vec![vec![1.0, 1.0]],
            b_eq: vec![1.5],
            lower: vec![0.0; 2],
            upper: vec![1.0; 2],
            ..Default::default()
        };
        let (v, x) = vertex_optimum(&lp).unwrap();
        assert!((v - 2.5).abs() < 1e-12 && (x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn knapsack_by_enumeration() {
        let c = [-5.0, -4.0, -3.0];
        let a = vec![vec![2.0, 3.0, 1.0]];
        let (v, y) = binary_milp_optimum(&c, &[], &a, &[vec![]], &[5.0], &[], &[]).unwrap();
        assert_eq!(v, -9.0);
        assert_eq!(y, vec![1.0, 1.0, 0.0]);
    }
}
