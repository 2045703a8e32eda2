#![allow(dead_code)]

use nalgebra::DMatrix;

/// Plain-arithmetic model of a tower of ℓ_p sums.
#[derive(Debug, Clone)]
pub struct OracleSpace {
    pub leaves: Vec<usize>,
    pub leaf_p: Vec<f64>,
    pub comb_p: Vec<f64>,
}

fn lp(y: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        y.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    } else {
        y.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

fn conj(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

impl OracleSpace {
    pub fn flat(leaves: Vec<usize>, p: f64) -> Self {
        let k = leaves.len();
        OracleSpace {
            leaves,
            leaf_p: vec![p; k],
            comb_p: vec![p; k - 1],
        }
    }

    pub fn tower(leaves: Vec<usize>, comb_p: Vec<f64>) -> Self {
        let mut leaf_p = vec![comb_p[0]];
        leaf_p.extend(comb_p.iter().copied());
        OracleSpace {
            leaves,
            leaf_p,
            comb_p,
        }
    }

    pub fn dim(&self) -> usize {
        self.leaves.iter().sum()
    }

    pub fn level_dim(&self, m: usize) -> usize {
        self.leaves[..m].iter().sum()
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        let mut start = 0;
        let mut r = 0.0;
        for (k, &d) in self.leaves.iter().enumerate() {
            let s = lp(&x[start..start + d], self.leaf_p[k]);
            r = if k == 0 {
                s
            } else {
                lp(&[r, s], self.comb_p[k - 1])
            };
            start += d;
        }
        r
    }

    pub fn dual(&self) -> OracleSpace {
        OracleSpace {
            leaves: self.leaves.clone(),
            leaf_p: self.leaf_p.iter().map(|&p| conj(p)).collect(),
            comb_p: self.comb_p.iter().map(|&p| conj(p)).collect(),
        }
    }

    pub fn dual_norm(&self, f: &[f64]) -> f64 {
        self.dual().norm(f)
    }

    pub fn fd_gradient(&self, x: &[f64], h: f64) -> Vec<f64> {
        let mut y = x.to_vec();
        (0..x.len())
            .map(|i| {
                y[i] = x[i] + h;
                let up = self.norm(&y);
                y[i] = x[i] - h;
                let down = self.norm(&y);
                y[i] = x[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec(t: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (0..t.nrows())
        .map(|r| (0..t.ncols()).map(|c| t[(r, c)] * x[c]).sum())
        .collect()
}

/// Integer points `k` with `Σ|k_i| = total`.
fn l1_lattice(n: usize, total: i64, out: &mut Vec<Vec<i64>>, prefix: &mut Vec<i64>) {
    let used: i64 = prefix.iter().map(|v| v.abs()).sum();
    if prefix.len() + 1 == n {
        let rest = total - used;
        for v in if rest == 0 {
            vec![0]
        } else {
            vec![rest, -rest]
        } {
            prefix.push(v);
            out.push(prefix.clone());
            prefix.pop();
        }
        return;
    }
    for v in -(total - used)..=(total - used) {
        prefix.push(v);
        l1_lattice(n, total, out, prefix);
        prefix.pop();
    }
}

/// `sup |f(Tx)|` over a lattice on the ℓ_1 unit sphere, where `f_i = sgn x_i`
/// on the support of `x` and `f_i` ranges over `[-1, 1]` off it.
pub fn l1_grid_radius(t: &DMatrix<f64>, steps: i64) -> f64 {
    let n = t.nrows();
    let mut points = Vec::new();
    l1_lattice(n, steps, &mut points, &mut Vec::new());
    let mut best = 0.0_f64;
    for k in points {
        let x: Vec<f64> = k.iter().map(|&v| v as f64 / steps as f64).collect();
        let tx = matvec(t, &x);
        let on: f64 = x
            .iter()
            .zip(&tx)
            .filter(|(&xi, _)| xi != 0.0)
            .map(|(&xi, &yi)| xi.signum() * yi)
            .sum();
        let off: f64 = x
            .iter()
            .zip(&tx)
            .filter(|(&xi, _)| xi == 0.0)
            .map(|(_, &yi)| yi.abs())
            .sum();
        best = best.max((on + off).abs()).max((on - off).abs());
    }
    best
}

/// `max f(Tx)` over a lattice on the boundary of the ℓ_∞ unit cube; the
/// norming set of `x` is the hull of `sgn(x_i) e_i` over its peak coordinates.
pub fn linf_grid_radius(t: &DMatrix<f64>, steps: i64) -> f64 {
    let n = t.nrows();
    let mut best = 0.0_f64;
    let mut k = vec![-steps; n];
    loop {
        if k.iter().any(|v| v.abs() == steps) {
            let x: Vec<f64> = k.iter().map(|&v| v as f64 / steps as f64).collect();
            let tx = matvec(t, &x);
            for i in 0..n {
                if k[i].abs() == steps {
                    best = best.max(tx[i].abs());
                }
            }
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            k[i] += 1;
            if k[i] <= steps {
                break;
            }
            k[i] = -steps;
            i += 1;
        }
    }
}

pub fn max_col_sum(t: &DMatrix<f64>) -> f64 {
    (0..t.ncols())
        .map(|c| (0..t.nrows()).map(|r| t[(r, c)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_row_sum(t: &DMatrix<f64>) -> f64 {
    (0..t.nrows())
        .map(|r| (0..t.ncols()).map(|c| t[(r, c)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
