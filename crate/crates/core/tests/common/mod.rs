#![allow(dead_code)]

use tandem_core::model::transition_distribution;
use tandem_core::{QueueState, TandemParams};

/// Stationary law of the chain restricted to `{0..n}²`, with moves that would
/// leave the box turned into self-loops. Solves `π(I - P) = 0`, `π(0,0) = 1`
/// by banded Gaussian elimination, then normalizes. Independent of the product
/// form.
pub struct Grid {
    pub n: usize,
    pub pi: Vec<f64>,
}

impl Grid {
    pub fn solve(params: &TandemParams, n: usize) -> Self {
        let size = n * n;
        let idx = |s: QueueState| s.x1 as usize * n + s.x2 as usize;
        let inside = |s: QueueState| (s.x1 as usize) < n && (s.x2 as usize) < n;
        // row y of (I - P)ᵀ stored over columns y-n..=y+n
        let width = 2 * n + 1;
        let mut a = vec![0.0; size * width];
        let at = |row: usize, col: usize| row * width + (col + n - row);
        for x1 in 0..n {
            for x2 in 0..n {
                let from = QueueState::new(x1 as u32, x2 as u32);
                let x = idx(from);
                a[at(x, x)] += 1.0;
                for (to, p) in transition_distribution(params, from).iter() {
                    let y = if inside(to) { idx(to) } else { x };
                    a[at(y, x)] -= p;
                }
            }
        }
        let mut rhs = vec![0.0; size];
        for col in 0..=n.min(size - 1) {
            a[at(0, col)] = 0.0;
        }
        a[at(0, 0)] = 1.0;
        rhs[0] = 1.0;

        for k in 0..size {
            let pivot = a[at(k, k)];
            let last = (k + n).min(size - 1);
            for i in k + 1..=last {
                let f = a[at(i, k)] / pivot;
                if f == 0.0 {
                    continue;
                }
                for j in k..=last {
                    a[at(i, j)] -= f * a[at(k, j)];
                }
                rhs[i] -= f * rhs[k];
            }
        }
        let mut pi = vec![0.0; size];
        for k in (0..size).rev() {
            let last = (k + n).min(size - 1);
            let mut v = rhs[k];
            for j in k + 1..=last {
                v -= a[at(k, j)] * pi[j];
            }
            pi[k] = v / a[at(k, k)];
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|v| *v /= total);
        Self { n, pi }
    }

    pub fn at(&self, x1: u32, x2: u32) -> f64 {
        self.pi[x1 as usize * self.n + x2 as usize]
    }

    pub fn overflow(&self, gamma: u64) -> f64 {
        let mut sum = 0.0;
        for x1 in 0..self.n {
            for x2 in 0..self.n {
                if (x1 + x2) as u64 >= gamma {
                    sum += self.pi[x1 * self.n + x2];
                }
            }
        }
        sum
    }
}

pub fn table1() -> TandemParams {
    TandemParams::new(0.1, 0.46, 0.44).unwrap()
}

pub fn balanced_alt() -> TandemParams {
    TandemParams::new(7.0 / 23.0, 8.0 / 23.0, 8.0 / 23.0).unwrap()
}

pub fn swapped_alt() -> TandemParams {
    TandemParams::new(0.44, 0.46, 0.1).unwrap()
}

/// Mean and standard error by non-overlapping batch means.
pub fn batch_means(values: &[f64], batches: usize) -> (f64, f64) {
    let size = values.len() / batches;
    let means: Vec<f64> = values
        .chunks_exact(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    mean_and_se(&means)
}

/// Sample mean and its standard error for i.i.d. values.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
