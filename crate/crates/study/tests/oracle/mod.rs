//! Brute-force reference implementations, kept independent of the library's
//! sort-based ranking and dynamic-programming null distribution.

#![allow(dead_code)]

/// Rank by counting: rank(x) = #{y < x} + (#{y == x} + 1) / 2.
pub fn count_rank(row: &[f64], x: f64) -> f64 {
    let less = row.iter().filter(|&&y| y < x).count() as f64;
    let equal = row.iter().filter(|&&y| y == x).count() as f64;
    less + (equal + 1.0) / 2.0
}

/// Friedman χ² with tie correction, from per-element tie counts.
pub fn friedman_chi2(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len() as f64;
    let k = rows[0].len() as f64;
    let mut sums = vec![0.0; rows[0].len()];
    let mut ties = 0.0;
    for row in rows {
        for (j, &x) in row.iter().enumerate() {
            sums[j] += count_rank(row, x);
            // every member of a tie group of size t contributes t² − 1; summed: t³ − t
            let c = row.iter().filter(|&&y| y == x).count() as f64;
            ties += c * c - 1.0;
        }
    }
    let ss: f64 = sums.iter().map(|r| r * r).sum();
    let raw = 12.0 / (n * k * (k + 1.0)) * ss - 3.0 * n * (k + 1.0);
    let c = 1.0 - ties / (n * k * (k * k - 1.0));
    if c <= 1e-12 {
        0.0
    } else {
        (raw / c).max(0.0)
    }
}

/// Exact two-sided Wilcoxon p by enumerating all 2ⁿ sign assignments of the
/// non-zero differences' average ranks.
pub fn wilcoxon_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if d.is_empty() {
        return 1.0;
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks: Vec<f64> = abs.iter().map(|&x| count_rank(&abs, x)).collect();
    let observed: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let n = d.len();
    let (mut le, mut ge) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| ranks[i])
            .sum();
        if w <= observed + 1e-9 {
            le += 1;
        }
        if w >= observed - 1e-9 {
            ge += 1;
        }
    }
    (2.0 * le.min(ge) as f64 / (1u64 << n) as f64).min(1.0)
}

/// α = k/(k−1) · (1 − Σσ²ᵢ/σ²ₜ), written out with explicit loops.
#[allow(clippy::needless_range_loop)]
pub fn cronbach_alpha(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let k = rows[0].len();
    let var = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let mut acc = 0.0;
        for x in xs {
            acc += (x - m) * (x - m);
        }
        acc / (xs.len() as f64 - 1.0)
    };
    let mut item_vars = 0.0;
    for j in 0..k {
        let col: Vec<f64> = (0..n).map(|i| rows[i][j]).collect();
        item_vars += var(&col);
    }
    let totals: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    (k as f64 / (k as f64 - 1.0)) * (1.0 - item_vars / var(&totals))
}

/// Small deterministic generator so oracle sweeps need no extra deps.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0 >> 11
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    pub fn likert(&mut self) -> f64 {
        (1 + self.below(7)) as f64
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| (0..cols).map(|_| self.likert()).collect())
            .collect()
    }
}
