//! Rank statistics and curve summaries.

use alloc::vec;
use alloc::vec::Vec;

/// Average ranks (1-based), ties share their mean rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub value: f64,
    /// Either series had zero variance (or fewer than two points); `value` is 0.
    pub degenerate: bool,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Correlation {
    let n = a.len().min(b.len());
    if n < 2 {
        return Correlation {
            value: 0.0,
            degenerate: true,
        };
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (da, db) = (a[i] - ma, b[i] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 1e-300 || sbb <= 1e-300 {
        return Correlation {
            value: 0.0,
            degenerate: true,
        };
    }
    Correlation {
        value: (sab / libm::sqrt(saa * sbb)).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

pub fn spearman(a: &[f64], b: &[f64]) -> Correlation {
    pearson(&ranks(a), &ranks(b))
}

/// Trapezoid area under `(x, y)` divided by the x-span, i.e. the mean
/// height of the curve. A single point returns its own height.
pub fn normalized_auc(points: &[(f64, f64)]) -> f64 {
    match points {
        [] => 0.0,
        [(_, y)] => *y,
        _ => {
            let area: f64 = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum();
            let span = points[points.len() - 1].0 - points[0].0;
            if span > 0.0 {
                area / span
            } else {
                points[0].1
            }
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    libm::sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64)
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
