//! Independent reference implementations used by the integration tests.
//! Each one follows the textbook definition as directly as possible and
//! shares no code with the library beyond plain data types.

#![allow(dead_code)]

use fbcv_core::compare::{corr_at_lag, LagSearchParams};
use fbcv_core::{LandPairResult, Signal, LANDS};
use nalgebra::{DMatrix, DVector};

/// Two-pass Pearson correlation of `x[s]` with `y[s + k]` over complete pairs.
pub fn pearson_at_lag(x: &Signal, y: &Signal, k: i64) -> Option<(f64, usize)> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for s in 0..x.len() as i64 {
        let t = s + k;
        if t < 0 || t >= y.len() as i64 {
            continue;
        }
        if let (Some(u), Some(v)) = (x.get(s as usize), y.get(t as usize)) {
            a.push(u);
            b.push(v);
        }
    }
    let n = a.len() as f64;
    if a.len() < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (u, v) in a.iter().zip(&b) {
        sab += (u - ma) * (v - mb);
        saa += (u - ma) * (u - ma);
        sbb += (v - mb) * (v - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt(), a.len()))
}

/// Exhaustive lag search: evaluates every lag in the window and keeps the
/// largest correlation, preferring the smaller |lag| and then the negative lag
/// on exact ties.
pub fn exhaustive_ccf(x: &Signal, y: &Signal, params: &LagSearchParams) -> LandPairResult {
    let m = params.max_lag as i64;
    let mut best: Option<(f64, i64, usize)> = None;
    for k in -m..=m {
        let Ok(c) = corr_at_lag(x, y, k, params) else {
            continue;
        };
        let replace = match best {
            None => true,
            Some((v, bk, _)) => {
                c.value > v
                    || (c.value == v && (k.abs() < bk.abs() || (k.abs() == bk.abs() && k < bk)))
            }
        };
        if replace {
            best = Some((c.value, k, c.overlap));
        }
    }
    match best {
        Some((v, k, o)) => LandPairResult {
            ccf: Some(v),
            lag: k,
            overlap: o,
        },
        None => LandPairResult::INVALID,
    }
}

/// Local polynomial fit at `x0` by direct weighted least squares on the raw
/// design matrix `[1, x, x^2]`, solved with an SVD.
pub fn wls_loess_at(xs: &[f64], ys: &[f64], x0: f64, span: f64, degree: usize) -> f64 {
    let n = xs.len();
    let q = ((span * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let mut d: Vec<f64> = xs.iter().map(|x| (x - x0).abs()).collect();
    let mut sorted = d.clone();
    sorted.sort_by(f64::total_cmp);
    let h = sorted[q - 1];
    for v in &mut d {
        let u = *v / h;
        *v = if u < 1.0 {
            (1.0 - u * u * u).powi(3)
        } else {
            0.0
        };
    }
    let cols = degree + 1;
    let mut a = DMatrix::<f64>::zeros(n, cols);
    let mut b = DVector::<f64>::zeros(n);
    for i in 0..n {
        let w = d[i].sqrt();
        for c in 0..cols {
            a[(i, c)] = w * xs[i].powi(c as i32);
        }
        b[i] = w * ys[i];
    }
    let beta = a.svd(true, true).solve(&b, 1e-14).expect("svd solve");
    (0..cols).map(|c| beta[c] * x0.powi(c as i32)).sum()
}

/// Direct transcription of the bullet score: for each cyclic offset average
/// the diagonal entries `m[i][(i + p) % 6]`, pick the offset with the largest
/// average (first on ties), and subtract the average of the other 30 entries.
pub fn ccf_diff_direct(m: &[[f64; LANDS]; LANDS]) -> (usize, f64, f64, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for p in 0..LANDS {
        let avg = (0..LANDS).map(|i| m[i][(i + p) % LANDS]).sum::<f64>() / LANDS as f64;
        if avg > best.1 {
            best = (p, avg);
        }
    }
    let p = best.0;
    let mut out = 0.0;
    for i in 0..LANDS {
        for j in 0..LANDS {
            if j != (i + p) % LANDS {
                out += m[i][j];
            }
        }
    }
    let out = out / (LANDS * (LANDS - 1)) as f64;
    (p, best.1, out, best.1 - out)
}

/// Naive complete linkage: every step scans all pairs of active clusters and
/// recomputes their distance as the maximum over member pairs. Returns
/// `(left, right, height)` per step with cluster ids `K + step` for merges.
pub fn naive_complete_linkage(d: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let k = d.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..k).map(|i| (i, vec![i])).collect();
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in 0..clusters.len() {
                if a == b {
                    continue;
                }
                let (ma, mb) = (clusters[a].1[0], clusters[b].1[0]);
                if ma > mb {
                    continue;
                }
                let mut h = f64::NEG_INFINITY;
                for &i in &clusters[a].1 {
                    for &j in &clusters[b].1 {
                        h = h.max(d[i][j]);
                    }
                }
                let key = (ma, mb);
                if best.is_none_or(|(bh, bk, _, _)| h < bh || (h == bh && key < bk)) {
                    best = Some((h, key, a, b));
                }
            }
        }
        let (h, _, a, b) = best.unwrap();
        let (ida, idb) = (clusters[a].0, clusters[b].0);
        let mut members = clusters[a].1.clone();
        members.extend(&clusters[b].1);
        members.sort_unstable();
        let new_id = k + out.len();
        out.push((ida, idb, h));
        clusters.retain(|(id, _)| *id != ida && *id != idb);
        clusters.push((new_id, members));
    }
    out
}

/// True when every cluster of the dendrogram occupies a contiguous run of the order.
pub fn clusters_contiguous(dend: &fbcv_core::Dendrogram, order: &[usize]) -> bool {
    let k = dend.leaves.len();
    let pos: Vec<usize> = {
        let mut p = vec![0; k];
        for (i, &leaf) in order.iter().enumerate() {
            p[leaf] = i;
        }
        p
    };
    (0..dend.merges.len()).all(|s| {
        let members = dend.members(k + s);
        let lo = members.iter().map(|&m| pos[m]).min().unwrap();
        let hi = members.iter().map(|&m| pos[m]).max().unwrap();
        hi - lo + 1 == members.len()
    })
}
