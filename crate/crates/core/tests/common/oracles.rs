//! Brute-force reference implementations and randomized comparisons against
//! the library. Each `check_*` runs at least 100 instances and reports how
//! many it ran.

use nalgebra::{DMatrix, SymmetricEigen};
use sensorclf::data::{pearson_matrix, Channel, SensorFrame};
use sensorclf::pipeline::{
    slide, split_random, undersample, window_label, LabelPosition, Segment, SplitSpec, WindowSet,
};
use sensorclf::rng::SeededRng;
use sensorclf::train::{pca_fit, smooth, smooth_run_lengths, PredictionTrack};
use sensorclf::Tensor;

pub const INSTANCES: usize = 200;

fn bits(rng: &mut SeededRng, n: usize, p: f64) -> Vec<u8> {
    (0..n).map(|_| u8::from(rng.bernoulli(p))).collect()
}

/// Rows within `k` of any positive row, as maximal runs.
pub fn undersample_brute(labels: &[u8], classes: usize, k: usize) -> Vec<(usize, usize)> {
    let n = labels.len() / classes;
    let positive = |i: usize| labels[i * classes..(i + 1) * classes].iter().any(|&v| v > 0);
    let keep: Vec<bool> = (0..n)
        .map(|i| (i.saturating_sub(k)..=(i + k).min(n.saturating_sub(1))).any(positive))
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if keep[i] {
            let s = i;
            while i < n && keep[i] {
                i += 1;
            }
            out.push((s, i));
        } else {
            i += 1;
        }
    }
    out
}

pub fn check_undersample() -> Result<usize, String> {
    let mut rng = SeededRng::new(11);
    for case in 0..INSTANCES {
        let n = 1 + rng.index(60);
        let classes = 1 + rng.index(3);
        let k = rng.index(6);
        let p = 0.05 + 0.2 * rng.uniform();
        let labels = bits(&mut rng, n * classes, p);
        let got: Vec<(usize, usize)> = undersample(&labels, classes, k)
            .iter()
            .map(|s| (s.start, s.end))
            .collect();
        let want = undersample_brute(&labels, classes, k);
        if got != want {
            return Err(format!("case {case}: n={n} k={k} got {got:?}, want {want:?}"));
        }
    }
    Ok(INSTANCES)
}

pub fn slide_brute(start: usize, end: usize, length: usize, stride: usize) -> Vec<usize> {
    (start..end)
        .filter(|&s| (s - start).is_multiple_of(stride) && s + length <= end)
        .collect()
}

pub fn check_slide() -> Result<usize, String> {
    let mut rng = SeededRng::new(12);
    for case in 0..INSTANCES {
        let start = rng.index(20);
        let end = start + rng.index(30);
        let (length, stride) = (1 + rng.index(9), 1 + rng.index(4));
        let seg = Segment::new(start, end, sensorclf::pipeline::SegmentReason::FullFrame);
        let got = slide(&seg, length, stride);
        let want = slide_brute(start, end, length, stride);
        if got != want {
            return Err(format!(
                "case {case}: [{start},{end}) L={length} s={stride}: {got:?} vs {want:?}"
            ));
        }
    }
    Ok(INSTANCES)
}

pub fn window_label_brute(rows: &[u8], classes: usize, position: LabelPosition) -> Vec<u8> {
    let l = rows.len() / classes;
    (0..classes)
        .map(|c| {
            let col: Vec<u8> = (0..l).map(|t| rows[t * classes + c]).collect();
            match position {
                LabelPosition::First => col[0],
                LabelPosition::Last => col[l - 1],
                LabelPosition::Mean => {
                    let mean = col.iter().map(|&v| f64::from(v)).sum::<f64>() / l as f64;
                    u8::from(mean >= 0.5)
                }
            }
        })
        .collect()
}

pub fn check_window_label() -> Result<usize, String> {
    let mut rng = SeededRng::new(13);
    for case in 0..INSTANCES {
        let classes = 1 + rng.index(3);
        let l = 1 + rng.index(10);
        let p = rng.uniform();
        let rows = bits(&mut rng, l * classes, p);
        for pos in [LabelPosition::First, LabelPosition::Mean, LabelPosition::Last] {
            let got = window_label(&rows, classes, pos);
            let want = window_label_brute(&rows, classes, pos);
            if got != want {
                return Err(format!("case {case} {pos:?}: {rows:?} -> {got:?}, want {want:?}"));
            }
        }
    }
    Ok(INSTANCES)
}

/// Windows whose single value equals their index, one binary class.
pub fn indexed_windows(n: usize, rng: &mut SeededRng) -> WindowSet {
    WindowSet {
        x: Tensor::from_vec(&[n, 1, 1], (0..n).map(|i| i as f64).collect()).unwrap(),
        y: bits(rng, n, 0.5),
        channel_names: vec!["co2".into()],
        class_names: vec!["person".into()],
        start_timestamps: (0..n as i64).map(|i| 1000 + 120 * i).collect(),
        start_rows: (0..n).collect(),
        label_position: LabelPosition::First,
        scaler: None,
    }
}

pub fn check_split_random() -> Result<usize, String> {
    let mut rng = SeededRng::new(14);
    for case in 0..INSTANCES {
        let n = 10 + rng.index(90);
        let w = indexed_windows(n, &mut rng);
        let a = 0.4 + 0.3 * rng.uniform();
        let b = (1.0 - a) * (0.3 + 0.4 * rng.uniform());
        let spec = SplitSpec {
            ratios: [a, b, 1.0 - a - b],
            seed: rng.next_u64(),
            ..SplitSpec::default()
        };
        let Ok(parts) = split_random(&w, &spec) else {
            return Err(format!("case {case}: split failed for n={n} {:?}", spec.ratios));
        };
        // Reference: the documented shuffle, then a contiguous cut.
        let perm = SeededRng::new(spec.seed).permutation(n);
        let n_train = (n as f64 * a).round() as usize;
        let n_valid = (n as f64 * b).round() as usize;
        let want = [
            &perm[..n_train],
            &perm[n_train..n_train + n_valid],
            &perm[n_train + n_valid..],
        ];
        for (part, idx) in [&parts.0, &parts.1, &parts.2].into_iter().zip(want) {
            if part.start_rows != idx {
                return Err(format!("case {case}: rows {:?} vs {idx:?}", part.start_rows));
            }
            for (j, &i) in idx.iter().enumerate() {
                if part.x.data()[j] != i as f64
                    || part.y[j] != w.y[i]
                    || part.start_timestamps[j] != w.start_timestamps[i]
                {
                    return Err(format!("case {case}: window {i} carried wrongly"));
                }
            }
        }
        let mut all: Vec<usize> = [&parts.0, &parts.1, &parts.2]
            .iter()
            .flat_map(|p| p.start_rows.clone())
            .collect();
        all.sort_unstable();
        if all != (0..n).collect::<Vec<_>>() {
            return Err(format!("case {case}: parts are not a partition"));
        }
    }
    Ok(INSTANCES)
}

fn runs(v: &[u8]) -> Vec<(usize, usize, u8)> {
    let mut out: Vec<(usize, usize, u8)> = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        match out.last_mut() {
            Some(r) if r.2 == x => r.1 += 1,
            _ => out.push((i, 1, x)),
        }
    }
    out
}

/// Rescans from scratch after every flip: the shortest qualifying interior
/// run, leftmost among equals, takes its flanks' value.
pub fn smooth_brute(values: &[u8], w: usize) -> Vec<u8> {
    let mut v = values.to_vec();
    loop {
        let r = runs(&v);
        let candidate = (1..r.len().saturating_sub(1))
            .filter(|&i| r[i].1 < w && r[i - 1].2 == r[i + 1].2)
            .min_by_key(|&i| (r[i].1, r[i].0));
        match candidate {
            Some(i) => v[r[i].0..r[i].0 + r[i].1].fill(r[i - 1].2),
            None => return v,
        }
    }
}

pub fn check_smooth() -> Result<usize, String> {
    let mut rng = SeededRng::new(15);
    for case in 0..INSTANCES {
        let n = rng.index(50);
        let w = 1 + rng.index(6);
        let p = 0.2 + 0.6 * rng.uniform();
        let v = bits(&mut rng, n, p);
        let mut got = v.clone();
        smooth_run_lengths(&mut got, w);
        let want = smooth_brute(&v, w);
        if got != want {
            return Err(format!("case {case}: w={w} {v:?} -> {got:?}, want {want:?}"));
        }
        // Marker-separated tracks: each stretch on its own.
        let cut = rng.index(n + 1);
        let mut dec: Vec<Option<u8>> = v.iter().map(|&x| Some(x)).collect();
        if cut < n {
            dec[cut] = None;
        }
        let track = PredictionTrack {
            timestamps: (0..n as i64).collect(),
            class_names: vec!["person".into()],
            probabilities: vec![vec![Some(0.5); n]],
            decisions: vec![dec.clone()],
            threshold: 0.5,
            warnings: vec![],
        };
        let got = smooth(&track, w).map_err(|e| e.to_string())?.decisions.remove(0);
        let mut want: Vec<Option<u8>> = Vec::new();
        for (i, part) in dec.split(Option::is_none).enumerate() {
            if i > 0 {
                want.push(None);
            }
            let plain: Vec<u8> = part.iter().map(|x| x.unwrap()).collect();
            want.extend(smooth_brute(&plain, w).into_iter().map(Some));
        }
        if got != want {
            return Err(format!("case {case}: track {dec:?} -> {got:?}, want {want:?}"));
        }
    }
    Ok(INSTANCES)
}

pub fn pearson_brute(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn check_pearson_matrix() -> Result<usize, String> {
    let mut rng = SeededRng::new(16);
    for case in 0..INSTANCES {
        let n = 3 + rng.index(40);
        let d = 2 + rng.index(5);
        let base: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let cols: Vec<Vec<f64>> = (0..d)
            .map(|_| {
                let (mix, scale, shift) = (
                    rng.uniform_range(-1.0, 1.0),
                    rng.uniform_range(0.1, 100.0),
                    rng.normal() * 50.0,
                );
                base.iter().map(|b| shift + scale * (mix * b + rng.normal())).collect()
            })
            .collect();
        let names: Vec<String> = (0..d).map(|j| format!("v{j}")).collect();
        let frame = SensorFrame::new(
            "oracle",
            (0..n as i64).collect(),
            names
                .iter()
                .zip(&cols)
                .map(|(name, c)| Channel {
                    name: name.clone(),
                    values: c.clone(),
                })
                .collect(),
            vec![],
        )
        .unwrap();
        let m = pearson_matrix(&frame, &names).map_err(|e| e.to_string())?;
        for a in 0..d {
            for b in 0..d {
                let want = if a == b { 1.0 } else { pearson_brute(&cols[a], &cols[b]) };
                if (m.values[a][b] - want).abs() > 1e-9 {
                    return Err(format!("case {case}: r[{a}][{b}] = {} vs {want}", m.values[a][b]));
                }
            }
        }
    }
    Ok(INSTANCES)
}

/// Top-two eigenpairs of the N−1 covariance from a dense symmetric solver,
/// with the largest-magnitude entry of each vector made positive.
pub fn pca_reference(x: &[f64], n: usize, d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = DMatrix::from_row_slice(n, d, x);
    let mean = m.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| m[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order[..2].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order[..2]
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let lead = (0..d).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap();
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|e| *e = -*e);
            }
            v
        })
        .collect();
    (vals, vecs)
}

pub fn check_pca() -> Result<usize, String> {
    let mut rng = SeededRng::new(17);
    let mut checked = 0;
    for case in 0..INSTANCES {
        let n = 10 + rng.index(40);
        let d = 2 + rng.index(5);
        // Distinct per-dimension scales keep the top eigenvalues apart.
        let scales: Vec<f64> = (0..d)
            .map(|j| 2f64.powi((d - j) as i32) * rng.uniform_range(1.0, 1.2))
            .collect();
        let mixing: Vec<f64> = (0..d * d).map(|_| 0.2 * rng.normal()).collect();
        let mut x = Vec::with_capacity(n * d);
        for _ in 0..n {
            let z: Vec<f64> = scales.iter().map(|s| s * rng.normal()).collect();
            for a in 0..d {
                x.push(z[a] + (0..d).map(|b| mixing[a * d + b] * z[b]).sum::<f64>() + 3.0);
            }
        }
        let (vals, vecs) = pca_reference(&x, n, d);
        if vals[0] - vals[1] < 1e-3 * vals[0] {
            continue;
        }
        let model = pca_fit(&Tensor::from_vec(&[n, d], x.clone()).unwrap()).map_err(|e| e.to_string())?;
        for j in 0..2 {
            let rel = (model.eigenvalues[j] - vals[j]).abs() / vals[0];
            if rel > 1e-9 {
                return Err(format!(
                    "case {case}: eigenvalue {j}: {} vs {}",
                    model.eigenvalues[j], vals[j]
                ));
            }
            let dev = model.components[j]
                .iter()
                .zip(&vecs[j])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if dev > 1e-9 {
                return Err(format!("case {case}: component {j} off by {dev:.2e}"));
            }
        }
        checked += 1;
    }
    if checked < 100 {
        return Err(format!("only {checked} well-separated instances"));
    }
    Ok(checked)
}

/// Every oracle comparison, by name.
pub fn all() -> Vec<(&'static str, Result<usize, String>)> {
    vec![
        ("undersample", check_undersample()),
        ("slide", check_slide()),
        ("window_label", check_window_label()),
        ("split_random", check_split_random()),
        ("smooth", check_smooth()),
        ("pearson_matrix", check_pearson_matrix()),
        ("pca_fit", check_pca()),
    ]
}
