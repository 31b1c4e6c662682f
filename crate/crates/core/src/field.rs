//! N-dimensional regular-grid scalar fields: storage, smoothing, gradients,
//! interpolation, exact Euclidean distance transform, connected components,
//! thresholding and scatter-point binning.
//!
//! Grids are row-major with the last axis contiguous. Continuous positions
//! use index coordinates: the center of cell `(i0, .., ik)` sits at exactly
//! those integer coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Regular-grid scalar array with per-axis spacing metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField<T> {
    dims: Vec<usize>,
    spacing: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    /// Constant-valued field with unit spacing.
    pub fn filled(dims: &[usize], value: T) -> Self {
        assert!(dims.len() >= 2, "fields need at least 2 axes");
        assert!(dims.iter().all(|&d| d > 0), "zero-extent axis");
        let len = dims.iter().product();
        ScalarField {
            dims: dims.to_vec(),
            spacing: vec![T::one(); dims.len()],
            values: vec![value; len],
        }
    }

    /// Wrap an existing row-major value buffer.
    pub fn from_values(dims: &[usize], values: Vec<T>) -> Self {
        assert!(dims.len() >= 2, "fields need at least 2 axes");
        assert_eq!(
            dims.iter().product::<usize>(),
            values.len(),
            "value count must match the grid"
        );
        ScalarField {
            dims: dims.to_vec(),
            spacing: vec![T::one(); dims.len()],
            values,
        }
    }

    pub fn with_spacing(mut self, spacing: &[T]) -> Self {
        assert_eq!(spacing.len(), self.dims.len());
        assert!(spacing.iter().all(|s| *s > T::zero()));
        self.spacing = spacing.to_vec();
        self
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn spacing(&self) -> &[T] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Row-major strides (last axis contiguous).
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.dims)
    }

    pub fn linear(&self, idx: &[usize]) -> usize {
        linear_index(&self.dims, idx)
    }

    pub fn at(&self, idx: &[usize]) -> T {
        self.values[self.linear(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let i = self.linear(idx);
        self.values[i] = v;
    }

    pub fn min_value(&self) -> T {
        self.values.iter().cloned().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().cloned().fold(T::neg_infinity(), T::max)
    }

    pub fn sum(&self) -> T {
        self.values.iter().cloned().sum()
    }

    /// True when every stored value is finite.
    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        ScalarField {
            dims: self.dims.clone(),
            spacing: self.spacing.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Boolean grid sharing the shape contract of [`ScalarField`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    dims: Vec<usize>,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: &[usize], fill: bool) -> Self {
        assert!(dims.len() >= 2, "masks need at least 2 axes");
        assert!(dims.iter().all(|&d| d > 0), "zero-extent axis");
        BinaryMask {
            dims: dims.to_vec(),
            bits: vec![fill; dims.iter().product()],
        }
    }

    pub fn from_bits(dims: &[usize], bits: Vec<bool>) -> Self {
        assert!(dims.len() >= 2, "masks need at least 2 axes");
        assert_eq!(dims.iter().product::<usize>(), bits.len());
        BinaryMask {
            dims: dims.to_vec(),
            bits,
        }
    }

    /// Mask from a per-cell predicate on a scalar field.
    pub fn from_field<T: Real>(field: &ScalarField<T>, pred: impl Fn(T) -> bool) -> Self {
        BinaryMask {
            dims: field.dims().to_vec(),
            bits: field.values().iter().map(|&v| pred(v)).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn linear(&self, idx: &[usize]) -> usize {
        linear_index(&self.dims, idx)
    }

    pub fn get(&self, idx: &[usize]) -> bool {
        self.bits[self.linear(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: bool) {
        let i = self.linear(idx);
        self.bits[i] = v;
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    /// Cell-wise negation.
    pub fn not(&self) -> Self {
        BinaryMask {
            dims: self.dims.clone(),
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Fill interior holes: background components not reachable from the
    /// grid border (face connectivity) become foreground.
    pub fn fill_holes(&self) -> Self {
        let dims = self.dims.clone();
        let strides = strides_of(&dims);
        let mut reach = vec![false; self.bits.len()];
        let mut stack = Vec::new();
        for (lin, &fg) in self.bits.iter().enumerate() {
            if fg || reach[lin] {
                continue;
            }
            if !on_border(&dims, &strides, lin) {
                continue;
            }
            reach[lin] = true;
            stack.push(lin);
            while let Some(cur) = stack.pop() {
                let coords = decompose(&dims, cur);
                for axis in 0..dims.len() {
                    for step in [-1isize, 1] {
                        let c = coords[axis] as isize + step;
                        if c < 0 || c as usize >= dims[axis] {
                            continue;
                        }
                        let nb = (cur as isize + step * strides[axis] as isize) as usize;
                        if !self.bits[nb] && !reach[nb] {
                            reach[nb] = true;
                            stack.push(nb);
                        }
                    }
                }
            }
        }
        let bits = self
            .bits
            .iter()
            .zip(&reach)
            .map(|(&fg, &r)| fg || !r)
            .collect();
        BinaryMask { dims, bits }
    }
}

/// Connected-component labels: 0 is background, regions are 1..=count.
#[derive(Debug, Clone)]
pub struct LabeledRegions {
    dims: Vec<usize>,
    labels: Vec<u32>,
    count: usize,
}

impl LabeledRegions {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Linear cell indices of one region.
    pub fn region_cells(&self, label: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// Mask of a single region.
    pub fn region_mask(&self, label: u32) -> BinaryMask {
        BinaryMask {
            dims: self.dims.clone(),
            bits: self.labels.iter().map(|&l| l == label).collect(),
        }
    }
}

pub(crate) fn strides_of(dims: &[usize]) -> Vec<usize> {
    let n = dims.len();
    let mut strides = vec![1usize; n];
    for axis in (0..n.saturating_sub(1)).rev() {
        strides[axis] = strides[axis + 1] * dims[axis + 1];
    }
    strides
}

pub(crate) fn linear_index(dims: &[usize], idx: &[usize]) -> usize {
    debug_assert_eq!(dims.len(), idx.len());
    let mut lin = 0;
    for (axis, &i) in idx.iter().enumerate() {
        debug_assert!(i < dims[axis]);
        lin = lin * dims[axis] + i;
    }
    lin
}

pub(crate) fn decompose(dims: &[usize], mut lin: usize) -> Vec<usize> {
    let mut idx = vec![0usize; dims.len()];
    for axis in (0..dims.len()).rev() {
        idx[axis] = lin % dims[axis];
        lin /= dims[axis];
    }
    idx
}

fn on_border(dims: &[usize], strides: &[usize], lin: usize) -> bool {
    let mut rem = lin;
    for axis in 0..dims.len() {
        let c = rem / strides[axis];
        rem %= strides[axis];
        if c == 0 || c == dims[axis] - 1 {
            return true;
        }
    }
    false
}

/// Offsets of the full (Moore) neighborhood: the 3^n - 1 surrounding cells.
pub(crate) fn full_neighborhood(n: usize) -> Vec<Vec<isize>> {
    let mut offsets = vec![vec![0isize; n]];
    for axis in 0..n {
        let mut next = Vec::with_capacity(offsets.len() * 3);
        for base in &offsets {
            for step in [-1isize, 0, 1] {
                let mut o = base.clone();
                o[axis] = step;
                next.push(o);
            }
        }
        offsets = next;
    }
    offsets.retain(|o| o.iter().any(|&s| s != 0));
    offsets
}

/// Visit every lane of `dims` along `axis`, yielding (start, stride, len).
fn for_each_lane(dims: &[usize], axis: usize, mut f: impl FnMut(usize, usize, usize)) {
    let strides = strides_of(dims);
    let len = dims[axis];
    let stride = strides[axis];
    let outer: usize = dims
        .iter()
        .enumerate()
        .filter(|&(a, _)| a != axis)
        .map(|(_, &d)| d)
        .product();
    for o in 0..outer {
        let mut rem = o;
        let mut start = 0usize;
        for a in (0..dims.len()).rev() {
            if a == axis {
                continue;
            }
            let c = rem % dims[a];
            rem /= dims[a];
            start += c * strides[a];
        }
        f(start, stride, len);
    }
}

/// Exact Euclidean distance (in cells) to the nearest true cell, by the
/// separable lower-envelope method on squared distances.
pub fn distance_transform<T: Real>(mask: &BinaryMask) -> Result<ScalarField<T>> {
    if !mask.any() {
        return Err(Error::EmptyMask);
    }
    let dims = mask.dims().to_vec();
    // Finite sentinel: larger than any realizable squared distance, so the
    // envelope arithmetic never sees infinities.
    let far: f64 = dims.iter().map(|&d| ((d - 1) as f64).powi(2)).sum::<f64>() + 1.0;
    let mut d2: Vec<f64> = mask
        .bits()
        .iter()
        .map(|&b| if b { 0.0 } else { far })
        .collect();

    let n = dims.len();
    let max_len = dims.iter().copied().max().unwrap();
    let mut line = vec![0.0f64; max_len];
    let mut out = vec![0.0f64; max_len];
    let mut v = vec![0usize; max_len];
    let mut z = vec![0.0f64; max_len + 1];

    for axis in 0..n {
        for_each_lane(&dims, axis, |start, stride, len| {
            for i in 0..len {
                line[i] = d2[start + i * stride];
            }
            dt_1d(&line[..len], &mut out[..len], &mut v, &mut z);
            for i in 0..len {
                d2[start + i * stride] = out[i];
            }
        });
    }

    let values = d2
        .iter()
        .map(|&s| T::from_f64(s.sqrt()).unwrap())
        .collect();
    Ok(ScalarField {
        dims,
        spacing: vec![T::one(); n],
        values,
    })
}

/// One-dimensional squared-distance transform (lower envelope of parabolas).
fn dt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 1 {
        out[0] = f[0];
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            if s <= z[k] {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        out[q] = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Separable Gaussian smoothing, kernel truncated at ±4σ, edges replicated.
pub fn gaussian_smooth<T: Real>(f: &ScalarField<T>, sigma: T) -> Result<ScalarField<T>> {
    if sigma < T::zero() {
        return Err(Error::InvalidParameter("negative smoothing sigma".into()));
    }
    if sigma == T::zero() {
        return Ok(f.clone());
    }
    let sig = sigma.to_f64().unwrap();
    let half = (4.0 * sig).ceil() as usize;
    let mut kernel = Vec::with_capacity(2 * half + 1);
    for i in -(half as isize)..=(half as isize) {
        let x = i as f64;
        kernel.push((-x * x / (2.0 * sig * sig)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<T> = kernel
        .iter()
        .map(|&w| T::from_f64(w / norm).unwrap())
        .collect();

    let dims = f.dims().to_vec();
    let mut cur = f.values().to_vec();
    let max_len = dims.iter().copied().max().unwrap();
    let mut line = vec![T::zero(); max_len];
    for axis in 0..dims.len() {
        let mut next = cur.clone();
        for_each_lane(&dims, axis, |start, stride, len| {
            for i in 0..len {
                line[i] = cur[start + i * stride];
            }
            for i in 0..len {
                let mut acc = T::zero();
                for (j, &w) in kernel.iter().enumerate() {
                    let p = i as isize + j as isize - half as isize;
                    let p = p.clamp(0, len as isize - 1) as usize;
                    acc += w * line[p];
                }
                next[start + i * stride] = acc;
            }
        });
        cur = next;
    }
    Ok(ScalarField {
        dims,
        spacing: f.spacing().to_vec(),
        values: cur,
    })
}

/// Per-axis first derivative: central differences inside, one-sided at the
/// edges, scaled by 1/spacing.
pub fn gradient<T: Real>(f: &ScalarField<T>) -> Vec<ScalarField<T>> {
    let dims = f.dims().to_vec();
    assert!(dims.iter().all(|&d| d >= 2), "gradient needs extent >= 2");
    let vals = f.values();
    let mut out = Vec::with_capacity(dims.len());
    for axis in 0..dims.len() {
        let inv = T::one() / f.spacing()[axis];
        let half_inv = inv / real::<T>(2.0);
        let mut g = vec![T::zero(); vals.len()];
        for_each_lane(&dims, axis, |start, stride, len| {
            g[start] = (vals[start + stride] - vals[start]) * inv;
            for i in 1..len - 1 {
                let lo = vals[start + (i - 1) * stride];
                let hi = vals[start + (i + 1) * stride];
                g[start + i * stride] = (hi - lo) * half_inv;
            }
            g[start + (len - 1) * stride] =
                (vals[start + (len - 1) * stride] - vals[start + (len - 2) * stride]) * inv;
        });
        out.push(ScalarField {
            dims: dims.clone(),
            spacing: f.spacing().to_vec(),
            values: g,
        });
    }
    out
}

/// Multilinear interpolation over the 2^n surrounding cells. Positions are
/// index coordinates; out-of-grid positions clamp to the boundary cell.
pub fn interpolate<T: Real>(f: &ScalarField<T>, pos: &[T]) -> T {
    let dims = f.dims();
    let n = dims.len();
    debug_assert_eq!(pos.len(), n);
    let mut base = vec![0usize; n];
    let mut frac = vec![T::zero(); n];
    for axis in 0..n {
        let top = real::<T>((dims[axis] - 1) as f64);
        let x = pos[axis].max(T::zero()).min(top);
        let mut i = x.floor();
        if i >= top {
            i = top - T::one();
            if dims[axis] == 1 {
                i = T::zero();
            }
        }
        let i = if dims[axis] == 1 {
            0
        } else {
            i.to_usize().unwrap().min(dims[axis] - 2)
        };
        base[axis] = i;
        frac[axis] = x - real::<T>(i as f64);
    }
    let strides = strides_of(dims);
    let base_lin: usize = base
        .iter()
        .zip(&strides)
        .map(|(&b, &s)| b * s)
        .sum();
    let mut acc = T::zero();
    for corner in 0..(1usize << n) {
        let mut w = T::one();
        let mut off = 0usize;
        for axis in 0..n {
            if corner >> axis & 1 == 1 {
                w = w * frac[axis];
                off += strides[axis];
            } else {
                w = w * (T::one() - frac[axis]);
            }
        }
        if w != T::zero() {
            acc += w * f.values()[base_lin + off];
        }
    }
    acc
}

/// Histogram of scatter points on a regular grid.
pub struct Binned<T> {
    pub counts: ScalarField<T>,
    /// Points outside the range, dropped from the histogram.
    pub dropped: usize,
}

/// Count points per cell. Points on the upper range edge land in the last
/// bin; points outside the range are dropped and reported.
pub fn bin_points<T: Real>(
    points: &[Vec<T>],
    bins_per_axis: &[usize],
    range: &[(T, T)],
) -> Result<Binned<T>> {
    let n = bins_per_axis.len();
    if n != range.len() {
        return Err(Error::ShapeMismatch(
            "bins_per_axis and range length differ".into(),
        ));
    }
    if bins_per_axis.iter().any(|&b| b == 0) {
        return Err(Error::InvalidParameter("zero bins on an axis".into()));
    }
    for &(lo, hi) in range {
        if !(hi > lo) {
            return Err(Error::InvalidParameter("inverted bin range".into()));
        }
    }
    let mut counts = ScalarField::filled(bins_per_axis, T::zero());
    let strides = counts.strides();
    let mut dropped = 0usize;
    'point: for p in points {
        if p.len() != n {
            return Err(Error::ShapeMismatch("point dimension mismatch".into()));
        }
        let mut lin = 0usize;
        for axis in 0..n {
            let (lo, hi) = range[axis];
            let x = p[axis];
            if x < lo || x > hi {
                dropped += 1;
                continue 'point;
            }
            let b = real::<T>(bins_per_axis[axis] as f64);
            let mut i = ((x - lo) / (hi - lo) * b).floor().to_isize().unwrap();
            if i >= bins_per_axis[axis] as isize {
                i = bins_per_axis[axis] as isize - 1; // upper edge
            }
            lin += i as usize * strides[axis];
        }
        counts.values_mut()[lin] += T::one();
    }
    Ok(Binned { counts, dropped })
}

/// Label connected true regions under the full (3^n - 1) neighborhood.
pub fn connected_components(mask: &BinaryMask) -> LabeledRegions {
    let dims = mask.dims().to_vec();
    let n = dims.len();
    let offsets = full_neighborhood(n);
    let mut labels = vec![0u32; mask.len()];
    let mut count = 0u32;
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask.bits()[start] || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count;
        stack.push(start);
        while let Some(cur) = stack.pop() {
            let coords = decompose(&dims, cur);
            'nb: for off in &offsets {
                let mut idx = vec![0usize; n];
                for axis in 0..n {
                    let c = coords[axis] as isize + off[axis];
                    if c < 0 || c as usize >= dims[axis] {
                        continue 'nb;
                    }
                    idx[axis] = c as usize;
                }
                let lin = linear_index(&dims, &idx);
                if mask.bits()[lin] && labels[lin] == 0 {
                    labels[lin] = count;
                    stack.push(lin);
                }
            }
        }
    }
    LabeledRegions {
        dims,
        labels,
        count: count as usize,
    }
}

/// Otsu threshold computed on the 256-bin histogram of log(1 + intensity).
pub fn log_otsu_threshold<T: Real>(image: &ScalarField<T>) -> Result<BinaryMask> {
    if image.values().iter().any(|&v| v < T::zero()) {
        return Err(Error::InvalidParameter(
            "negative intensity in threshold input".into(),
        ));
    }
    const BINS: usize = 256;
    let logs: Vec<f64> = image
        .values()
        .iter()
        .map(|&v| v.to_f64().unwrap().ln_1p())
        .collect();
    let lmin = logs.iter().cloned().fold(f64::INFINITY, f64::min);
    let lmax = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lmax > lmin) {
        return Err(Error::NoThreshold);
    }
    let bin_of = |l: f64| -> usize {
        let b = ((l - lmin) / (lmax - lmin) * BINS as f64) as usize;
        b.min(BINS - 1)
    };
    let mut hist = [0u64; BINS];
    for &l in &logs {
        hist[bin_of(l)] += 1;
    }
    let total: u64 = logs.len() as u64;
    let mut cum_w = 0.0f64;
    let mut cum_mu = 0.0f64;
    let global_mu: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &h)| i as f64 * h as f64)
        .sum::<f64>()
        / total as f64;
    let mut best = f64::NEG_INFINITY;
    let mut best_k = None;
    for k in 0..BINS - 1 {
        cum_w += hist[k] as f64 / total as f64;
        cum_mu += k as f64 * hist[k] as f64 / total as f64;
        if cum_w <= 0.0 || cum_w >= 1.0 {
            continue;
        }
        let mu0 = cum_mu / cum_w;
        let mu1 = (global_mu - cum_mu) / (1.0 - cum_w);
        let var = cum_w * (1.0 - cum_w) * (mu0 - mu1) * (mu0 - mu1);
        if var > best {
            best = var;
            best_k = Some(k);
        }
    }
    let k = best_k.ok_or(Error::NoThreshold)?;
    let bits = logs.iter().map(|&l| bin_of(l) > k).collect();
    Ok(BinaryMask::from_bits(image.dims(), bits))
}

/// Sum over scales of σ²-normalized negated Laplacian-of-Gaussian responses;
/// bright blobs give positive response.
pub fn multiscale_log_filter<T: Real>(
    image: &ScalarField<T>,
    sigmas: &[T],
) -> Result<ScalarField<T>> {
    if sigmas.is_empty() {
        return Err(Error::InvalidParameter("mLoG needs at least one scale".into()));
    }
    if sigmas.iter().any(|&s| s <= T::zero()) {
        return Err(Error::InvalidParameter("mLoG scale must be positive".into()));
    }
    let dims = image.dims().to_vec();
    let mut response = ScalarField::filled(&dims, T::zero());
    for &sigma in sigmas {
        let smoothed = gaussian_smooth(image, sigma)?;
        let lap = laplacian(&smoothed);
        let s2 = sigma * sigma;
        for (r, &l) in response.values_mut().iter_mut().zip(lap.values()) {
            *r = *r - s2 * l;
        }
    }
    Ok(response)
}

/// Second-difference Laplacian with replicated edges.
fn laplacian<T: Real>(f: &ScalarField<T>) -> ScalarField<T> {
    let dims = f.dims().to_vec();
    let vals = f.values();
    let mut out = vec![T::zero(); vals.len()];
    for axis in 0..dims.len() {
        let inv2 = T::one() / (f.spacing()[axis] * f.spacing()[axis]);
        for_each_lane(&dims, axis, |start, stride, len| {
            for i in 0..len {
                let lo = if i == 0 { 0 } else { i - 1 };
                let hi = if i + 1 >= len { len - 1 } else { i + 1 };
                let d2 = vals[start + lo * stride] - real::<T>(2.0) * vals[start + i * stride]
                    + vals[start + hi * stride];
                out[start + i * stride] += d2 * inv2;
            }
        });
    }
    ScalarField {
        dims,
        spacing: f.spacing().to_vec(),
        values: out,
    }
}

/// Local maxima of a field restricted to a mask: cells with no strictly
/// greater in-grid neighbor, with adjacent qualifying cells (equal-valued
/// plateaus) merged to their centroid.
pub fn local_maxima<T: Real>(f: &ScalarField<T>, mask: &BinaryMask) -> Vec<Vec<T>> {
    assert_eq!(f.dims(), mask.dims());
    let dims = f.dims().to_vec();
    let n = dims.len();
    let offsets = full_neighborhood(n);
    let vals = f.values();
    let mut candidate = vec![false; vals.len()];
    for lin in 0..vals.len() {
        if !mask.bits()[lin] {
            continue;
        }
        let coords = decompose(&dims, lin);
        let mut is_max = true;
        'nb: for off in &offsets {
            let mut idx = vec![0usize; n];
            for axis in 0..n {
                let c = coords[axis] as isize + off[axis];
                if c < 0 || c as usize >= dims[axis] {
                    continue 'nb;
                }
                idx[axis] = c as usize;
            }
            if vals[linear_index(&dims, &idx)] > vals[lin] {
                is_max = false;
                break;
            }
        }
        candidate[lin] = is_max;
    }
    // Adjacent candidates are necessarily equal-valued; merge them.
    let cand_mask = BinaryMask::from_bits(&dims, candidate);
    let regions = connected_components(&cand_mask);
    let mut centroids = Vec::new();
    for label in 1..=regions.count() as u32 {
        let cells = regions.region_cells(label);
        let mut c = vec![T::zero(); n];
        for &lin in &cells {
            for (axis, v) in decompose(&dims, lin).iter().enumerate() {
                c[axis] += real::<T>(*v as f64);
            }
        }
        let m = real::<T>(cells.len() as f64);
        for v in &mut c {
            *v = *v / m;
        }
        centroids.push(c);
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_2d(rows: &[&[u8]]) -> BinaryMask {
        let dims = [rows.len(), rows[0].len()];
        let bits = rows
            .iter()
            .flat_map(|r| r.iter().map(|&v| v != 0))
            .collect();
        BinaryMask::from_bits(&dims, bits)
    }

    #[test]
    fn distance_transform_collinear() {
        let mask = mask_2d(&[&[1, 0, 0]]);
        let dt: ScalarField<f64> = distance_transform(&mask).unwrap();
        assert_eq!(dt.values(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn distance_transform_all_true_is_zero() {
        let mask = BinaryMask::new(&[4, 5], true);
        let dt: ScalarField<f64> = distance_transform(&mask).unwrap();
        assert!(dt.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn distance_transform_empty_mask_errors() {
        let mask = BinaryMask::new(&[4, 4], false);
        assert!(matches!(
            distance_transform::<f64>(&mask),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn smooth_sigma_zero_is_identity() {
        let f = ScalarField::from_values(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g = gaussian_smooth(&f, 0.0).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn smooth_preserves_constant() {
        let f = ScalarField::filled(&[8, 8], 3.25f64);
        let g = gaussian_smooth(&f, 2.0).unwrap();
        for &v in g.values() {
            assert!((v - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn smooth_negative_sigma_errors() {
        let f = ScalarField::filled(&[4, 4], 0.0f64);
        assert!(gaussian_smooth(&f, -1.0).is_err());
    }

    #[test]
    fn impulse_center_matches_kernel_weight() {
        // Direct kernel-sum oracle: the center of a smoothed unit impulse is
        // the squared 1-D weight (separable kernel at offset 0 in x and y).
        let mut f = ScalarField::filled(&[33, 33], 0.0f64);
        f.set(&[16, 16], 1.0);
        let g = gaussian_smooth(&f, 1.0).unwrap();
        let half = 4usize;
        let mut k = Vec::new();
        for i in -(half as isize)..=(half as isize) {
            k.push((-(i * i) as f64 / 2.0).exp());
        }
        let norm: f64 = k.iter().sum();
        let w0 = k[half] / norm;
        assert!((g.at(&[16, 16]) - w0 * w0).abs() < 1e-12);
        // Kernel normalization keeps the field sum.
        assert!((g.sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gradient_of_linear_field() {
        let mut f = ScalarField::filled(&[6, 5], 0.0f64);
        for i in 0..6 {
            for j in 0..5 {
                f.set(&[i, j], i as f64);
            }
        }
        let g = gradient(&f);
        for i in 0..6 {
            for j in 0..5 {
                assert!((g[0].at(&[i, j]) - 1.0).abs() < 1e-12);
                assert!(g[1].at(&[i, j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_of_quadratic_is_exact_interior() {
        // Central difference of x^2 at x=k is ((k+1)^2-(k-1)^2)/2 = 2k.
        let mut f = ScalarField::filled(&[9, 3], 0.0f64);
        for i in 0..9 {
            for j in 0..3 {
                f.set(&[i, j], (i * i) as f64);
            }
        }
        let g = gradient(&f);
        for i in 1..8 {
            assert!((g[0].at(&[i, 1]) - 2.0 * i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolate_on_node_and_midpoint() {
        let f: ScalarField<f64> = ScalarField::from_values(&[1, 2], vec![0.0, 1.0]);
        assert_eq!(interpolate(&f, &[0.0, 1.0]), 1.0);
        assert!((interpolate(&f, &[0.0, 0.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interpolate_clamps_outside() {
        let f = ScalarField::from_values(&[1, 2], vec![0.0, 1.0]);
        assert_eq!(interpolate(&f, &[0.0, -3.0]), 0.0);
        assert_eq!(interpolate(&f, &[5.0, 9.0]), 1.0);
    }

    #[test]
    fn bin_single_point_center() {
        let pts = vec![vec![0.5f64, 0.5]];
        let b = bin_points(&pts, &[3, 3], &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(b.dropped, 0);
        assert_eq!(b.counts.at(&[1, 1]), 1.0);
        assert_eq!(b.counts.sum(), 1.0);
    }

    #[test]
    fn bin_empty_points() {
        let b = bin_points::<f64>(&[], &[4, 4], &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(b.counts.sum(), 0.0);
    }

    #[test]
    fn bin_upper_edge_goes_to_last_bin() {
        let pts = vec![vec![1.0f64, 1.0]];
        let b = bin_points(&pts, &[3, 3], &[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(b.counts.at(&[2, 2]), 1.0);
        assert_eq!(b.dropped, 0);
    }

    #[test]
    fn bin_rejects_bad_args() {
        assert!(bin_points::<f64>(&[], &[0, 3], &[(0.0, 1.0), (0.0, 1.0)]).is_err());
        assert!(bin_points::<f64>(&[], &[3, 3], &[(1.0, 0.0), (0.0, 1.0)]).is_err());
    }

    #[test]
    fn components_two_blobs() {
        let mask = mask_2d(&[
            &[1, 1, 0, 0, 0],
            &[1, 1, 0, 0, 1],
            &[0, 0, 0, 1, 1],
        ]);
        // Diagonal adjacency joins the two right-side cells into the second blob.
        let regions = connected_components(&mask);
        assert_eq!(regions.count(), 2);
    }

    #[test]
    fn components_all_false() {
        let mask = BinaryMask::new(&[3, 3], false);
        assert_eq!(connected_components(&mask).count(), 0);
    }

    #[test]
    fn otsu_bimodal_split() {
        let mut vals = vec![10.0f64; 32];
        vals.extend(vec![200.0f64; 32]);
        let f = ScalarField::from_values(&[8, 8], vals);
        let mask = log_otsu_threshold(&f).unwrap();
        for (i, &b) in mask.bits().iter().enumerate() {
            assert_eq!(b, i >= 32);
        }
    }

    #[test]
    fn otsu_constant_errors() {
        let f = ScalarField::filled(&[4, 4], 0.0f64);
        assert!(matches!(log_otsu_threshold(&f), Err(Error::NoThreshold)));
    }

    #[test]
    fn mlog_constant_is_zero() {
        let f = ScalarField::filled(&[16, 16], 7.0f64);
        let r = multiscale_log_filter(&f, &[2.0]).unwrap();
        for &v in r.values() {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn fill_holes_closes_ring() {
        let mask = mask_2d(&[
            &[1, 1, 1, 0],
            &[1, 0, 1, 0],
            &[1, 1, 1, 0],
        ]);
        let filled = mask.fill_holes();
        assert!(filled.get(&[1, 1]));
        assert!(!filled.get(&[0, 3]));
    }

    #[test]
    fn local_maxima_single_peak() {
        let mut f = ScalarField::filled(&[7, 7], 0.0f64);
        for i in 0..7 {
            for j in 0..7 {
                let d = ((i as f64 - 3.0).powi(2) + (j as f64 - 3.0).powi(2)).sqrt();
                f.set(&[i, j], 10.0 - d);
            }
        }
        let mask = BinaryMask::new(&[7, 7], true);
        let maxima = local_maxima(&f, &mask);
        assert_eq!(maxima.len(), 1);
        assert_eq!(maxima[0], vec![3.0, 3.0]);
    }
}
