//! 2-D boundary analysis of mask objects: Moore-neighbor contour tracing,
//! smoothed curvature, convexity testing, and the hull-transformed
//! centers-of-curvature candidate set used to seed particles.

use crate::field::{interpolate, BinaryMask};
use crate::potential::ConfiningPotential;
use crate::scalar::{real, Real};

/// Closed boundary trace of one object, counterclockwise, one vertex per
/// boundary cell. Curvature and inward normals are filled by [`curvature`].
#[derive(Debug, Clone)]
pub struct Contour<T> {
    pub vertices: Vec<[T; 2]>,
    pub curvature: Vec<T>,
    pub inward_normal: Vec<[T; 2]>,
    /// Single-cell (or untraceable) region; treated as convex downstream.
    pub degenerate: bool,
}

impl<T: Real> Contour<T> {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Shoelace signed area; positive for counterclockwise orientation.
    pub fn signed_area(&self) -> T {
        let n = self.vertices.len();
        let mut acc = T::zero();
        for i in 0..n {
            let [x0, y0] = self.vertices[i];
            let [x1, y1] = self.vertices[(i + 1) % n];
            acc += x0 * y1 - x1 * y0;
        }
        acc / real::<T>(2.0)
    }

    pub fn min_curvature(&self) -> T {
        self.curvature
            .iter()
            .cloned()
            .fold(T::infinity(), T::min)
    }
}

/// Candidate particle start positions inside the object.
#[derive(Debug, Clone)]
pub struct CandidateSet<T> {
    pub points: Vec<[T; 2]>,
}

// Moore neighborhood in clockwise order: E, SE, S, SW, W, NW, N, NE
// (axis 0 is the row coordinate).
const MOORE: [[isize; 2]; 8] = [
    [0, 1],
    [1, 1],
    [1, 0],
    [1, -1],
    [0, -1],
    [-1, -1],
    [-1, 0],
    [-1, 1],
];

/// Trace the outer boundary of the mask's object with Moore-neighbor
/// tracing (Jacob's stopping criterion), oriented counterclockwise.
pub fn trace_contour<T: Real>(mask: &BinaryMask) -> Contour<T> {
    assert_eq!(mask.ndim(), 2, "contour tracing is 2-D only");
    let dims = mask.dims();
    let (rows, cols) = (dims[0], dims[1]);
    let at = |r: isize, c: isize| -> bool {
        r >= 0 && c >= 0 && (r as usize) < rows && (c as usize) < cols
            && mask.get(&[r as usize, c as usize])
    };

    // First true cell in scan order; the cell before it is background.
    let mut start = None;
    'scan: for r in 0..rows {
        for c in 0..cols {
            if mask.get(&[r, c]) {
                start = Some((r as isize, c as isize));
                break 'scan;
            }
        }
    }
    let Some(start) = start else {
        return Contour {
            vertices: Vec::new(),
            curvature: Vec::new(),
            inward_normal: Vec::new(),
            degenerate: true,
        };
    };

    // Direction index pointing from the current cell back toward the
    // last background cell visited; the clockwise scan resumes after it.
    let mut vertices: Vec<[isize; 2]> = vec![[start.0, start.1]];
    let mut cur = start;
    let mut back_dir = 4usize; // backtrack starts west of the start cell
    let mut first_move: Option<(isize, isize, usize)> = None;
    let max_steps = 4 * rows * cols + 16;

    'trace: for _ in 0..max_steps {
        let mut found = false;
        for k in 1..=8 {
            let dir = (back_dir + k) % 8;
            let nr = cur.0 + MOORE[dir][0];
            let nc = cur.1 + MOORE[dir][1];
            if at(nr, nc) {
                match first_move {
                    None => first_move = Some((nr, nc, dir)),
                    Some(fm) => {
                        if (cur.0, cur.1) == start && fm == (nr, nc, dir) {
                            vertices.pop(); // start was re-appended last round
                            break 'trace;
                        }
                    }
                }
                cur = (nr, nc);
                vertices.push([nr, nc]);
                // New backtrack: the cell scanned just before the move.
                back_dir = (dir + 8 - 1) % 8;
                // Convert: backtrack direction must point from the new cell
                // toward that background cell.
                let br = vertices[vertices.len() - 2][0] + MOORE[back_dir][0];
                let bc = vertices[vertices.len() - 2][1] + MOORE[back_dir][1];
                back_dir = dir_from_to(cur, (br, bc));
                found = true;
                break;
            }
        }
        if !found {
            // Isolated cell.
            break;
        }
    }

    if vertices.len() <= 1 {
        return Contour {
            vertices: vec![[real(start.0 as f64), real(start.1 as f64)]],
            curvature: vec![T::zero()],
            inward_normal: vec![[T::zero(), T::zero()]],
            degenerate: true,
        };
    }
    // The closing vertex duplicates the start.
    if vertices.len() > 1 && vertices[0] == *vertices.last().unwrap() {
        vertices.pop();
    }

    let mut pts: Vec<[T; 2]> = vertices
        .iter()
        .map(|v| [real(v[0] as f64), real(v[1] as f64)])
        .collect();
    let mut contour = Contour {
        curvature: vec![T::zero(); pts.len()],
        inward_normal: vec![[T::zero(), T::zero()]; pts.len()],
        vertices: pts.clone(),
        degenerate: false,
    };
    if contour.signed_area() < T::zero() {
        pts.reverse();
        contour.vertices = pts;
    }
    contour
}

fn dir_from_to(from: (isize, isize), to: (isize, isize)) -> usize {
    let d = [to.0 - from.0, to.1 - from.1];
    MOORE
        .iter()
        .position(|m| *m == d)
        .expect("backtrack cell is always Moore-adjacent")
}

/// Periodic Gaussian smoothing of a cyclic sequence (σ in vertex units).
fn periodic_smooth<T: Real>(vals: &[T], sigma: T) -> Vec<T> {
    if sigma <= T::zero() {
        return vals.to_vec();
    }
    let n = vals.len();
    let sig = sigma.to_f64().unwrap();
    let half = (4.0 * sig).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * half + 1) as usize);
    for i in -half..=half {
        kernel.push((-(i as f64).powi(2) / (2.0 * sig * sig)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<T> = kernel.iter().map(|&w| real(w / norm)).collect();
    (0..n)
        .map(|i| {
            let mut acc = T::zero();
            for (j, &w) in kernel.iter().enumerate() {
                let p = (i as isize + j as isize - half).rem_euclid(n as isize) as usize;
                acc += w * vals[p];
            }
            acc
        })
        .collect()
}

/// Fill per-vertex signed curvature and inward normals. Counterclockwise
/// orientation makes convex arcs positive and concavities negative.
///
/// The boundary is resampled to unit arclength, coordinates are smoothed
/// periodically with `smoothing_sigma`, κ = (x′y″ − y′x″)/(x′²+y′²)^{3/2}
/// comes from central differences, and the curvature profile gets one more
/// length-proportional smoothing pass to tame pixel-quantization noise.
pub fn curvature<T: Real>(contour: &Contour<T>, smoothing_sigma: T) -> Contour<T> {
    let n = contour.vertices.len();
    let mut out = contour.clone();
    if contour.degenerate || n < 8 {
        out.curvature = vec![T::zero(); n];
        out.inward_normal = vec![[T::zero(), T::zero()]; n];
        return out;
    }

    // Cumulative arclength of the closed polygon.
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(T::zero());
    for i in 0..n {
        let a = contour.vertices[i];
        let b = contour.vertices[(i + 1) % n];
        let d = ((b[0] - a[0]) * (b[0] - a[0]) + (b[1] - a[1]) * (b[1] - a[1])).sqrt();
        let prev = cum[i];
        cum.push(prev + d);
    }
    let total = cum[n];
    let m = total.to_f64().unwrap().round().max(8.0) as usize;
    let step = total / real::<T>(m as f64);

    // Uniform-arclength resample.
    let mut xs = Vec::with_capacity(m);
    let mut ys = Vec::with_capacity(m);
    let mut seg = 0usize;
    for i in 0..m {
        let s = step * real::<T>(i as f64);
        while seg + 1 < n && cum[seg + 1] < s {
            seg += 1;
        }
        let span = (cum[seg + 1] - cum[seg]).max(real(1e-12));
        let t = (s - cum[seg]) / span;
        let a = contour.vertices[seg];
        let b = contour.vertices[(seg + 1) % n];
        xs.push(a[0] + t * (b[0] - a[0]));
        ys.push(a[1] + t * (b[1] - a[1]));
    }
    let xs = periodic_smooth(&xs, smoothing_sigma);
    let ys = periodic_smooth(&ys, smoothing_sigma);

    let mut kappa = vec![T::zero(); m];
    let mut tx = vec![T::zero(); m];
    let mut ty = vec![T::zero(); m];
    let two = real::<T>(2.0);
    for i in 0..m {
        let p = (i + m - 1) % m;
        let q = (i + 1) % m;
        let x1 = (xs[q] - xs[p]) / (two * step);
        let y1 = (ys[q] - ys[p]) / (two * step);
        let x2 = (xs[p] - two * xs[i] + xs[q]) / (step * step);
        let y2 = (ys[p] - two * ys[i] + ys[q]) / (step * step);
        let speed2 = x1 * x1 + y1 * y1;
        let speed = speed2.sqrt();
        if speed > T::zero() {
            kappa[i] = (x1 * y2 - y1 * x2) / (speed2 * speed);
            tx[i] = x1 / speed;
            ty[i] = y1 / speed;
        }
    }
    // Noise wavelength grows with the boundary, so this pass scales with it.
    let post = smoothing_sigma.max(real(m as f64 / 32.0));
    let kappa = periodic_smooth(&kappa, post);

    // Map back: nearest resampled point per original vertex.
    let mut out_kappa = Vec::with_capacity(n);
    let mut out_normals = Vec::with_capacity(n);
    for i in 0..n {
        let idx = (cum[i] / step).round().to_usize().unwrap_or(0) % m;
        out_kappa.push(kappa[idx]);
        out_normals.push([-ty[idx], tx[idx]]);
    }
    out.curvature = out_kappa;
    out.inward_normal = out_normals;
    out
}

/// Convexity test: no concavity deeper than the 0.25/λ threshold.
pub fn is_convex<T: Real>(contour: &Contour<T>, lambda: T) -> bool {
    if contour.degenerate || contour.vertices.len() < 8 {
        return true;
    }
    contour.min_curvature() > -real::<T>(0.25) / lambda
}

fn cross<T: Real>(o: [T; 2], a: [T; 2], b: [T; 2]) -> T {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Monotone-chain convex hull, counterclockwise, no repeated endpoint.
fn convex_hull<T: Real>(points: &[[T; 2]]) -> Vec<[T; 2]> {
    let mut pts: Vec<[T; 2]> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    let n = pts.len();
    if n < 3 {
        return pts;
    }
    let mut hull: Vec<[T; 2]> = Vec::with_capacity(2 * n);
    for &p in &pts {
        while hull.len() >= 2
            && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero()
        {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev() {
        while hull.len() >= lower
            && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= T::zero()
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Replace each concave stretch containing negative curvature by its
/// convex-hull bridge, then recompute curvature.
///
/// A negative-curvature run marks a concavity, but its endpoints sit below
/// the hull's tangency points; bridging only the run leaves a shallow
/// valley. The full extent of each concavity is the contour stretch
/// between consecutive vertices of the whole contour's convex hull (a hull
/// "pocket"), so pockets holding a negative run are replaced by their hull
/// edge while pockets that never dip concave stay untouched.
pub fn convex_hull_negative_runs<T: Real>(
    contour: &Contour<T>,
    smoothing_sigma: T,
) -> Contour<T> {
    let n = contour.vertices.len();
    if contour.degenerate || n < 8 {
        return contour.clone();
    }
    if contour.curvature.iter().all(|&k| k >= T::zero()) {
        return contour.clone();
    }
    let hull = convex_hull(&contour.vertices);
    // Contour indices of hull vertices, in traversal order. For a simple
    // closed curve the hull visits them in the same cyclic order.
    let mut hull_idx: Vec<usize> = hull
        .iter()
        .filter_map(|h| contour.vertices.iter().position(|v| v == h))
        .collect();
    hull_idx.sort_unstable();
    if hull_idx.len() < 3 {
        return contour.clone();
    }

    let mut new_vertices: Vec<[T; 2]> = Vec::with_capacity(n);
    for (pos, &start) in hull_idx.iter().enumerate() {
        let end = hull_idx[(pos + 1) % hull_idx.len()];
        new_vertices.push(contour.vertices[start]);
        // The open stretch between this hull vertex and the next.
        let mut pocket = Vec::new();
        let mut i = (start + 1) % n;
        while i != end {
            pocket.push(i);
            i = (i + 1) % n;
        }
        if pocket.is_empty() {
            continue;
        }
        let concave = pocket.iter().any(|&i| contour.curvature[i] < T::zero());
        if concave {
            // Bridge straight across, at roughly unit vertex spacing.
            let a = contour.vertices[start];
            let b = contour.vertices[end];
            let dist =
                ((b[0] - a[0]) * (b[0] - a[0]) + (b[1] - a[1]) * (b[1] - a[1])).sqrt();
            let steps = dist.to_f64().unwrap().ceil().max(1.0) as usize;
            for s in 1..steps {
                let f = real::<T>(s as f64 / steps as f64);
                new_vertices.push([a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f]);
            }
        } else {
            for &i in &pocket {
                new_vertices.push(contour.vertices[i]);
            }
        }
    }
    let bridged = Contour {
        curvature: vec![T::zero(); new_vertices.len()],
        inward_normal: vec![[T::zero(), T::zero()]; new_vertices.len()],
        vertices: new_vertices,
        degenerate: false,
    };
    curvature(&bridged, smoothing_sigma)
}

/// Centers of curvature of sufficiently curved vertices, filtered to lie
/// inside the object with confining potential inside the band.
pub fn centers_of_curvature<T: Real>(
    contour: &Contour<T>,
    mask: &BinaryMask,
    potential: &ConfiningPotential<T>,
    kappa_min: T,
    v_band: (T, T),
) -> CandidateSet<T> {
    let dims = mask.dims();
    let mut points = Vec::new();
    for (i, &k) in contour.curvature.iter().enumerate() {
        if k <= kappa_min {
            continue;
        }
        let v = contour.vertices[i];
        let nrm = contour.inward_normal[i];
        let r = T::one() / k;
        let c = [v[0] + r * nrm[0], v[1] + r * nrm[1]];
        let ci = [
            c[0].round().to_isize().unwrap_or(-1),
            c[1].round().to_isize().unwrap_or(-1),
        ];
        if ci[0] < 0
            || ci[1] < 0
            || ci[0] as usize >= dims[0]
            || ci[1] as usize >= dims[1]
            || !mask.get(&[ci[0] as usize, ci[1] as usize])
        {
            continue;
        }
        let val = interpolate(&potential.v, &c);
        if val >= v_band.0 && val <= v_band.1 {
            points.push(c);
        }
    }
    CandidateSet { points }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn disk_mask(dims: [usize; 2], centers: &[(f64, f64)], radius: f64) -> BinaryMask {
        let mut mask = BinaryMask::new(&dims, false);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                let inside = centers.iter().any(|&(ci, cj)| {
                    let d = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
                    d <= radius * radius
                });
                if inside {
                    mask.set(&[i, j], true);
                }
            }
        }
        mask
    }

    #[test]
    fn square_boundary_has_16_vertices_ccw() {
        let mut mask = BinaryMask::new(&[9, 9], false);
        for i in 2..7 {
            for j in 2..7 {
                mask.set(&[i, j], true);
            }
        }
        let contour: Contour<f64> = trace_contour(&mask);
        assert_eq!(contour.len(), 16);
        assert!(contour.signed_area() > 0.0);
        assert!(!contour.degenerate);
    }

    #[test]
    fn single_cell_is_degenerate() {
        let mut mask = BinaryMask::new(&[5, 5], false);
        mask.set(&[2, 2], true);
        let contour: Contour<f64> = trace_contour(&mask);
        assert!(contour.degenerate);
        assert!(is_convex(&contour, 20.0));
    }

    #[test]
    fn circle_curvature_near_inverse_radius() {
        let mask = disk_mask([51, 51], &[(25.0, 25.0)], 20.0);
        let contour: Contour<f64> = trace_contour(&mask);
        let contour = curvature(&contour, 2.0);
        let expected = 1.0 / 20.0;
        let mean: f64 =
            contour.curvature.iter().sum::<f64>() / contour.curvature.len() as f64;
        assert!(
            (mean - expected).abs() < 0.15 * expected,
            "mean curvature {mean} vs {expected}"
        );
        // Inward normals point toward the center.
        for (v, n) in contour.vertices.iter().zip(&contour.inward_normal) {
            let to_center = [25.0 - v[0], 25.0 - v[1]];
            let dot = to_center[0] * n[0] + to_center[1] * n[1];
            assert!(dot > 0.0, "normal points outward at {v:?}");
        }
    }

    #[test]
    fn rectangle_edge_curvature_is_small() {
        let mut mask = BinaryMask::new(&[21, 81], false);
        for i in 5..16 {
            for j in 5..76 {
                mask.set(&[i, j], true);
            }
        }
        let contour: Contour<f64> = trace_contour(&mask);
        let contour = curvature(&contour, 2.0);
        // Mid-edge vertex on the long side.
        let (idx, _) = contour
            .vertices
            .iter()
            .enumerate()
            .find(|(_, v)| v[0] == 5.0 && (v[1] - 40.0).abs() < 0.5)
            .unwrap();
        assert!(contour.curvature[idx].abs() < 0.02);
    }

    #[test]
    fn two_disk_clump_has_two_negative_runs() {
        let mask = disk_mask([61, 91], &[(30.0, 30.0), (30.0, 60.0)], 20.0);
        let contour: Contour<f64> = trace_contour(&mask);
        let contour = curvature(&contour, 2.0);
        let n = contour.len();
        let neg: Vec<bool> = contour.curvature.iter().map(|&k| k < 0.0).collect();
        let mut runs = 0;
        for i in 0..n {
            if neg[i] && !neg[(i + n - 1) % n] {
                runs += 1;
            }
        }
        assert_eq!(runs, 2, "expected two concave necks");
        assert!(!is_convex(&contour, 20.0));
    }

    #[test]
    fn circle_is_convex() {
        let mask = disk_mask([51, 51], &[(25.0, 25.0)], 20.0);
        let contour: Contour<f64> = trace_contour(&mask);
        let contour = curvature(&contour, 2.0);
        assert!(is_convex(&contour, 20.0));
    }

    #[test]
    fn hull_transform_is_identity_on_convex() {
        let mask = disk_mask([51, 51], &[(25.0, 25.0)], 20.0);
        let contour: Contour<f64> = trace_contour(&mask);
        let contour = curvature(&contour, 2.0);
        let bridged = convex_hull_negative_runs(&contour, 2.0);
        assert_eq!(bridged.len(), contour.len());
    }

    #[test]
    fn hull_transform_fills_two_disk_neck() {
        let mask = disk_mask([61, 91], &[(30.0, 30.0), (30.0, 60.0)], 20.0);
        let contour: Contour<f64> = trace_contour(&mask);
        let contour = curvature(&contour, 2.0);
        let lambda = 20.0;
        assert!(contour.min_curvature() < -0.25 / lambda);
        let bridged = convex_hull_negative_runs(&contour, 2.0);
        assert!(
            bridged.min_curvature() >= -0.05 / lambda,
            "residual concavity {} after bridging",
            bridged.min_curvature()
        );
    }

    #[test]
    fn hull_transform_three_disk_clump() {
        // Triangle arrangement: three concave necks, replaced independently.
        let mask = disk_mask(
            [91, 91],
            &[(25.0, 30.0), (25.0, 60.0), (51.0, 45.0)],
            19.0,
        );
        let contour: Contour<f64> = trace_contour(&mask);
        let contour = curvature(&contour, 2.0);
        let n = contour.len();
        let neg: Vec<bool> = contour.curvature.iter().map(|&k| k < 0.0).collect();
        let mut runs = 0;
        for i in 0..n {
            if neg[i] && !neg[(i + n - 1) % n] {
                runs += 1;
            }
        }
        assert_eq!(runs, 3, "triangle clump has three concave necks");
        let bridged = convex_hull_negative_runs(&contour, 2.0);
        assert!(
            bridged.min_curvature() >= -0.05 / 19.0,
            "residual concavity {}",
            bridged.min_curvature()
        );
    }

    #[test]
    fn boundary_vertices_match_face_neighbor_scan() {
        // Oracle: boundary cells are the region cells with a background
        // face neighbor.
        let mask = disk_mask([41, 71], &[(20.0, 22.0), (22.0, 48.0)], 14.0);
        let contour: Contour<f64> = trace_contour(&mask);
        let mut traced: Vec<(usize, usize)> = contour
            .vertices
            .iter()
            .map(|v| (v[0] as usize, v[1] as usize))
            .collect();
        traced.sort_unstable();
        traced.dedup();

        let dims = mask.dims();
        let mut oracle = Vec::new();
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                if !mask.get(&[i, j]) {
                    continue;
                }
                let mut boundary = false;
                for (di, dj) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                    let (ni, nj) = (i as isize + di, j as isize + dj);
                    if ni < 0
                        || nj < 0
                        || ni as usize >= dims[0]
                        || nj as usize >= dims[1]
                        || !mask.get(&[ni as usize, nj as usize])
                    {
                        boundary = true;
                        break;
                    }
                }
                if boundary {
                    oracle.push((i, j));
                }
            }
        }
        assert_eq!(traced, oracle);
    }
}
