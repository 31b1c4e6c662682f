//! End-to-end orchestration: image and scatter detection with per-object
//! short-circuits, replicate scheduling, the distance-transform baseline,
//! and benchmark report assembly.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{consensus, extract_seeds, ConsensusConfig, SeedPoint};
use crate::dynamics::{
    integrate, to_solver_space, GridConfinement, SolverConfig, TrajectoryState,
};
use crate::error::{Error, Result};
use crate::field::{
    bin_points, connected_components, decompose, distance_transform, gaussian_smooth,
    local_maxima, log_otsu_threshold, multiscale_log_filter, BinaryMask, LabeledRegions,
    ScalarField,
};
use crate::geometry::{
    centers_of_curvature, convex_hull_negative_runs, curvature, is_convex, trace_contour, Contour,
};
use crate::metrics::{aggregate, f1, f1_curve, fd_histogram, match_seeds, MatchOutcome, TruthSet};
use crate::particles::{init_particles, particle_count, InitConfig, InitStrategy};
use crate::potential::{
    confining_from_density, confining_from_mask, ConfiningPotential, DensityPotentialConfig,
    InteractionSpec,
};
use crate::scalar::{real, Real};

/// Foreground extraction for images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdMode {
    /// Otsu on the log(1+I) histogram.
    LogOtsu,
    /// Multiscale LoG response over a fixed threshold.
    MLogFixed,
}

/// Full pipeline configuration; defaults follow the published parameter
/// table (rs 5, λ_max 18, ra 13, r0 2, d0 −1, V_max 1/5, β 1/3,
/// α(t) = 5e-4·t, s0 0.01, m 1, k 1, CvxHll CoC initialization).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig<T> {
    pub rs: T,
    pub lambda_max: T,
    pub ra: T,
    pub r0: T,
    pub d0: T,
    pub v_min: T,
    pub v_max: T,
    pub beta: T,
    pub alpha_rate: T,
    pub s0: T,
    pub mass: T,
    pub k: T,

    /// `None` picks the per-mode default: CvxHll CoC for images,
    /// uniform-random for scatter data.
    pub strategy: Option<InitStrategy>,
    /// `None` picks the per-mode default: 1 for images, 5 for scatter.
    pub replicates: Option<usize>,
    pub metric_p: T,
    /// Solver-space attractive extent; `None` keeps solver = data space.
    pub ell: Option<T>,
    pub threshold_mode: ThresholdMode,
    pub mlog_sigmas: Vec<T>,
    pub mlog_threshold: T,
    /// Pre-threshold Gaussian blur.
    pub blur_sigma: T,
    pub density_smooth_sigma: T,
    pub density_threshold: T,
    /// Upper bound on bins per axis; cells are forced cubic.
    pub bins_per_axis: usize,
    /// Extra per-axis scale factors applied after std scaling.
    pub axis_scale: Option<Vec<T>>,
    pub scale_by_std: bool,
    pub fill_holes: bool,
    /// Objects below this cell count are dropped as noise.
    pub min_object_cells: usize,
    pub grad_percentile: T,
    pub grad_target: T,
    pub rel_tol: T,
    pub abs_tol: T,
    pub t_end: T,
    pub conv_window: T,
    pub conv_speed: T,
    pub consensus_min_support: T,
    /// Consensus link radius (data units); `None` uses r0.
    pub consensus_link_radius: Option<T>,
    pub rng_seed: u64,
}

impl<T: Real> Default for PipelineConfig<T> {
    fn default() -> Self {
        PipelineConfig {
            rs: real(5.0),
            lambda_max: real(18.0),
            ra: real(13.0),
            r0: real(2.0),
            d0: real(-1.0),
            v_min: real(0.0),
            v_max: real(0.2),
            beta: real(1.0 / 3.0),
            alpha_rate: real(5e-4),
            s0: real(0.01),
            mass: real(1.0),
            k: real(1.0),
            strategy: None,
            replicates: None,
            metric_p: real(2.0),
            ell: None,
            threshold_mode: ThresholdMode::LogOtsu,
            mlog_sigmas: vec![real(4.0), real(6.0), real(8.0), real(10.0)],
            mlog_threshold: real(0.0),
            blur_sigma: real(1.0),
            density_smooth_sigma: real(2.0),
            density_threshold: real(5.0),
            bins_per_axis: 33,
            axis_scale: None,
            scale_by_std: true,
            fill_holes: true,
            min_object_cells: 9,
            grad_percentile: real(0.99),
            grad_target: real(0.4),
            rel_tol: real(1e-3),
            abs_tol: real(1e-6),
            t_end: real(1000.0),
            conv_window: real(5.0),
            conv_speed: real(2e-3),
            consensus_min_support: real(0.25),
            consensus_link_radius: None,
            rng_seed: 0,
        }
    }
}

impl<T: Real> PipelineConfig<T> {
    /// Parse a flat key-value config file (`key = value`, `#` comments).
    /// Unknown keys are errors.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse(format!(
                    "config line {}: expected key = value",
                    lineno + 1
                )));
            };
            cfg.apply_key(key.trim(), value.trim())
                .map_err(|e| Error::Parse(format!("config line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<T> {
            parse_fraction(v)
                .map(real::<T>)
                .ok_or_else(|| Error::Parse(format!("bad number {v:?}")))
        };
        let int = |v: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad integer {v:?}")))
        };
        let flag = |v: &str| -> Result<bool> {
            match v {
                "true" | "1" | "yes" | "on" => Ok(true),
                "false" | "0" | "no" | "off" => Ok(false),
                _ => Err(Error::Parse(format!("bad flag {v:?}"))),
            }
        };
        match key {
            "rs" => self.rs = num(value)?,
            "lambda_max" => self.lambda_max = num(value)?,
            "ra" => self.ra = num(value)?,
            "r0" => self.r0 = num(value)?,
            "d0" => self.d0 = num(value)?,
            "v_min" => self.v_min = num(value)?,
            "v_max" => self.v_max = num(value)?,
            "beta" => self.beta = num(value)?,
            "alpha_rate" => self.alpha_rate = num(value)?,
            "s0" => self.s0 = num(value)?,
            "mass" => self.mass = num(value)?,
            "k" => self.k = num(value)?,
            "strategy" => {
                self.strategy = Some(match value {
                    "random" => InitStrategy::Random,
                    "uniform-random" => InitStrategy::UniformRandom,
                    "cvxhll-coc" => InitStrategy::CvxHullCoc,
                    _ => return Err(Error::Parse(format!("unknown strategy {value:?}"))),
                })
            }
            "replicates" => self.replicates = Some(int(value)?),
            "metric_p" => {
                self.metric_p = if value == "inf" {
                    T::infinity()
                } else {
                    num(value)?
                };
                if self.metric_p < T::one() {
                    return Err(Error::Parse("metric_p must be >= 1".into()));
                }
            }
            "ell" => self.ell = Some(num(value)?),
            "threshold_mode" => {
                self.threshold_mode = match value {
                    "log-otsu" => ThresholdMode::LogOtsu,
                    "mlog+fixed" => ThresholdMode::MLogFixed,
                    _ => return Err(Error::Parse(format!("unknown threshold mode {value:?}"))),
                }
            }
            "mlog_sigmas" => {
                self.mlog_sigmas = value
                    .split(',')
                    .map(|v| num(v.trim()))
                    .collect::<Result<_>>()?
            }
            "mlog_threshold" => self.mlog_threshold = num(value)?,
            "blur_sigma" => self.blur_sigma = num(value)?,
            "density_smooth_sigma" => self.density_smooth_sigma = num(value)?,
            "density_threshold" => self.density_threshold = num(value)?,
            "bins_per_axis" => self.bins_per_axis = int(value)?,
            "axis_scale" => {
                self.axis_scale = Some(
                    value
                        .split(',')
                        .map(|v| num(v.trim()))
                        .collect::<Result<_>>()?,
                )
            }
            "scale_by_std" => self.scale_by_std = flag(value)?,
            "fill_holes" => self.fill_holes = flag(value)?,
            "min_object_cells" => self.min_object_cells = int(value)?,
            "grad_percentile" => self.grad_percentile = num(value)?,
            "grad_target" => self.grad_target = num(value)?,
            "rel_tol" => self.rel_tol = num(value)?,
            "abs_tol" => self.abs_tol = num(value)?,
            "t_end" => self.t_end = num(value)?,
            "conv_window" => self.conv_window = num(value)?,
            "conv_speed" => self.conv_speed = num(value)?,
            "consensus_min_support" => self.consensus_min_support = num(value)?,
            "consensus_link_radius" => self.consensus_link_radius = Some(num(value)?),
            "rng_seed" => {
                self.rng_seed = value
                    .parse::<u64>()
                    .map_err(|_| Error::Parse(format!("bad seed {value:?}")))?
            }
            _ => return Err(Error::Parse(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Serialize to the flat key-value format accepted by `from_kv_text`.
    pub fn to_kv_text(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        push("rs", format!("{}", self.rs));
        push("lambda_max", format!("{}", self.lambda_max));
        push("ra", format!("{}", self.ra));
        push("r0", format!("{}", self.r0));
        push("d0", format!("{}", self.d0));
        push("v_min", format!("{}", self.v_min));
        push("v_max", format!("{}", self.v_max));
        push("beta", format!("{}", self.beta));
        push("alpha_rate", format!("{}", self.alpha_rate));
        push("s0", format!("{}", self.s0));
        push("mass", format!("{}", self.mass));
        push("k", format!("{}", self.k));
        if let Some(s) = self.strategy {
            let name = match s {
                InitStrategy::Random => "random",
                InitStrategy::UniformRandom => "uniform-random",
                InitStrategy::CvxHullCoc => "cvxhll-coc",
            };
            push("strategy", name.to_string());
        }
        if let Some(r) = self.replicates {
            push("replicates", format!("{r}"));
        }
        push(
            "metric_p",
            if self.metric_p.is_infinite() {
                "inf".to_string()
            } else {
                format!("{}", self.metric_p)
            },
        );
        if let Some(e) = self.ell {
            push("ell", format!("{e}"));
        }
        push(
            "threshold_mode",
            match self.threshold_mode {
                ThresholdMode::LogOtsu => "log-otsu".to_string(),
                ThresholdMode::MLogFixed => "mlog+fixed".to_string(),
            },
        );
        push(
            "mlog_sigmas",
            self.mlog_sigmas
                .iter()
                .map(|s| format!("{s}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        push("mlog_threshold", format!("{}", self.mlog_threshold));
        push("blur_sigma", format!("{}", self.blur_sigma));
        push("density_smooth_sigma", format!("{}", self.density_smooth_sigma));
        push("density_threshold", format!("{}", self.density_threshold));
        push("bins_per_axis", format!("{}", self.bins_per_axis));
        if let Some(scales) = &self.axis_scale {
            push(
                "axis_scale",
                scales
                    .iter()
                    .map(|s| format!("{s}"))
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        push("scale_by_std", format!("{}", self.scale_by_std));
        push("fill_holes", format!("{}", self.fill_holes));
        push("min_object_cells", format!("{}", self.min_object_cells));
        push("grad_percentile", format!("{}", self.grad_percentile));
        push("grad_target", format!("{}", self.grad_target));
        push("rel_tol", format!("{}", self.rel_tol));
        push("abs_tol", format!("{}", self.abs_tol));
        push("t_end", format!("{}", self.t_end));
        push("conv_window", format!("{}", self.conv_window));
        push("conv_speed", format!("{}", self.conv_speed));
        push("consensus_min_support", format!("{}", self.consensus_min_support));
        if let Some(l) = self.consensus_link_radius {
            push("consensus_link_radius", format!("{l}"));
        }
        push("rng_seed", format!("{}", self.rng_seed));
        out
    }

    fn interaction_spec(&self) -> Result<InteractionSpec<T>> {
        InteractionSpec::new(self.d0, self.r0, self.ra)
    }

    fn solver_config(&self) -> SolverConfig<T> {
        SolverConfig {
            alpha_rate: self.alpha_rate,
            coupling_k: self.k,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            t_end: self.t_end,
            conv_window: self.conv_window,
            conv_speed: self.conv_speed,
            metric_p: self.metric_p,
            ell: self.ell.unwrap_or(self.ra),
            force_cutoff: None,
        }
    }
}

/// Numbers like `1/5` or `-1` or `0.2` (the parameter table uses fractions).
fn parse_fraction(v: &str) -> Option<f64> {
    if let Some((num, den)) = v.split_once('/') {
        let n: f64 = num.trim().parse().ok()?;
        let d: f64 = den.trim().parse().ok()?;
        (d != 0.0).then(|| n / d)
    } else {
        v.parse().ok()
    }
}

/// Solver statistics of one replicate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateStats<T> {
    pub replicate_id: u32,
    pub converged: bool,
    pub steps: usize,
    pub rejected: usize,
    pub final_t: T,
    pub particles: usize,
}

/// Why (or how) an object was processed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ObjectDiagnostic<T> {
    /// No simulation: centroid returned directly.
    ShortCircuit { reason: String },
    Simulated {
        particles: usize,
        replicates: Vec<ReplicateStats<T>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectReport<T> {
    pub object_id: u32,
    pub seeds: Vec<SeedPoint<T>>,
    pub diagnostic: ObjectDiagnostic<T>,
    /// Final particle positions of the first replicate (data units), kept
    /// for overlay plots.
    pub particles: Vec<Vec<T>>,
}

/// Detection output: per-object seeds plus diagnostics and timing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionResult<T> {
    pub objects: Vec<ObjectReport<T>>,
    /// Object outlines (2-D images only), for plotting.
    pub outlines: Vec<Vec<[T; 2]>>,
    pub config: PipelineConfig<T>,
    pub elapsed_ms: f64,
}

impl<T: Real> DetectionResult<T> {
    pub fn all_seeds(&self) -> Vec<SeedPoint<T>> {
        self.objects.iter().flat_map(|o| o.seeds.clone()).collect()
    }

    /// True when at least one simulation ran and none of its replicates
    /// converged (exit code 3 on the CLI).
    pub fn all_replicates_unconverged(&self) -> bool {
        let mut simulated = false;
        for o in &self.objects {
            if let ObjectDiagnostic::Simulated { replicates, .. } = &o.diagnostic {
                simulated = true;
                if replicates.iter().any(|r| r.converged) {
                    return false;
                }
            }
        }
        simulated
    }
}

/// Short-circuit decision: centroid seed for objects that are smaller than
/// one particle, hold a single particle, or are convex.
pub fn short_circuit<T: Real>(
    region: &[usize],
    dims: &[usize],
    contour: &Contour<T>,
    lambda: T,
    cfg: &PipelineConfig<T>,
) -> Option<(Vec<T>, &'static str)> {
    let area = real::<T>(region.len() as f64);
    let particle_area = real::<T>(std::f64::consts::PI) * cfg.rs * cfg.rs;
    let reason = if area < particle_area {
        "smaller than a particle"
    } else if particle_count(area, cfg.rs, dims.len()) == 1 {
        "single particle"
    } else if is_convex(contour, lambda) {
        "convex short-circuit"
    } else {
        return None;
    };
    Some((centroid(region, dims), reason))
}

fn centroid<T: Real>(region: &[usize], dims: &[usize]) -> Vec<T> {
    let n = dims.len();
    let mut c = vec![T::zero(); n];
    for &lin in region {
        for (axis, v) in decompose(dims, lin).iter().enumerate() {
            c[axis] += real::<T>(*v as f64);
        }
    }
    let m = real::<T>(region.len() as f64);
    for v in &mut c {
        *v = *v / m;
    }
    c
}

/// Median |∇V| over the region, relative to the particle repulsion scale
/// 1/ra²; the method operates around ratio ≈ 1 (warned elsewhere if the
/// configuration strays by more than 10×).
pub fn force_balance_ratio<T: Real>(
    potential: &ConfiningPotential<T>,
    region: &[usize],
    ra: T,
) -> T {
    let mut mags: Vec<T> = region
        .iter()
        .map(|&lin| {
            potential
                .grad
                .iter()
                .map(|g| g.values()[lin] * g.values()[lin])
                .fold(T::zero(), |a, b| a + b)
                .sqrt()
        })
        .collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = mags[mags.len() / 2];
    median * ra * ra
}

fn derive_seed(base: u64, object_id: u32, replicate: u32) -> u64 {
    base.wrapping_add(replicate as u64)
        .wrapping_add((object_id as u64) << 32)
}

struct Cropped {
    mask: BinaryMask,
    offset: Vec<usize>,
}

/// Cut the object's bounding box plus margin out of the labels grid.
fn crop_object(regions: &LabeledRegions, label: u32, margin: usize) -> Cropped {
    let dims = regions.dims();
    let n = dims.len();
    let mut lo = vec![usize::MAX; n];
    let mut hi = vec![0usize; n];
    for (lin, &l) in regions.labels().iter().enumerate() {
        if l != label {
            continue;
        }
        for (axis, c) in decompose(dims, lin).iter().enumerate() {
            lo[axis] = lo[axis].min(*c);
            hi[axis] = hi[axis].max(*c);
        }
    }
    let lo: Vec<usize> = lo.iter().map(|&v| v.saturating_sub(margin)).collect();
    let hi: Vec<usize> = hi
        .iter()
        .zip(dims)
        .map(|(&v, &d)| (v + margin + 1).min(d))
        .collect();
    let sub_dims: Vec<usize> = lo.iter().zip(&hi).map(|(&a, &b)| b - a).collect();
    let mut mask = BinaryMask::new(&sub_dims, false);
    for (lin, &l) in regions.labels().iter().enumerate() {
        if l != label {
            continue;
        }
        let idx = decompose(dims, lin);
        let local: Vec<usize> = idx.iter().zip(&lo).map(|(&c, &o)| c - o).collect();
        mask.set(&local, true);
    }
    Cropped {
        mask,
        offset: lo,
    }
}

/// Locate seed points in a 2-D grayscale image (Gaussian blur, threshold,
/// per-object confining wells, damped SALR dynamics, cluster extraction).
pub fn detect_image<T: Real>(
    image: &ScalarField<T>,
    cfg: &PipelineConfig<T>,
) -> Result<DetectionResult<T>> {
    if image.ndim() != 2 {
        return Err(Error::ShapeMismatch("detect_image needs a 2-D field".into()));
    }
    let started = Instant::now();
    let blurred = gaussian_smooth(image, cfg.blur_sigma)?;
    let mut mask = match cfg.threshold_mode {
        ThresholdMode::LogOtsu => log_otsu_threshold(&blurred)?,
        ThresholdMode::MLogFixed => {
            let response = multiscale_log_filter(&blurred, &cfg.mlog_sigmas)?;
            BinaryMask::from_field(&response, |v| v > cfg.mlog_threshold)
        }
    };
    if !mask.any() {
        return Err(Error::EmptyForeground);
    }
    if cfg.fill_holes {
        mask = mask.fill_holes();
    }
    let mut regions = connected_components(&mask);
    if cfg.min_object_cells > 1 {
        let mut keep = mask.clone();
        for label in 1..=regions.count() as u32 {
            let cells = regions.region_cells(label);
            if cells.len() < cfg.min_object_cells {
                for lin in cells {
                    keep.bits_mut()[lin] = false;
                }
            }
        }
        if !keep.any() {
            return Err(Error::EmptyForeground);
        }
        mask = keep;
        regions = connected_components(&mask);
    }

    let spec = cfg.interaction_spec()?;
    let replicates = cfg.replicates.unwrap_or(1).max(1);
    let strategy = cfg.strategy.unwrap_or(InitStrategy::CvxHullCoc);

    let labels: Vec<u32> = (1..=regions.count() as u32).collect();
    let mut reports: Vec<(ObjectReport<T>, Vec<[T; 2]>)> = labels
        .par_iter()
        .map(|&label| {
            detect_one_object(&regions, label, &spec, strategy, replicates, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by_key(|(r, _)| r.object_id);

    let mut objects = Vec::with_capacity(reports.len());
    let mut outlines = Vec::with_capacity(reports.len());
    for (report, outline) in reports {
        objects.push(report);
        outlines.push(outline);
    }
    Ok(DetectionResult {
        objects,
        outlines,
        config: cfg.clone(),
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

fn detect_one_object<T: Real>(
    regions: &LabeledRegions,
    label: u32,
    spec: &InteractionSpec<T>,
    strategy: InitStrategy,
    replicates: usize,
    cfg: &PipelineConfig<T>,
) -> Result<(ObjectReport<T>, Vec<[T; 2]>)> {
    let cropped = crop_object(regions, label, 8);
    let dims = cropped.mask.dims().to_vec();
    let region: Vec<usize> = cropped
        .mask
        .bits()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i)
        .collect();
    let offset: Vec<T> = cropped.offset.iter().map(|&o| real(o as f64)).collect();
    let to_global = |p: &[T]| -> Vec<T> {
        p.iter().zip(&offset).map(|(&x, &o)| x + o).collect()
    };

    let dt_in: ScalarField<T> = distance_transform(&cropped.mask.not())?;
    let lambda = region
        .iter()
        .map(|&lin| dt_in.values()[lin])
        .fold(T::zero(), T::max);
    let contour = curvature(&trace_contour(&cropped.mask), real(2.0));
    let outline: Vec<[T; 2]> = contour
        .vertices
        .iter()
        .map(|v| [v[0] + offset[0], v[1] + offset[1]])
        .collect();

    if let Some((local_centroid, reason)) = short_circuit(&region, &dims, &contour, lambda, cfg) {
        let seed = SeedPoint {
            position: to_global(&local_centroid),
            support: region.len(),
            object_id: label,
            replicate_id: None,
        };
        return Ok((
            ObjectReport {
                object_id: label,
                seeds: vec![seed],
                diagnostic: ObjectDiagnostic::ShortCircuit {
                    reason: reason.to_string(),
                },
                particles: Vec::new(),
            },
            outline,
        ));
    }

    let potential = confining_from_mask(&cropped.mask, cfg.lambda_max, true, real(1.0))?;
    let balance = force_balance_ratio(&potential, &region, spec.ra);
    if balance > real(10.0) || balance < real(0.1) {
        log::warn!(
            "object {label}: confining/repulsive force ratio {balance:.2} outside [0.1, 10]"
        );
    }

    let ell = cfg.ell.unwrap_or(spec.ra);
    let (params, solver_scale) = to_solver_space(spec, ell)?;

    let candidates = if strategy == InitStrategy::CvxHullCoc {
        let bridged = convex_hull_negative_runs(&contour, real(2.0));
        let kappa_min = T::one() / (real::<T>(4.0) * cfg.lambda_max);
        let cand = centers_of_curvature(
            &bridged,
            &cropped.mask,
            &potential,
            kappa_min,
            (cfg.v_min, cfg.v_max),
        );
        if cand.points.is_empty() {
            log::warn!("object {label}: no curvature candidates; using uniform-random init");
            None
        } else {
            Some(cand)
        }
    } else {
        None
    };
    let effective_strategy = match (strategy, &candidates) {
        (InitStrategy::CvxHullCoc, None) => InitStrategy::UniformRandom,
        (s, _) => s,
    };

    let solver_cfg = cfg.solver_config();
    let confinement = GridConfinement {
        potential: &potential,
        solver_scale,
    };

    let mut replicate_seeds: Vec<Vec<SeedPoint<T>>> = Vec::with_capacity(replicates);
    let mut stats = Vec::with_capacity(replicates);
    let mut first_positions: Vec<Vec<T>> = Vec::new();
    for rep in 0..replicates as u32 {
        let init = InitConfig {
            rs: cfg.rs,
            strategy: effective_strategy,
            beta: cfg.beta,
            s0: cfg.s0,
            mass: cfg.mass,
            v_band: (cfg.v_min, cfg.v_max),
            rng_seed: derive_seed(cfg.rng_seed, label, rep),
        };
        let system = init_particles(
            &region,
            &dims,
            &potential,
            candidates.as_ref(),
            &init,
            solver_scale,
        )?;
        let particles = system.len();
        let state: TrajectoryState<T> = integrate(system, &confinement, &params, &solver_cfg)?;
        stats.push(ReplicateStats {
            replicate_id: rep,
            converged: state.converged,
            steps: state.step_count,
            rejected: state.rejected_steps,
            final_t: state.t,
            particles,
        });
        if rep == 0 {
            first_positions = (0..state.system.len())
                .map(|i| {
                    let p: Vec<T> = state
                        .system
                        .position(i)
                        .iter()
                        .map(|&x| x / solver_scale)
                        .collect();
                    to_global(&p)
                })
                .collect();
        }
        let seeds: Vec<SeedPoint<T>> = extract_seeds(&state, spec, solver_scale, label, rep)
            .into_iter()
            .map(|mut s| {
                s.position = to_global(&s.position);
                s
            })
            .collect();
        replicate_seeds.push(seeds);
    }

    let seeds = if replicates > 1 {
        consensus(
            &replicate_seeds,
            &ConsensusConfig {
                replicates,
                min_support_fraction: cfg.consensus_min_support,
                link_radius: cfg.consensus_link_radius.unwrap_or(spec.r0),
            },
        )
    } else {
        replicate_seeds.into_iter().next().unwrap()
    };
    let particles_n = stats.first().map_or(0, |s: &ReplicateStats<T>| s.particles);
    Ok((
        ObjectReport {
            object_id: label,
            seeds,
            diagnostic: ObjectDiagnostic::Simulated {
                particles: particles_n,
                replicates: stats,
            },
            particles: first_positions,
        },
        outline,
    ))
}

/// Per-axis affine map between raw data coordinates and grid cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxisTransform<T> {
    /// raw → scaled: scaled = raw · factor (factor = axis_scale/std).
    pub factor: Vec<T>,
    /// Scaled-space lower range edges.
    pub lo: Vec<T>,
    /// Common cubic cell width in scaled space.
    pub cell_width: T,
}

impl<T: Real> AxisTransform<T> {
    pub fn cell_to_raw(&self, cell: &[T]) -> Vec<T> {
        let half = real::<T>(0.5);
        cell.iter()
            .enumerate()
            .map(|(axis, &c)| (self.lo[axis] + (c + half) * self.cell_width) / self.factor[axis])
            .collect()
    }

    pub fn raw_to_cell(&self, raw: &[T]) -> Vec<T> {
        let half = real::<T>(0.5);
        raw.iter()
            .enumerate()
            .map(|(axis, &x)| (x * self.factor[axis] - self.lo[axis]) / self.cell_width - half)
            .collect()
    }
}

/// Detection output for scatter data plus the grid transform used.
pub struct ScatterDetection<T> {
    pub result: DetectionResult<T>,
    pub transform: AxisTransform<T>,
    pub support: BinaryMask,
    pub counts: ScalarField<T>,
}

/// Locate cluster centers in n-D scatter points: per-axis standardization,
/// binning on a cubic grid, density-derived confining potential, replicate
/// SALR runs and consensus; seeds return in the original data units.
pub fn detect_scatter<T: Real>(
    points: &[Vec<T>],
    cfg: &PipelineConfig<T>,
) -> Result<ScatterDetection<T>> {
    let Some(first) = points.first() else {
        return Err(Error::InvalidParameter("no points".into()));
    };
    let n = first.len();
    if n < 2 {
        return Err(Error::ShapeMismatch("scatter data needs >= 2 dimensions".into()));
    }
    let started = Instant::now();

    // Per-axis scale: 1/std (when enabled) times the optional user factor.
    let count = real::<T>(points.len() as f64);
    let mut factor = vec![T::one(); n];
    if cfg.scale_by_std {
        for axis in 0..n {
            let mean = points.iter().map(|p| p[axis]).sum::<T>() / count;
            let var = points
                .iter()
                .map(|p| (p[axis] - mean) * (p[axis] - mean))
                .sum::<T>()
                / count;
            let std = var.sqrt();
            if std > T::zero() {
                factor[axis] = T::one() / std;
            }
        }
    }
    if let Some(user) = &cfg.axis_scale {
        if user.len() != n {
            return Err(Error::ShapeMismatch(
                "axis_scale length must match the data dimension".into(),
            ));
        }
        for (f, &u) in factor.iter_mut().zip(user) {
            *f = *f * u;
        }
    }
    let scaled: Vec<Vec<T>> = points
        .iter()
        .map(|p| p.iter().enumerate().map(|(a, &x)| x * factor[a]).collect())
        .collect();

    // Cubic cells: common width from the widest axis at the bin budget.
    let mut lo = vec![T::infinity(); n];
    let mut hi = vec![T::neg_infinity(); n];
    for p in &scaled {
        for axis in 0..n {
            lo[axis] = lo[axis].min(p[axis]);
            hi[axis] = hi[axis].max(p[axis]);
        }
    }
    let bins_budget = real::<T>(cfg.bins_per_axis as f64);
    let width = (0..n)
        .map(|a| (hi[a] - lo[a]) / bins_budget)
        .fold(T::zero(), T::max);
    if !(width > T::zero()) {
        return Err(Error::InvalidParameter("degenerate point extent".into()));
    }
    let mut bins = Vec::with_capacity(n);
    let mut range = Vec::with_capacity(n);
    for axis in 0..n {
        let extent = hi[axis] - lo[axis];
        let b = (extent / width).ceil().to_usize().unwrap().max(2);
        bins.push(b);
        range.push((lo[axis], lo[axis] + real::<T>(b as f64) * width));
    }
    let binned = bin_points(&scaled, &bins, &range)?;
    let transform = AxisTransform {
        factor,
        lo,
        cell_width: width,
    };

    let density_cfg = DensityPotentialConfig {
        smooth_sigma: cfg.density_smooth_sigma,
        support_threshold: cfg.density_threshold,
        grad_percentile: cfg.grad_percentile,
        grad_target: cfg.grad_target,
        floor: None,
    };
    let dp = confining_from_density(&binned.counts, &density_cfg)?;
    let potential = dp.potential;
    let support = dp.support;
    let region: Vec<usize> = support
        .bits()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i)
        .collect();

    // Interaction scales convert from scaled-data units to cells; the
    // solver frame defaults to cell space (ℓ = ra in cells) and an explicit
    // ℓ rescales the problem so small attractive extents stay fittable.
    let spec_cells = InteractionSpec::new(cfg.d0, cfg.r0 / width, cfg.ra / width)?;
    let ell = cfg.ell.unwrap_or(spec_cells.ra);
    let (params, solver_scale) = to_solver_space(&spec_cells, ell)?;

    let balance = force_balance_ratio(&potential, &region, spec_cells.ra);
    if balance > real(10.0) || balance < real(0.1) {
        log::warn!("scatter: confining/repulsive force ratio {balance:.2} outside [0.1, 10]");
    }

    let strategy = match cfg.strategy {
        Some(InitStrategy::CvxHullCoc) | None => InitStrategy::UniformRandom,
        Some(s) => s,
    };
    if matches!(cfg.strategy, Some(InitStrategy::CvxHullCoc)) {
        log::warn!("curvature initialization is image-only; using uniform-random");
    }
    let replicates = cfg.replicates.unwrap_or(5).max(1);
    let solver_cfg = cfg.solver_config();
    let confinement = GridConfinement {
        potential: &potential,
        solver_scale,
    };
    let dims = support.dims().to_vec();

    let runs: Vec<(ReplicateStats<T>, Vec<SeedPoint<T>>, Vec<Vec<T>>)> = (0..replicates as u32)
        .into_par_iter()
        .map(|rep| {
            let init = InitConfig {
                rs: cfg.rs / width,
                strategy,
                beta: cfg.beta,
                s0: cfg.s0,
                mass: cfg.mass,
                v_band: (cfg.v_min, cfg.v_max),
                rng_seed: derive_seed(cfg.rng_seed, 0, rep),
            };
            let system = init_particles(&region, &dims, &potential, None, &init, solver_scale)?;
            let particles = system.len();
            let state = integrate(system, &confinement, &params, &solver_cfg)?;
            let stats = ReplicateStats {
                replicate_id: rep,
                converged: state.converged,
                steps: state.step_count,
                rejected: state.rejected_steps,
                final_t: state.t,
                particles,
            };
            let final_cells: Vec<Vec<T>> = (0..state.system.len())
                .map(|i| {
                    state
                        .system
                        .position(i)
                        .iter()
                        .map(|&x| x / solver_scale)
                        .collect()
                })
                .collect();
            let seeds = extract_seeds(&state, &spec_cells, solver_scale, 0, rep);
            Ok((stats, seeds, final_cells))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut stats = Vec::new();
    let mut replicate_seeds = Vec::new();
    let mut first_positions = Vec::new();
    for (rep, (s, seeds, cells)) in runs.into_iter().enumerate() {
        if rep == 0 {
            first_positions = cells
                .iter()
                .map(|c| transform.cell_to_raw(c))
                .collect();
        }
        stats.push(s);
        replicate_seeds.push(seeds);
    }

    let link_cells = cfg.consensus_link_radius.unwrap_or(cfg.r0) / width;
    let seeds_cells = if replicates > 1 {
        consensus(
            &replicate_seeds,
            &ConsensusConfig {
                replicates,
                min_support_fraction: cfg.consensus_min_support,
                link_radius: link_cells,
            },
        )
    } else {
        replicate_seeds.into_iter().next().unwrap()
    };
    let seeds: Vec<SeedPoint<T>> = seeds_cells
        .into_iter()
        .map(|mut s| {
            s.position = transform.cell_to_raw(&s.position);
            s
        })
        .collect();

    let particles_n = stats.first().map_or(0, |s| s.particles);
    let result = DetectionResult {
        objects: vec![ObjectReport {
            object_id: 0,
            seeds,
            diagnostic: ObjectDiagnostic::Simulated {
                particles: particles_n,
                replicates: stats,
            },
            particles: first_positions,
        }],
        outlines: Vec::new(),
        config: cfg.clone(),
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    };
    Ok(ScatterDetection {
        result,
        transform,
        support,
        counts: binned.counts,
    })
}

/// The "Dist. Trans." baseline: full-neighborhood local maxima of the
/// interior distance transform, plateaus merged to centroids, per object.
pub fn run_baseline_dt_maxima<T: Real>(mask: &BinaryMask) -> Result<Vec<SeedPoint<T>>> {
    if !mask.any() {
        return Err(Error::EmptyMask);
    }
    let dt: ScalarField<T> = distance_transform(&mask.not())?;
    let regions = connected_components(mask);
    let mut seeds = Vec::new();
    for label in 1..=regions.count() as u32 {
        let region_mask = regions.region_mask(label);
        for c in local_maxima(&dt, &region_mask) {
            seeds.push(SeedPoint {
                position: c,
                support: 1,
                object_id: label,
                replicate_id: None,
            });
        }
    }
    Ok(seeds)
}

/// One method's evaluation: F₁ curve, FD histogram, per-object counts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalPart<T> {
    pub f1_curve: Vec<(T, T)>,
    pub fd: BTreeMap<i64, T>,
    pub f1_at_fd_delta: T,
    pub per_object: Vec<ObjectEval>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectEval {
    pub object_id: u32,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Benchmark report for the SALR seeds and (optionally) the DT baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub method: EvalPart<T>,
    pub baseline: Option<EvalPart<T>>,
    /// Matching radius used for the FD histogram and per-object counts.
    pub fd_delta_r: T,
}

fn eval_part<T: Real>(
    seeds: &[SeedPoint<T>],
    truth: &TruthSet<T>,
    delta_rs: &[T],
    fd_delta_r: T,
) -> Result<EvalPart<T>> {
    let mut by_object: BTreeMap<u32, Vec<Vec<T>>> = BTreeMap::new();
    for s in seeds {
        by_object
            .entry(s.object_id)
            .or_default()
            .push(s.position.clone());
    }
    let missing: Vec<u32> = by_object
        .keys()
        .filter(|id| !truth.objects.contains_key(id))
        .cloned()
        .collect();
    let extra: Vec<u32> = truth
        .objects
        .keys()
        .filter(|id| !by_object.contains_key(id))
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::IdMismatch(format!(
            "seeds without truth: {missing:?}; truth without seeds: {extra:?}"
        )));
    }

    let pairs: Vec<(Vec<Vec<T>>, Vec<Vec<T>>)> = truth
        .objects
        .iter()
        .map(|(id, truths)| (by_object[id].clone(), truths.clone()))
        .collect();
    let curve = f1_curve(&pairs, delta_rs);
    let outcomes: Vec<MatchOutcome> = pairs
        .iter()
        .map(|(s, t)| match_seeds(s, t, fd_delta_r))
        .collect();
    let fd = fd_histogram(&outcomes, (-2, 2));
    let f1_at = f1(&aggregate(&outcomes)).unwrap_or_else(|_| T::zero());
    let per_object = truth
        .objects
        .keys()
        .zip(&outcomes)
        .map(|(&object_id, o)| ObjectEval {
            object_id,
            tp: o.tp,
            fp: o.fp,
            fn_: o.fn_,
        })
        .collect();
    Ok(EvalPart {
        f1_curve: curve,
        fd,
        f1_at_fd_delta: f1_at,
        per_object,
    })
}

/// Assemble the benchmark report; `baseline` seeds are evaluated on the
/// same truth when provided.
pub fn benchmark<T: Real>(
    seeds: &[SeedPoint<T>],
    truth: &TruthSet<T>,
    delta_rs: &[T],
    baseline: Option<&[SeedPoint<T>]>,
    fd_delta_r: Option<T>,
) -> Result<EvalReport<T>> {
    if delta_rs.is_empty() {
        return Err(Error::InvalidParameter("empty delta_r list".into()));
    }
    let fd_dr = fd_delta_r.unwrap_or_else(|| real(3.0));
    Ok(EvalReport {
        method: eval_part(seeds, truth, delta_rs, fd_dr)?,
        baseline: baseline
            .map(|b| eval_part(b, truth, delta_rs, fd_dr))
            .transpose()?,
        fd_delta_r: fd_dr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_match_parameter_table() {
        let cfg = PipelineConfig::<f64>::default();
        assert_eq!(cfg.rs, 5.0);
        assert_eq!(cfg.lambda_max, 18.0);
        assert_eq!(cfg.ra, 13.0);
        assert_eq!(cfg.r0, 2.0);
        assert_eq!(cfg.d0, -1.0);
        assert_eq!(cfg.v_max, 0.2);
        assert!((cfg.beta - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(cfg.alpha_rate, 5e-4);
        assert_eq!(cfg.s0, 0.01);
        assert_eq!(cfg.mass, 1.0);
        assert_eq!(cfg.k, 1.0);
    }

    #[test]
    fn config_parses_fractions_and_rejects_unknown_keys() {
        let cfg = PipelineConfig::<f64>::from_kv_text(
            "rs = 4\nv_max = 1/5\nbeta = 1/3\nmetric_p = inf\n# comment\n",
        )
        .unwrap();
        assert_eq!(cfg.rs, 4.0);
        assert_eq!(cfg.v_max, 0.2);
        assert!(cfg.metric_p.is_infinite());
        assert!(PipelineConfig::<f64>::from_kv_text("bogus = 1\n").is_err());
    }

    #[test]
    fn blank_image_errors() {
        let image = ScalarField::filled(&[32, 32], 0.0f64);
        assert!(detect_image(&image, &PipelineConfig::default()).is_err());
    }

    #[test]
    fn fraction_parser() {
        assert_eq!(parse_fraction("1/5"), Some(0.2));
        assert_eq!(parse_fraction("-1"), Some(-1.0));
        assert_eq!(parse_fraction("5e-4"), Some(5e-4));
        assert_eq!(parse_fraction("1/0"), None);
    }
}
