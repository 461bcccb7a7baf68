//! Hölder moduli of grid fields: stratified pair sampling, log-log fits of
//! bin-wise maximal oscillation, and the one-sided estimate near `K`.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{distance_field, DomainMask, GridFunction, NodeSet, Shape, MAX_DIM};
use crate::measure::{InequalityReport, WeightSpec};

/// Slack of the exponent relation in [`global_holder_report`].
pub const EXPONENT_SLACK: f64 = 0.15;
/// Smallest accepted pair budget.
pub const MIN_PAIR_BUDGET: usize = 100;
/// Bins wider than this fraction of the largest edge are left out of fits.
pub const FIT_SPAN_FRACTION: f64 = 0.125;
/// Default collar width around `K` in grid units.
pub const DEFAULT_COLLAR_STEPS: f64 = 8.0;

/// One sampled pair: separation in grid units and `|f(z') - f(z'')|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusPair {
    pub separation: f64,
    pub oscillation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusSample {
    pub region: Shape,
    pub h: f64,
    /// Dyadic bin edges in grid units, `1, 2, 4, …`.
    pub edges: Vec<f64>,
    pub pairs: Vec<ModulusPair>,
}

impl ModulusSample {
    /// Per bin: the pair of largest oscillation, if the bin has any pair.
    pub fn bin_maxima(&self) -> Vec<Option<ModulusPair>> {
        let nb = self.edges.len() - 1;
        let mut best: Vec<Option<ModulusPair>> = vec![None; nb];
        for p in &self.pairs {
            let b = bin_of(&self.edges, p.separation);
            if let Some(b) = b {
                if best[b].map_or(true, |q| p.oscillation > q.oscillation) {
                    best[b] = Some(*p);
                }
            }
        }
        best
    }

    /// CSV `separation,oscillation` (separation in grid units).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("separation,oscillation\n");
        for p in &self.pairs {
            s.push_str(&format!("{:?},{:?}\n", p.separation, p.oscillation));
        }
        std::fs::write(path, s)?;
        Ok(())
    }
}

fn bin_of(edges: &[f64], s: f64) -> Option<usize> {
    (0..edges.len() - 1).find(|&b| s >= edges[b] && s < edges[b + 1])
}

/// Samples `pair_budget` node pairs of `region` (which must lie in the
/// interior of `mask`), split evenly across dyadic separation bins from one
/// grid step to the region diameter. Each bin draws from its own stream
/// seeded by `(seed, bin)`, so the sample does not depend on scheduling.
pub fn sample_modulus(
    field: &GridFunction,
    mask: &DomainMask,
    region: &Shape,
    pair_budget: usize,
    seed: u64,
) -> Result<ModulusSample> {
    field.ensure_same_grid(mask.grid())?;
    if pair_budget < MIN_PAIR_BUDGET {
        return Err(Error::input(format!("pair budget must be at least {MIN_PAIR_BUDGET}")));
    }
    let grid = mask.grid();
    let dim = grid.dim();
    let mut p = [0.0; MAX_DIM];
    let mut member = vec![false; grid.len()];
    let mut nodes = Vec::new();
    for i in 0..grid.len() {
        grid.point_into(i, &mut p);
        if region.contains_open(&p[..dim]) {
            if !mask.is_interior(i) {
                return Err(Error::input(format!("sampling region leaves the interior at node {i}")));
            }
            member[i] = true;
            nodes.push(i);
        }
    }
    if nodes.len() < 2 {
        return Err(Error::input("sampling region holds fewer than two nodes"));
    }
    let mut lo = [usize::MAX; MAX_DIM];
    let mut hi = [0usize; MAX_DIM];
    for &i in &nodes {
        let l = grid.lattice(i);
        for a in 0..dim {
            lo[a] = lo[a].min(l[a]);
            hi[a] = hi[a].max(l[a]);
        }
    }
    let diameter = (0..dim).map(|a| ((hi[a] - lo[a]) as f64).powi(2)).sum::<f64>().sqrt();
    let mut edges = vec![1.0];
    while edges.last().unwrap() * 2.0 <= diameter {
        edges.push(edges.last().unwrap() * 2.0);
    }
    let nb = edges.len() - 1;
    if nb < 3 {
        return Err(Error::input(format!("sampling region spans only {nb} separation bins, need 3")));
    }
    let quota = pair_budget.div_ceil(nb);
    let values = field.values();
    let per_bin: Vec<Vec<ModulusPair>> = (0..nb)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (b as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let (lo_s, hi_s) = (edges[b], edges[b + 1]);
            // Anchors cycle through a shuffled node order so that small bins
            // cover the region evenly instead of clustering.
            let mut anchors = nodes.clone();
            anchors.shuffle(&mut rng);
            let mut out = Vec::with_capacity(quota);
            let mut attempts = 0;
            while out.len() < quota && attempts < 200 * quota {
                let a = anchors[attempts % anchors.len()];
                attempts += 1;
                let la = grid.lattice(a);
                let mut dir = [0.0; MAX_DIM];
                let norm = loop {
                    let mut n2 = 0.0f64;
                    for d in dir.iter_mut().take(dim) {
                        *d = rng.random_range(-1.0..1.0);
                        n2 += *d * *d;
                    }
                    if n2 > 1e-6 && n2 <= 1.0 {
                        break n2.sqrt();
                    }
                };
                let len = (lo_s.ln() + rng.random::<f64>() * (hi_s / lo_s).ln()).exp();
                let mut off = [0i64; MAX_DIM];
                for k in 0..dim {
                    off[k] = (dir[k] / norm * len).round() as i64;
                }
                let sep = off[..dim].iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
                if sep < lo_s || sep >= hi_s {
                    continue;
                }
                let target: Option<Vec<usize>> = (0..dim)
                    .map(|k| {
                        let v = la[k] as i64 + off[k];
                        (v >= 0).then_some(v as usize)
                    })
                    .collect();
                let Some(bnode) = target.and_then(|t| grid.index(&t)) else {
                    continue;
                };
                if !member[bnode] {
                    continue;
                }
                out.push(ModulusPair {
                    separation: sep,
                    oscillation: (values[a] - values[bnode]).abs(),
                });
            }
            out
        })
        .collect();
    Ok(ModulusSample {
        region: region.clone(),
        h: grid.h(),
        edges,
        pairs: per_bin.into_iter().flatten().collect(),
    })
}

/// `Ĉ d^λ̂` fitted to bin-wise maximal oscillation, `d` in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    pub c: f64,
    pub lambda: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    pub bins_used: usize,
    pub samples: usize,
    pub region: Shape,
    /// All sampled oscillations vanish; `c` and `lambda` are meaningless.
    pub degenerate: bool,
}

/// Least squares of `log max_osc = log C + λ log d` over the nonzero bins
/// whose upper edge is at most [`FIT_SPAN_FRACTION`] of the largest edge,
/// widened to the three narrowest nonzero bins when fewer qualify. Wider
/// bins mostly measure the total oscillation of the field.
pub fn fit_holder(sample: &ModulusSample) -> Result<HolderFit> {
    let top = sample.edges.last().copied().unwrap_or(1.0) * FIT_SPAN_FRACTION;
    let nonzero: Vec<(usize, ModulusPair)> = sample
        .bin_maxima()
        .into_iter()
        .enumerate()
        .filter_map(|(b, m)| m.filter(|p| p.oscillation > 0.0).map(|p| (b, p)))
        .collect();
    let within = nonzero.iter().filter(|(b, _)| sample.edges[b + 1] <= top).count();
    let pts: Vec<(f64, f64)> = nonzero
        .iter()
        .take(within.max(3))
        .map(|(_, p)| ((p.separation * sample.h).ln(), p.oscillation.ln()))
        .collect();
    if pts.is_empty() {
        return Ok(HolderFit {
            c: 0.0,
            lambda: 0.0,
            residual: 0.0,
            bins_used: 0,
            samples: sample.pairs.len(),
            region: sample.region.clone(),
            degenerate: true,
        });
    }
    if pts.len() < 3 {
        return Err(Error::input(format!("only {} nonzero separation bins, need 3", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let lambda = sxy / sxx;
    let intercept = my - lambda * mx;
    let residual = (pts.iter().map(|p| (p.1 - intercept - lambda * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(HolderFit {
        c: intercept.exp(),
        lambda,
        residual,
        bins_used: pts.len(),
        samples: sample.pairs.len(),
        region: sample.region.clone(),
        degenerate: false,
    })
}

#[derive(Serialize)]
struct FitExport<'a> {
    #[serde(rename = "C")]
    c: f64,
    lambda: f64,
    residual: f64,
    region: &'a Shape,
    samples_csv_path: String,
}

/// Writes `<stem>.samples.csv` and `<stem>.fit.json` with
/// `{C, lambda, residual, region, samples_csv_path}`.
pub fn export_fit(fit: &HolderFit, sample: &ModulusSample, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    let csv = stem.with_extension("samples.csv");
    let json = stem.with_extension("fit.json");
    sample.write_csv(&csv)?;
    let name = csv.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let out = FitExport {
        c: fit.c,
        lambda: fit.lambda,
        residual: fit.residual,
        region: &fit.region,
        samples_csv_path: name,
    };
    std::fs::write(&json, serde_json::to_string_pretty(&out)? + "\n")?;
    Ok((json, csv))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearKReport {
    pub report: InequalityReport,
    pub c: f64,
    pub lambda: f64,
    pub collar_width: f64,
    pub collar_nodes: usize,
}

/// `|ω(z) - ψ(w)| ≤ C dist(z, K)^λ` for interior `z ∉ K` with
/// `dist(z, K) ≤ collar_width`, `w` the nearest node of `K`.
pub fn check_near_k_condition(
    field: &GridFunction,
    mask: &DomainMask,
    k: &NodeSet,
    w: &WeightSpec,
    c: f64,
    lambda: f64,
    collar_width: f64,
) -> Result<NearKReport> {
    field.ensure_same_grid(mask.grid())?;
    if !(c > 0.0) || !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::input(format!("need C > 0 and λ in (0, 1], got C = {c}, λ = {lambda}")));
    }
    let dist = distance_field(mask.grid(), k)?;
    let collar: Vec<usize> = mask
        .interior()
        .iter()
        .copied()
        .filter(|&i| {
            let d = dist.dist.get(i);
            d > 0.0 && d <= collar_width * (1.0 + 1e-12)
        })
        .collect();
    if collar.is_empty() {
        return Err(Error::input("collar around K is empty"));
    }
    let items = collar.iter().map(|&i| {
        let d = dist.dist.get(i);
        let gap = (field.get(i) - w.psi(dist.nearest[i])).abs();
        (i, gap - c * d.powf(lambda))
    });
    let report = InequalityReport::scan("near_k_holder", 1e-9, items);
    Ok(NearKReport {
        report,
        c,
        lambda,
        collar_width,
        collar_nodes: collar.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalHolderReport {
    /// Exponent of the weight (1 for constant weights).
    pub lambda1: f64,
    /// Exponent verified near `K`.
    pub lambda_near: f64,
    pub lambda_collar_fit: Option<f64>,
    pub lambda_global: Option<f64>,
    /// `min(λ, λ₁) - slack`.
    pub required: f64,
    pub slack: f64,
    pub near_k_passed: bool,
    pub vacuous: bool,
    pub passed: bool,
}

/// Packages the weight exponent, the near-`K` estimate and the global fit,
/// and checks `λ̂_global ≥ min(λ, λ₁) - slack`. A degenerate global fit
/// passes vacuously.
pub fn global_holder_report(
    w: &WeightSpec,
    near_k: &NearKReport,
    collar_fit: &HolderFit,
    global_fit: &HolderFit,
) -> Result<GlobalHolderReport> {
    let lambda1 = w
        .holder()
        .map(|h| h.lambda)
        .ok_or_else(|| Error::input("weight carries no Hölder exponent"))?;
    let required = near_k.lambda.min(lambda1) - EXPONENT_SLACK;
    let vacuous = global_fit.degenerate;
    let lambda_global = (!vacuous).then_some(global_fit.lambda);
    let near_k_passed = near_k.report.passed();
    let passed = vacuous || (near_k_passed && global_fit.lambda >= required);
    Ok(GlobalHolderReport {
        lambda1,
        lambda_near: near_k.lambda,
        lambda_collar_fit: (!collar_fit.degenerate).then_some(collar_fit.lambda),
        lambda_global,
        required,
        slack: EXPONENT_SLACK,
        near_k_passed,
        vacuous,
        passed,
    })
}
