//! Grid objects built from a validated config.

use std::sync::Arc;

use alpha_measure::grid::io::{read_field_csv, read_mask_csv};
use alpha_measure::grid::{classify_domain, ComplexGrid, DomainMask, DomainSpec, NodeClass, NodeSet, Shape};
use alpha_measure::measure::WeightSpec;
use alpha_measure::operator::{
    assemble_operator, form_to_effective_coeffs, read_coeff_csv, AlphaForm, Coeffs, DiscreteOperator, PrintedForm,
};
use num_complex::Complex64;

use crate::config::{GridConfig, ScenarioConfig};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: Arc<ComplexGrid>,
    pub mask: Arc<DomainMask>,
    pub alpha: AlphaForm,
    pub k: NodeSet,
    pub weight: WeightSpec,
}

impl Scenario {
    /// Builds everything but the operator, collecting one message per
    /// failing part.
    pub fn build(cfg: &ScenarioConfig) -> Result<Self, Vec<String>> {
        Self::build_on(cfg, &cfg.grid)
    }

    /// As [`Scenario::build`] with the grid replaced, for refinement.
    pub fn build_on(cfg: &ScenarioConfig, grid_cfg: &GridConfig) -> Result<Self, Vec<String>> {
        let grid = grid_cfg.build().map_err(|e| vec![format!("grid: {e}")])?;
        let mut errs = Vec::new();
        let mask = match (&cfg.domain.shape, &cfg.domain.mask_path) {
            (Some(shape), _) => {
                let spec = if cfg.domain.cut_cells {
                    DomainSpec::shape(shape.clone())
                } else {
                    DomainSpec::snapped(shape.clone())
                };
                classify_domain(&grid, &spec)
            }
            (None, Some(p)) => read_mask_csv(&cfg.resolve(p), &grid),
            (None, None) => unreachable!("checked structurally"),
        }
        .map(Arc::new)
        .map_err(|e| errs.push(format!("domain: {e}")))
        .ok();
        let alpha = build_alpha(cfg, &grid)
            .map_err(|e| errs.push(format!("alpha: {e}")))
            .ok();
        let Some(mask) = mask else {
            return Err(errs);
        };
        let k = build_k(cfg, &mask).map_err(|e| errs.push(format!("k: {e}"))).ok();
        let weight = build_weight(cfg, &grid).map_err(|e| errs.push(format!("weight: {e}"))).ok();
        if let (Some(k), Some(w)) = (&k, &weight) {
            if !k.is_empty() {
                let sup = w.sup_on(k);
                if !(sup < 0.0) {
                    errs.push(format!("sup ψ < 0 required (sup over K is {sup})"));
                }
            }
        }
        match (alpha, k, weight) {
            (Some(alpha), Some(k), Some(weight)) if errs.is_empty() => Ok(Scenario {
                grid,
                mask,
                alpha,
                k,
                weight,
            }),
            _ => Err(errs),
        }
    }

    pub fn operator(&self) -> alpha_measure::Result<Arc<DiscreteOperator>> {
        assemble_operator(&self.alpha, &self.mask).map(Arc::new)
    }

    /// Count of interior nodes outside `K`, the unknowns of a direct solve.
    pub fn unknowns(&self) -> usize {
        self.mask.interior().iter().filter(|&&i| !self.k.contains(i)).count()
    }
}

fn build_alpha(cfg: &ScenarioConfig, grid: &Arc<ComplexGrid>) -> alpha_measure::Result<AlphaForm> {
    let n = cfg.grid.n;
    let a = &cfg.alpha;
    let form = if let Some(e) = &a.effective {
        let c = if n == 1 {
            Coeffs::scalar(e.a11)
        } else {
            Coeffs {
                a11: e.a11,
                a22: e.a22,
                a12: Complex64::new(e.a12_re, e.a12_im),
            }
        };
        AlphaForm::constant(n, c)?
    } else if let Some(m) = &a.printed {
        let m = m
            .iter()
            .map(|row| row.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
            .collect();
        form_to_effective_coeffs(&PrintedForm::Constant(m), n)?
    } else {
        let p = a.csv_path.as_ref().expect("checked structurally");
        read_coeff_csv(&cfg.resolve(p), grid)?
    };
    form.with_scale(a.scale)
}

fn build_k(cfg: &ScenarioConfig, mask: &DomainMask) -> alpha_measure::Result<NodeSet> {
    let kc = &cfg.k;
    let label = kc.label.clone();
    if let Some(shapes) = &kc.shapes {
        let shape = match shapes.as_slice() {
            [one] => one.clone(),
            many => Shape::Union { parts: many.to_vec() },
        };
        Ok(NodeSet::from_shape(mask, &shape, label))
    } else if let Some(points) = &kc.points {
        NodeSet::from_points(mask, points, label)
    } else if let Some(nodes) = &kc.nodes {
        NodeSet::new(mask, nodes.clone(), label)
    } else {
        let p = kc.mask_path.as_ref().expect("checked structurally");
        let km = read_mask_csv(&cfg.resolve(p), mask.grid())?;
        let idx = (0..mask.grid().len()).filter(|&i| km.class(i) == NodeClass::Interior).collect();
        NodeSet::new(mask, idx, label)
    }
}

fn build_weight(cfg: &ScenarioConfig, grid: &Arc<ComplexGrid>) -> alpha_measure::Result<WeightSpec> {
    let w = &cfg.weight;
    let spec = if let Some(c) = w.constant {
        WeightSpec::constant(grid.clone(), c)?
    } else if let Some(e) = &w.expression {
        let ext = alpha_measure::grid::GridFunction::from_fn(grid.clone(), |x| e.eval(x));
        WeightSpec::new(ext, e.label())
    } else if let Some(p) = &w.field_path {
        let full = cfg.resolve(p);
        WeightSpec::new(read_field_csv(&full, grid)?, full.display().to_string())
    } else {
        WeightSpec::unit(grid.clone())
    };
    match w.holder {
        Some(hd) => spec.with_holder(hd.c, hd.lambda),
        None => Ok(spec),
    }
}
