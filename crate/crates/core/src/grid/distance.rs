use super::{ComplexGrid, GridFunction, NodeSet};
use crate::error::{Error, Result};

/// Exact nearest-node distance to a node set.
#[derive(Debug, Clone)]
pub struct DistanceField {
    /// `dist(z, K)` in physical units.
    pub dist: GridFunction,
    /// Squared distance in lattice units (exact integers).
    pub dist2: Vec<u64>,
    /// A nearest K node per grid node; ties go to the lowest index.
    pub nearest: Vec<usize>,
}

const UNSET: u64 = u64::MAX;

/// One separable pass: `g[x] = min_y f[y] + (x - y)^2`, ties resolved to
/// the smallest carried feature index.
fn pass_line(f: &[u64], feat: &[usize], g: &mut [u64], gfeat: &mut [usize]) {
    let len = f.len();
    for x in 0..len {
        let mut best = UNSET;
        let mut best_feat = usize::MAX;
        for r in 0..len {
            let r2 = (r * r) as u64;
            if best != UNSET && r2 > best {
                break;
            }
            let mut consider = |y: usize| {
                if f[y] == UNSET {
                    return;
                }
                let c = f[y] + r2;
                if c < best || (c == best && feat[y] < best_feat) {
                    best = c;
                    best_feat = feat[y];
                }
            };
            if r <= x {
                consider(x - r);
            }
            if r > 0 && x + r < len {
                consider(x + r);
            }
        }
        g[x] = best;
        gfeat[x] = best_feat;
    }
}

pub fn distance_field(grid: &std::sync::Arc<ComplexGrid>, k: &NodeSet) -> Result<DistanceField> {
    if k.is_empty() {
        return Err(Error::NodeSet("distance to an empty set is undefined".into()));
    }
    let n = grid.len();
    let mut d2 = vec![UNSET; n];
    let mut feat = vec![usize::MAX; n];
    for &i in k.indices() {
        if i >= n {
            return Err(Error::NodeSet(format!("node {i} is off the grid")));
        }
        d2[i] = 0;
        feat[i] = i;
    }
    for a in 0..grid.dim() {
        let stride = grid.strides()[a];
        let ext = grid.extents()[a];
        let mut f = vec![0u64; ext];
        let mut ff = vec![0usize; ext];
        let mut g = vec![0u64; ext];
        let mut gf = vec![0usize; ext];
        for start in 0..n {
            if (start / stride) % ext != 0 {
                continue;
            }
            for x in 0..ext {
                f[x] = d2[start + x * stride];
                ff[x] = feat[start + x * stride];
            }
            pass_line(&f, &ff, &mut g, &mut gf);
            for x in 0..ext {
                d2[start + x * stride] = g[x];
                feat[start + x * stride] = gf[x];
            }
        }
    }
    let h = grid.h();
    let dist = d2.iter().map(|&v| (v as f64).sqrt() * h).collect();
    Ok(DistanceField {
        dist: GridFunction::new(grid.clone(), dist)?,
        dist2: d2,
        nearest: feat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, classify_domain, DomainSpec, Shape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// All-pairs scan in lattice units.
    fn brute_force(grid: &ComplexGrid, k: &[usize]) -> (Vec<u64>, Vec<usize>) {
        let mut d = vec![u64::MAX; grid.len()];
        let mut w = vec![usize::MAX; grid.len()];
        for z in 0..grid.len() {
            for &kk in k {
                let dd = grid.lattice_dist2(z, kk);
                if dd < d[z] || (dd == d[z] && kk < w[z]) {
                    d[z] = dd;
                    w[z] = kk;
                }
            }
        }
        (d, w)
    }

    #[test]
    fn single_node() {
        let g = build_grid(2, &[5; 4], 0.25, &[-0.5; 4]).unwrap();
        let m = classify_domain(&g, &DomainSpec::shape(Shape::origin_ball(4, 0.4))).unwrap();
        let o = g.nearest_node(&[0.0; 4]);
        let k = NodeSet::new(&m, vec![o], "o").unwrap();
        let df = distance_field(&g, &k).unwrap();
        let q = g.nearest_node(&[0.25, 0.0, 0.0, 0.0]);
        assert_eq!(df.dist.get(q), 0.25);
        assert_eq!(df.nearest[q], o);
    }

    #[test]
    fn quarter_disc_distance_at_half() {
        let g = build_grid(1, &[65, 65], 1.0 / 32.0, &[-1.0, -1.0]).unwrap();
        let m = classify_domain(&g, &DomainSpec::shape(Shape::origin_ball(2, 1.0))).unwrap();
        let k = NodeSet::from_shape(&m, &Shape::origin_ball(2, 0.25), "K");
        let df = distance_field(&g, &k).unwrap();
        let h = g.h();
        for p in [[0.5, 0.0], [0.0, -0.5], [0.34375, 0.375]] {
            let i = g.nearest_node(&p);
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((df.dist.get(i) - (r - 0.25)).abs() <= h, "{p:?}");
        }
    }

    #[test]
    fn matches_brute_force_on_random_sets() {
        let g = build_grid(1, &[65, 65], 1.0 / 32.0, &[-1.0, -1.0]).unwrap();
        let m = classify_domain(&g, &DomainSpec::shape(Shape::origin_ball(2, 1.0))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..4 {
            let count = [1, 3, 20, 200][trial];
            let idx: Vec<usize> = (0..count)
                .map(|_| m.interior()[rng.random_range(0..m.interior().len())])
                .collect();
            let k = NodeSet::new(&m, idx, "rand").unwrap();
            let df = distance_field(&g, &k).unwrap();
            let (d, w) = brute_force(&g, k.indices());
            assert_eq!(df.dist2, d);
            assert_eq!(df.nearest, w);
        }
    }

    #[test]
    fn matches_brute_force_in_four_dimensions() {
        let g = build_grid(2, &[7; 4], 0.5, &[-1.5; 4]).unwrap();
        let m = classify_domain(&g, &DomainSpec::shape(Shape::origin_ball(4, 1.2))).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let idx: Vec<usize> = (0..6)
            .map(|_| m.interior()[rng.random_range(0..m.interior().len())])
            .collect();
        let k = NodeSet::new(&m, idx, "rand").unwrap();
        let df = distance_field(&g, &k).unwrap();
        let (d, w) = brute_force(&g, k.indices());
        assert_eq!(df.dist2, d);
        assert_eq!(df.nearest, w);
    }

    #[test]
    fn empty_set_is_an_error() {
        let g = build_grid(1, &[5, 5], 0.5, &[-1.0, -1.0]).unwrap();
        assert!(distance_field(&g, &NodeSet::empty("e")).is_err());
    }
}
