//! Weighted k-means reduction of load scenarios.
//!
//! Clustering runs on `(v, a)` scaled to unit variance; each centroid is
//! mapped back through the longitudinal model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Kinematics, LoadScenario, VehicleParams};
use crate::error::{Error, Result};

const MAX_LLOYD_ITERS: usize = 500;

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: [f64; 2], centers: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, ctr) in centers.iter().enumerate() {
        let d = dist2(p, *ctr);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Reduce the non-guard loads to `k` weighted centroids; guards are
/// appended unchanged. Deterministic for a given `seed`.
pub fn cluster_scenarios(loads: &[LoadScenario], k: usize, seed: u64, vp: &VehicleParams) -> Result<Vec<LoadScenario>> {
    let (base, guards): (Vec<&LoadScenario>, Vec<&LoadScenario>) = loads.iter().partition(|l| !l.is_guard);
    let n = base.len();
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidInput(format!("k = {k} exceeds the {n} loads available")));
    }
    let kin: Vec<Kinematics> = base
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.kinematics
                .ok_or_else(|| Error::InvalidInput(format!("load {i} has no kinematics to cluster on")))
        })
        .collect::<Result<_>>()?;
    let guards = guards.into_iter().cloned();

    if k == n {
        let w = 1.0 / n as f64;
        return Ok(base
            .into_iter()
            .map(|l| LoadScenario { weight: w, ..l.clone() })
            .chain(guards)
            .collect());
    }

    let wsum: f64 = base.iter().map(|l| l.weight).sum();
    let w: Vec<f64> = if wsum > 0.0 {
        base.iter().map(|l| l.weight / wsum).collect()
    } else {
        vec![1.0 / n as f64; n]
    };
    let scale = |f: fn(&Kinematics) -> f64| {
        let mean: f64 = kin.iter().zip(&w).map(|(k, w)| w * f(k)).sum();
        let var: f64 = kin.iter().zip(&w).map(|(k, w)| w * (f(k) - mean).powi(2)).sum();
        if var > 0.0 {
            var.sqrt()
        } else {
            1.0
        }
    };
    let sv = scale(|k| k.v);
    let sa = scale(|k| k.a);
    let pts: Vec<[f64; 2]> = kin.iter().map(|k| [k.v / sv, k.a / sa]).collect();

    // k-means++ seeding
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(k);
    let first = sample_index(&mut rng, &w);
    centers.push(pts[first]);
    let mut d2: Vec<f64> = pts.iter().map(|p| dist2(*p, centers[0])).collect();
    while centers.len() < k {
        let score: Vec<f64> = d2.iter().zip(&w).map(|(d, w)| d * w).collect();
        let next = if score.iter().sum::<f64>() > 0.0 {
            sample_index(&mut rng, &score)
        } else {
            // all remaining mass sits on existing centers
            (0..n).find(|&i| !centers.contains(&pts[i])).unwrap_or(0)
        };
        centers.push(pts[next]);
        for (d, p) in d2.iter_mut().zip(&pts) {
            *d = d.min(dist2(*p, pts[next]));
        }
    }

    // Lloyd iterations
    let mut assign = vec![usize::MAX; n];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (i, p) in pts.iter().enumerate() {
            let (c, _) = nearest(*p, &centers);
            if assign[i] != c {
                assign[i] = c;
                changed = true;
            }
        }
        let mut acc = vec![[0.0f64; 3]; k];
        for (i, p) in pts.iter().enumerate() {
            let a = &mut acc[assign[i]];
            a[0] += w[i] * p[0];
            a[1] += w[i] * p[1];
            a[2] += w[i];
        }
        for c in 0..k {
            if acc[c][2] > 0.0 {
                centers[c] = [acc[c][0] / acc[c][2], acc[c][1] / acc[c][2]];
            } else {
                // re-seed an empty cluster at the point farthest from its center
                let far = (0..n)
                    .map(|i| (i, dist2(pts[i], centers[assign[i]])))
                    .fold((0, -1.0), |b, x| if x.1 > b.1 { x } else { b })
                    .0;
                centers[c] = pts[far];
                assign[far] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut clusters: Vec<(Kinematics, f64)> = (0..k)
        .filter_map(|c| {
            let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
            let wc: f64 = members.iter().map(|&i| w[i]).sum();
            (wc > 0.0).then(|| {
                let v = members.iter().map(|&i| w[i] * kin[i].v).sum::<f64>() / wc;
                let a = members.iter().map(|&i| w[i] * kin[i].a).sum::<f64>() / wc;
                let slope = members.iter().map(|&i| w[i] * kin[i].slope).sum::<f64>() / wc;
                (Kinematics { v, a, slope }, wc)
            })
        })
        .collect();
    clusters.sort_by(|x, y| x.0.v.total_cmp(&y.0.v).then(x.0.a.total_cmp(&y.0.a)));
    let total: f64 = clusters.iter().map(|c| c.1).sum();
    Ok(clusters
        .into_iter()
        .map(|(kn, wc)| LoadScenario::from_kinematics(vp, kn, wc / total))
        .chain(guards)
        .collect())
}

fn sample_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut r = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if r < *w {
            return i;
        }
        r -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycle::{guard_scenarios, GuardSpec};
    use proptest::prelude::*;

    fn loads(vs: &[(f64, f64)]) -> Vec<LoadScenario> {
        let vp = VehicleParams::default();
        let w = 1.0 / vs.len() as f64;
        vs.iter()
            .map(|&(v, a)| LoadScenario::from_kinematics(&vp, Kinematics { v, a, slope: 0.0 }, w))
            .collect()
    }

    #[test]
    fn single_cluster_is_weighted_mean() {
        let vp = VehicleParams::default();
        let l = loads(&[(10.0, 1.0), (20.0, 0.5), (30.0, 0.3)]);
        let c = cluster_scenarios(&l, 1, 7, &vp).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].weight, 1.0);
        let k = c[0].kinematics.unwrap();
        assert!((k.v - 20.0).abs() < 1e-12);
        assert!((k.a - 0.6).abs() < 1e-12);
    }

    #[test]
    fn one_cluster_per_load_returns_loads() {
        let vp = VehicleParams::default();
        let l = loads(&[(10.0, 1.0), (20.0, 0.5), (30.0, 0.3)]);
        let c = cluster_scenarios(&l, 3, 1, &vp).unwrap();
        for (a, b) in c.iter().zip(&l) {
            assert_eq!(a.wheel_torque, b.wheel_torque);
            assert!((a.weight - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn too_many_clusters_rejected() {
        let vp = VehicleParams::default();
        assert!(cluster_scenarios(&loads(&[(1.0, 1.0)]), 2, 0, &vp).is_err());
    }

    #[test]
    fn guards_pass_through() {
        let vp = VehicleParams::default();
        let mut l = loads(&[(10.0, 1.0), (20.0, 0.5), (30.0, 0.3), (12.0, 0.2)]);
        l.extend(guard_scenarios(&vp, GuardSpec::default()).unwrap());
        let c = cluster_scenarios(&l, 2, 3, &vp).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c[2].is_guard && c[3].is_guard);
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_are_reproducible(
            pts in prop::collection::vec((0.5f64..40.0, 0.01f64..3.0), 3..60),
            k in 1usize..6,
            seed in 0u64..1000,
        ) {
            let vp = VehicleParams::default();
            let l = loads(&pts);
            let k = k.min(l.len());
            let a = cluster_scenarios(&l, k, seed, &vp).unwrap();
            let b = cluster_scenarios(&l, k, seed, &vp).unwrap();
            prop_assert_eq!(&a, &b);
            let total: f64 = a.iter().map(|s| s.weight).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(a.iter().all(|s| s.wheel_torque >= crate::cycle::EPS_POS && s.wheel_speed >= crate::cycle::EPS_POS));
        }
    }
}
