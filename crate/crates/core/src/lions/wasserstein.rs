use crate::error::{Error, Result};
use crate::linalg::CompensatedSum;
use crate::model::EmpiricalMeasure;

/// Largest cloud for which the exact assignment is solved in `d >= 2`.
pub const MAX_ASSIGNMENT_SIZE: usize = 512;

/// `W_2` between two uniform empirical measures.
///
/// `d = 1` is exact for any sizes (monotone coupling of the quantile
/// functions). In `d >= 2` both clouds must have the same size `N <= 512`, and
/// the optimal permutation is found with the Hungarian method.
pub fn wasserstein2(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    wasserstein2_squared(mu, nu).map(f64::sqrt)
}

pub fn wasserstein2_squared(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::invalid("measures live in different dimensions"));
    }
    // Fix the argument order so that W2(mu, nu) and W2(nu, mu) run the same
    // arithmetic and agree bit for bit.
    let (mu, nu) = match canonical_order(mu.points(), nu.points()) {
        std::cmp::Ordering::Greater => (nu, mu),
        _ => (mu, nu),
    };
    if mu.dim() == 1 {
        return Ok(quantile_w2_sq(mu.points(), nu.points()));
    }
    let n = mu.len();
    if n != nu.len() {
        return Err(Error::unsupported(format!(
            "W2 in d = {} needs equal cloud sizes, got {n} and {}",
            mu.dim(),
            nu.len()
        )));
    }
    if n > MAX_ASSIGNMENT_SIZE {
        return Err(Error::unsupported(format!(
            "W2 in d >= 2 is not computed for N = {n} > {MAX_ASSIGNMENT_SIZE}"
        )));
    }
    let cost: Vec<f64> = (0..n)
        .flat_map(|i| {
            let p = mu.point(i);
            (0..n).map(move |j| {
                let q = nu.point(j);
                p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })
        })
        .collect();
    let assignment = hungarian(&cost, n);
    let mut s = CompensatedSum::new();
    for (i, &j) in assignment.iter().enumerate() {
        s.add(cost[i * n + j]);
    }
    Ok((s.value() / n as f64).max(0.0))
}

fn canonical_order(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `int_0^1 |F^{-1}(u) - G^{-1}(u)|^2 du`, masses tracked in integer units of
/// `1 / (N M)`.
fn quantile_w2_sq(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (n, m) = (a.len(), b.len());
    if n == m {
        let mut s = CompensatedSum::new();
        for (x, y) in a.iter().zip(&b) {
            s.add((x - y) * (x - y));
        }
        return s.value() / n as f64;
    }
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (m as u64, n as u64);
    let mut s = CompensatedSum::new();
    while i < n && j < m {
        let w = ra.min(rb);
        s.add(w as f64 * (a[i] - b[j]).powi(2));
        ra -= w;
        rb -= w;
        if ra == 0 {
            i += 1;
            ra = m as u64;
        }
        if rb == 0 {
            j += 1;
            rb = n as u64;
        }
    }
    s.value() / (n as f64 * m as f64)
}

/// Minimum-cost perfect assignment for a dense `n x n` cost matrix
/// (shortest augmenting paths with potentials, `O(n^3)`). Returns the column
/// assigned to each row.
pub(crate) fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    let inf = f64::INFINITY;
    // 1-based potentials; column 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SeedPolicy, StreamRole};
    use proptest::prelude::*;

    fn scalars(xs: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_scalars(xs).unwrap()
    }

    #[test]
    fn one_dimensional_examples() {
        assert_eq!(wasserstein2(&scalars(&[0.0]), &scalars(&[1.0])).unwrap(), 1.0);
        assert_eq!(wasserstein2(&scalars(&[0.0, 2.0]), &scalars(&[3.0, 1.0])).unwrap(), 1.0);
    }

    #[test]
    fn planar_same_measure_is_zero() {
        let a = EmpiricalMeasure::from_points(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let b = EmpiricalMeasure::from_points(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(wasserstein2(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn unequal_sizes() {
        // delta_0 against {-1, 1}: every unit of mass moves distance 1.
        assert_eq!(wasserstein2(&scalars(&[0.0]), &scalars(&[-1.0, 1.0])).unwrap(), 1.0);
        // Same measure written with repeated atoms.
        assert_eq!(wasserstein2(&scalars(&[1.0, 2.0]), &scalars(&[1.0, 1.0, 2.0, 2.0])).unwrap(), 0.0);
        let a = EmpiricalMeasure::from_points(&[vec![0.0, 0.0]]).unwrap();
        let b = EmpiricalMeasure::from_points(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(wasserstein2(&a, &b), Err(Error::UnsupportedOperation(_))));
        let big = EmpiricalMeasure::new(2, vec![0.0; 2 * (MAX_ASSIGNMENT_SIZE + 1)]).unwrap();
        assert!(matches!(wasserstein2(&big, &big), Err(Error::UnsupportedOperation(_))));
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut s = SeedPolicy::new(3).stream(StreamRole::TestCloud, 0, 0);
        for n in 1..=7 {
            let cost: Vec<f64> = (0..n * n).map(|_| s.uniform()).collect();
            let got: f64 = hungarian(&cost, n).iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
            let mut perm: Vec<usize> = (0..n).collect();
            let mut best = f64::INFINITY;
            permutations(&mut perm, 0, &mut |p| {
                best = best.min(p.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum());
            });
            assert!((got - best).abs() < 1e-12, "n={n}: {got} vs {best}");
        }
    }

    fn permutations(p: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permutations(p, k + 1, f);
            p.swap(k, i);
        }
    }

    fn cloud_strategy(d: usize) -> impl Strategy<Value = EmpiricalMeasure> {
        prop::collection::vec(-5.0f64..5.0, 6 * d).prop_map(move |v| EmpiricalMeasure::new(d, v).unwrap())
    }

    proptest! {
        #[test]
        fn metric_axioms((a, b, c) in (1usize..3).prop_flat_map(|d| (cloud_strategy(d), cloud_strategy(d), cloud_strategy(d)))) {
            let ab = wasserstein2(&a, &b).unwrap();
            let ba = wasserstein2(&b, &a).unwrap();
            let bc = wasserstein2(&b, &c).unwrap();
            let ac = wasserstein2(&a, &c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(wasserstein2(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn zero_iff_same_multiset(xs in prop::collection::vec(-3i32..3, 1..8), ys in prop::collection::vec(-3i32..3, 1..8)) {
            let a: Vec<f64> = xs.iter().map(|&x| x as f64).collect();
            let b: Vec<f64> = ys.iter().map(|&x| x as f64).collect();
            let w = wasserstein2(&scalars(&a), &scalars(&b)).unwrap();
            let (mut sa, mut sb) = (a.clone(), b.clone());
            sa.sort_by(f64::total_cmp);
            sb.sort_by(f64::total_cmp);
            if a.len() == b.len() {
                prop_assert_eq!(w == 0.0, sa == sb);
            }
        }
    }
}
