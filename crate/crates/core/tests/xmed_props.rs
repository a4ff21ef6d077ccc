use cgait_core::xmed::{discrepancy_values, Region, XmedConfig};
use proptest::prelude::*;

/// Index-by-index oracle: an unflagged point belongs to a region when the
/// nearest flagged points on both sides are at most `gap` points apart.
fn oracle(a: &[f64], b: &[f64], threshold: f64, gap: usize) -> (Vec<bool>, Vec<Region>, f64) {
    let n = a.len();
    let flagged: Vec<bool> = (0..n).map(|t| (a[t] - b[t]).abs() > threshold).collect();
    let inside: Vec<bool> = (0..n)
        .map(|t| {
            if flagged[t] {
                return true;
            }
            let left = (0..t).rev().find(|&i| flagged[i]);
            let right = (t + 1..n).find(|&i| flagged[i]);
            matches!((left, right), (Some(l), Some(r)) if r - l - 1 <= gap)
        })
        .collect();
    let mut regions = Vec::new();
    let mut t = 0;
    while t < n {
        if inside[t] {
            let start = t;
            while t + 1 < n && inside[t + 1] {
                t += 1;
            }
            regions.push(Region { start, end: t });
        }
        t += 1;
    }
    let pct = 100.0 * inside.iter().filter(|&&v| v).count() as f64 / n as f64;
    (flagged, regions, pct)
}

fn maps() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..300).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(0.0f64..=1.0, n),
        )
    })
}

fn cfg(threshold: f64, merge_gap: usize) -> XmedConfig {
    XmedConfig {
        threshold,
        merge_gap,
        ..XmedConfig::default()
    }
}

proptest! {
    #[test]
    fn matches_oracle((a, b) in maps(), threshold in prop::sample::select(vec![0.1, 0.5, 0.9]), gap in 0usize..15) {
        let r = discrepancy_values(&a, &b, &cfg(threshold, gap)).unwrap();
        let (flags, regions, pct) = oracle(&a, &b, threshold, gap);
        prop_assert_eq!(&r.flagged, &flags);
        prop_assert_eq!(&r.regions, &regions);
        prop_assert_eq!(r.discrepancy_percentage, pct);
    }

    #[test]
    fn symmetric((a, b) in maps(), gap in 0usize..15) {
        prop_assert_eq!(
            discrepancy_values(&a, &b, &cfg(0.5, gap)).unwrap(),
            discrepancy_values(&b, &a, &cfg(0.5, gap)).unwrap()
        );
    }

    #[test]
    fn monotone_in_threshold_and_gap((a, b) in maps(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0, g1 in 0usize..20, g2 in 0usize..20) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let (gs, gl) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let p = |t, g| discrepancy_values(&a, &b, &cfg(t, g)).unwrap().discrepancy_percentage;
        prop_assert!(p(hi, gs) <= p(lo, gs));
        prop_assert!(p(lo, gs) <= p(lo, gl));
    }

    #[test]
    fn regions_are_disjoint_sorted_and_cover_flags((a, b) in maps(), gap in 0usize..15) {
        let r = discrepancy_values(&a, &b, &cfg(0.5, gap)).unwrap();
        for w in r.regions.windows(2) {
            // separated by more than the merge gap
            prop_assert!(w[1].start > w[0].end + gap + 1);
        }
        for (t, &f) in r.flagged.iter().enumerate() {
            if f {
                prop_assert_eq!(r.regions.iter().filter(|g| g.contains(t)).count(), 1);
            }
        }
        if gap == 0 {
            let covered: usize = r.regions.iter().map(|g| g.len()).sum();
            prop_assert_eq!(covered, r.flagged.iter().filter(|&&f| f).count());
        }
        for d in &r.per_point_delta {
            prop_assert!(*d >= 0.0);
        }
    }
}
