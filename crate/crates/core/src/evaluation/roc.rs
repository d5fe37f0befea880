use serde::Serialize;

use super::ScoreSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Operating curve for dissimilarity scores: a pair is accepted iff
/// `score <= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// One point per distinct observed score, ascending threshold.
    pub points: Vec<RocPoint>,
    pub eer: f64,
    pub eer_threshold: f64,
}

/// Sweeps the union of observed scores. Before the first threshold the
/// curve starts at FAR 0, FRR 1; the EER is linearly interpolated between
/// the last point with FAR < FRR and the first with FAR >= FRR.
pub fn compute_roc(scores: &ScoreSet) -> Result<RocCurve> {
    roc_from_lists(&scores.genuine, &scores.impostor)
}

pub(crate) fn roc_from_lists(genuine: &[f64], impostor: &[f64]) -> Result<RocCurve> {
    if genuine.is_empty() {
        return Err(Error::EmptyScoreList("genuine"));
    }
    if impostor.is_empty() {
        return Err(Error::EmptyScoreList("impostor"));
    }
    let mut g = genuine.to_vec();
    let mut im = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    im.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = g.iter().chain(im.iter()).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (ng, ni) = (g.len() as f64, im.len() as f64);
    let (mut gi, mut ii) = (0usize, 0usize);
    let mut points = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        while ii < im.len() && im[ii] <= t {
            ii += 1;
        }
        while gi < g.len() && g[gi] <= t {
            gi += 1;
        }
        points.push(RocPoint {
            threshold: t,
            far: ii as f64 / ni,
            frr: (g.len() - gi) as f64 / ng,
        });
    }

    let mut prev = RocPoint {
        threshold: thresholds[0],
        far: 0.0,
        frr: 1.0,
    };
    let mut eer = (0.0, thresholds[0]);
    for p in &points {
        if p.far - p.frr >= 0.0 {
            let d0 = prev.frr - prev.far;
            let d1 = p.frr - p.far;
            let s = if d0 - d1 == 0.0 { 0.0 } else { d0 / (d0 - d1) };
            eer = (
                prev.far + s * (p.far - prev.far),
                prev.threshold + s * (p.threshold - prev.threshold),
            );
            break;
        }
        prev = *p;
    }
    Ok(RocCurve {
        points,
        eer: eer.0.clamp(0.0, 1.0),
        eer_threshold: eer.1,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Quadratic sweep: every threshold recounts both lists from scratch.
    pub(crate) fn brute_force_eer(genuine: &[f64], impostor: &[f64]) -> f64 {
        let mut ts: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        let rates = |t: f64| {
            let far = impostor.iter().filter(|&&s| s <= t).count() as f64 / impostor.len() as f64;
            let frr = genuine.iter().filter(|&&s| s > t).count() as f64 / genuine.len() as f64;
            (far, frr)
        };
        let (mut f0, mut r0) = (0.0, 1.0);
        for t in ts {
            let (f1, r1) = rates(t);
            if f1 >= r1 {
                // intersect the segment (f0,r0)-(f1,r1) with the diagonal
                let a = r0 - f0;
                let b = r1 - f1;
                let s = if a == b { 0.0 } else { a / (a - b) };
                return f0 + s * (f1 - f0);
            }
            (f0, r0) = (f1, r1);
        }
        unreachable!("the last threshold always has FAR 1")
    }

    fn normal(rng: &mut ChaCha8Rng, n: usize, mu: f64, sd: f64) -> Vec<f64> {
        let d = Normal::new(mu, sd).unwrap();
        (0..n).map(|_| d.sample(rng)).collect()
    }

    #[test]
    fn perfect_separation() {
        let r = roc_from_lists(&[0.1; 5], &[0.9; 7]).unwrap();
        assert_eq!(r.eer, 0.0);
        assert_eq!(r.points.len(), 2);
    }

    #[test]
    fn identical_lists_give_chance() {
        let s = [0.2, 0.3, 0.3, 0.5];
        assert!((roc_from_lists(&s, &s).unwrap().eer - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_lists_rejected() {
        assert!(matches!(
            roc_from_lists(&[], &[0.1]),
            Err(Error::EmptyScoreList("genuine"))
        ));
        assert!(matches!(
            roc_from_lists(&[0.1], &[]),
            Err(Error::EmptyScoreList("impostor"))
        ));
    }

    #[test]
    fn gaussian_scores_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = normal(&mut rng, 1000, 0.25, 0.05);
        let i = normal(&mut rng, 1000, 0.45, 0.02);
        let r = roc_from_lists(&g, &i).unwrap();
        assert!((r.eer - brute_force_eer(&g, &i)).abs() < 1e-9);
        assert!(r.eer > 0.0 && r.eer < 0.2);
    }

    #[test]
    fn monotone_curve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = normal(&mut rng, 300, 0.3, 0.1);
        let i = normal(&mut rng, 200, 0.4, 0.1);
        let r = roc_from_lists(&g, &i).unwrap();
        for w in r.points.windows(2) {
            assert!(w[0].threshold < w[1].threshold);
            assert!(w[0].far <= w[1].far && w[0].frr >= w[1].frr);
        }
        assert_eq!(r.points.last().unwrap().far, 1.0);
        assert_eq!(r.points.last().unwrap().frr, 0.0);
    }

    proptest::proptest! {
        #[test]
        fn eer_matches_oracle(
            g in proptest::collection::vec(0u32..40, 1..60),
            i in proptest::collection::vec(0u32..40, 1..60),
        ) {
            // coarse grid forces ties between and within lists
            let g: Vec<f64> = g.into_iter().map(|v| v as f64 / 40.0).collect();
            let i: Vec<f64> = i.into_iter().map(|v| v as f64 / 40.0).collect();
            let r = roc_from_lists(&g, &i).unwrap();
            proptest::prop_assert!((r.eer - brute_force_eer(&g, &i)).abs() < 1e-9);
            proptest::prop_assert!((0.0..=1.0).contains(&r.eer));
        }
    }
}
