use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use setbo::pareto::{hypervolume, MonteCarlo};
use setbo::{ParetoArchive, PredictiveBox};

/// Counts grid-cell centres dominated by some point.
fn grid_counter(points: &[[f64; 2]], r: [f64; 2], lo: [f64; 2], cells: usize) -> f64 {
    let (wx, wy) = ((r[0] - lo[0]) / cells as f64, (r[1] - lo[1]) / cells as f64);
    let mut hit = 0usize;
    for i in 0..cells {
        for j in 0..cells {
            let x = lo[0] + (i as f64 + 0.5) * wx;
            let y = lo[1] + (j as f64 + 0.5) * wy;
            if points.iter().any(|p| p[0] <= x && p[1] <= y) {
                hit += 1;
            }
        }
    }
    hit as f64 * wx * wy
}

fn random_archive(rng: &mut ChaCha8Rng, n: usize) -> ParetoArchive {
    let mut a = ParetoArchive::new(vec![1.0, 1.0]);
    for _ in 0..n {
        a.insert(vec![rng.random_range(0.0..0.95), rng.random_range(0.0..0.95)]).unwrap();
    }
    a
}

#[test]
fn two_point_hypervolume_against_grid_counter() {
    let pts = [[0.0, 1.0], [1.0, 0.0]];
    let exact = hypervolume(&[vec![0.0, 1.0], vec![1.0, 0.0]], &[2.0, 2.0]).unwrap();
    assert_eq!(exact, 3.0);
    let approx = grid_counter(&pts, [2.0, 2.0], [0.0, 0.0], 400);
    assert!((approx - 3.0).abs() < 0.02);
}

#[test]
fn improvement_matches_recomputed_hypervolume() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let a = random_archive(&mut rng, 5);
        let y = [rng.random_range(0.0..1.1), rng.random_range(0.0..1.1)];
        let hvi = a.hv_improvement(&y);
        let mut b = a.clone();
        if y[0] < 1.0 && y[1] < 1.0 {
            b.insert(y.to_vec()).unwrap();
        }
        let recomputed = hypervolume(b.points(), b.reference()).unwrap() - hypervolume(a.points(), a.reference()).unwrap();
        assert!((hvi - recomputed).abs() < 1e-12);
    }
}

#[test]
fn exact_ehvi_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..10 {
        let a = random_archive(&mut rng, 6);
        let mean = vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let sd = vec![rng.random_range(0.01..0.4), rng.random_range(0.01..0.4)];
        let b = PredictiveBox::new(mean.clone(), sd.clone()).unwrap();
        let exact = a.ehvi(&b, &MonteCarlo::default()).unwrap();
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z0: f64 = StandardNormal.sample(&mut rng);
            let z1: f64 = StandardNormal.sample(&mut rng);
            let v = a.hv_improvement(&[mean[0] + sd[0] * z0, mean[1] + sd[1] * z1]);
            s += v;
            s2 += v * v;
        }
        let m = s / n as f64;
        let se = ((s2 / n as f64 - m * m) / n as f64).sqrt();
        assert!((exact - m).abs() <= 4.0 * se + 1e-12, "case {case}: {exact} vs {m} ± {se}");
    }
}

#[test]
fn small_sigma_ehvi_approaches_improvement() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let a = random_archive(&mut rng, 5);
        let mean = vec![rng.random_range(0.0..0.9), rng.random_range(0.0..0.9)];
        let hvi = a.hv_improvement(&mean);
        let e = a.ehvi(&PredictiveBox::new(mean, vec![1e-9, 1e-9]).unwrap(), &MonteCarlo::default()).unwrap();
        assert!((e - hvi).abs() <= 1e-6 * hvi.max(1e-300) + 1e-8, "{e} vs {hvi}");
    }
}
