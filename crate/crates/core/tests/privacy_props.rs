use adasplit_core::privacy::{distance_correlation, SampleMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Textbook double-centering, written independently of the library.
fn oracle(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let dist = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        s[i].iter()
                            .zip(&s[j])
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect()
            })
            .collect()
    };
    let center = |d: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let row: Vec<f64> = d.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
        let col: Vec<f64> = (0..n)
            .map(|j| d.iter().map(|r| r[j]).sum::<f64>() / n as f64)
            .collect();
        let all = row.iter().sum::<f64>() / n as f64;
        (0..n)
            .map(|i| (0..n).map(|j| d[i][j] - row[i] - col[j] + all).collect())
            .collect()
    };
    let a = center(dist(x));
    let b = center(dist(y));
    let v = |p: &Vec<Vec<f64>>, q: &Vec<Vec<f64>>| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += p[i][j] * q[i][j];
            }
        }
        s / (n * n) as f64
    };
    let (vxy, vxx, vyy) = (v(&a, &b), v(&a, &a), v(&b, &b));
    if vxx <= 0.0 || vyy <= 0.0 {
        return 0.0;
    }
    (vxy.max(0.0) / (vxx * vyy).sqrt()).sqrt()
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect()
}

fn dcor(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    distance_correlation(
        &SampleMatrix::from_rows(x).unwrap(),
        &SampleMatrix::from_rows(y).unwrap(),
    )
    .unwrap()
}

/// Random orthogonal matrix by Gram-Schmidt on a random square matrix.
fn random_orthogonal(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        for u in &q {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    q
}

#[test]
fn matches_double_centering_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let n = rng.random_range(2..=20);
        let (dx, dy) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let x = random_rows(&mut rng, n, dx);
        let y = random_rows(&mut rng, n, dy);
        let (got, want) = (dcor(&x, &y), oracle(&x, &y));
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }
}

proptest! {
    #[test]
    fn invariant_under_translation_scaling_and_rotation(seed in any::<u64>(), scale in 0.01..100.0f64, shift in -50.0..50.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(3..=15);
        let dim = rng.random_range(1..=4);
        let x = random_rows(&mut rng, n, dim);
        let y = random_rows(&mut rng, n, 2);
        let base = dcor(&x, &y);
        let q = random_orthogonal(&mut rng, dim);
        let moved: Vec<Vec<f64>> = x
            .iter()
            .map(|r| (0..dim).map(|i| scale * q[i].iter().zip(r).map(|(a, b)| a * b).sum::<f64>() + shift).collect())
            .collect();
        prop_assert!((dcor(&moved, &y) - base).abs() <= 1e-7);
    }

    #[test]
    fn symmetric_and_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=12);
        let x = random_rows(&mut rng, n, 3);
        let y = random_rows(&mut rng, n, 1);
        let (a, b) = (dcor(&x, &y), dcor(&y, &x));
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
    }
}

#[test]
fn anchors() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_rows(&mut rng, 12, 3);
    assert!((dcor(&x, &x) - 1.0).abs() <= 1e-9);
    let flat = vec![vec![2.5]; 12];
    assert_eq!(dcor(&x, &flat), 0.0);
    let u: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
    let v: Vec<Vec<f64>> = u.iter().map(|r| vec![-3.0 * r[0] + 7.0]).collect();
    assert!((dcor(&u, &v) - 1.0).abs() <= 1e-9);
}
