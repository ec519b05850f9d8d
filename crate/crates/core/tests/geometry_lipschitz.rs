use qsd_core::geometry::Domain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// 10⁵ pairs per shape: half drawn independently over a padded bounding
/// box, half as short hops, which probe the boundary and the ridge of φ.
#[test]
fn phi_is_one_lipschitz_on_every_shape() {
    let shapes = [
        Domain::interval(-1.0, 3.0).unwrap(),
        Domain::unit_ball(2),
        Domain::ball(vec![0.0, 1.0, 0.0], 2.0).unwrap(),
        Domain::ellipsoid(vec![0.0, 0.0], vec![3.0, 0.5]).unwrap(),
        Domain::ellipsoid(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 0.7]).unwrap(),
        Domain::axis_box(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 3.0]).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for dom in &shapes {
        let (lo, hi) = dom.bounding_box();
        let mut worst = 0.0f64;
        for k in 0..100_000 {
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(&l, &h)| rng.random_range(l - 0.3..h + 0.3)).collect();
            let y: Vec<f64> = if k % 2 == 0 {
                lo.iter().zip(&hi).map(|(&l, &h)| rng.random_range(l - 0.3..h + 0.3)).collect()
            } else {
                x.iter().map(|&a| a + rng.random_range(-0.01..0.01)).collect()
            };
            let r = dist(&x, &y);
            if r > 0.0 {
                worst = worst.max((dom.phi(&x) - dom.phi(&y)).abs() / r);
            }
        }
        assert!(worst <= 1.0 + 1e-9, "{:?}: ratio {worst}", dom.shape());
    }
}

#[test]
fn phi_vanishes_exactly_outside() {
    let dom = Domain::ellipsoid(vec![1.0, -1.0], vec![2.0, 1.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..10_000 {
        let x = [rng.random_range(-2.0..4.0), rng.random_range(-3.0..1.0)];
        assert_eq!(dom.contains_point(&x), dom.phi(&x) > 0.0);
    }
}
