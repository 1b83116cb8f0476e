//! All-pairs correlation pyramid against the on-demand variant.

use bdpnp::correlation::{build_correlation, FeatureMap, OnDemandCorrelation};
use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> bdpnp::Result<()> {
    let (w, h, dim, levels, radius) = (16, 12, 8, 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut features = || {
        FeatureMap::new(
            w,
            h,
            dim,
            (0..w * h * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
    };
    let (f1, f2) = (features()?, features()?);

    let pyramid = build_correlation(&f1, &f2, levels)?;
    let on_demand = OnDemandCorrelation::new(f1, f2, levels)?;
    for (l, level) in pyramid.levels.iter().enumerate() {
        println!("level {l}: {}×{}", level.width, level.height);
    }

    // identity flow, with one pixel pushed off the image
    let mut coords: Vec<Option<Vector2<f64>>> = (0..w * h)
        .map(|i| Some(Vector2::new((i % w) as f64, (i / w) as f64)))
        .collect();
    coords[0] = Some(Vector2::new(-50.0, 3.5));
    coords[1] = None;
    let a = pyramid.lookup_pixels(&coords, radius)?;
    let b = on_demand.lookup_pixels(&coords, radius)?;
    let per_pixel = levels * (2 * radius + 1) * (2 * radius + 1);
    let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    println!("{per_pixel} features per pixel, max difference {diff:.1e}");
    println!("off-image pixel sums to {}", a[..per_pixel].iter().sum::<f64>());
    Ok(())
}
