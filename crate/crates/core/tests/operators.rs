use ndarray::Array2;
use num_complex::Complex64;
use patchrec::operators::{BlurKernel, CirculantSpectrum, KernelId, MaskSet, KERNEL_SIZE};
use patchrec::seed::rng_from_seed;
use patchrec::{add_noise, Image, MeasurementOp, Partition};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const TOL: f64 = 1e-10;

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

fn measurement(rng: &mut impl Rng, len: usize, complex: bool) -> Vec<Complex64> {
    (0..len)
        .map(|_| {
            let im = if complex { StandardNormal.sample(rng) } else { 0.0 };
            Complex64::new(StandardNormal.sample(rng), im)
        })
        .collect()
}

fn check_adjoint(op: &MeasurementOp, rng: &mut impl Rng) {
    let (rows, cols) = op.image_dims();
    let x = gaussian(rng, rows, cols);
    let y = measurement(rng, op.output_len(), op.is_complex());
    let ax = op.apply_array(x.view()).unwrap();
    let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a.re * b.re + a.im * b.im).sum();
    let rhs = (&x * &op.adjoint_values(&y).unwrap()).sum();
    assert!(
        (lhs - rhs).abs() <= TOL * (1.0 + lhs.abs()),
        "{}: {lhs} vs {rhs}",
        op.kind()
    );
}

#[test]
fn mask_adjoint() {
    let mut rng = rng_from_seed(11);
    for t in 0..50 {
        let (r, c) = (rng.random_range(1..30), rng.random_range(1..30));
        let ratio = rng.random_range(0.05..=1.0);
        check_adjoint(&MeasurementOp::mask(MaskSet::sample(r, c, ratio, t).unwrap()), &mut rng);
    }
}

#[test]
fn circulant_adjoint() {
    let mut rng = rng_from_seed(12);
    for t in 0..50 {
        let (r, c) = (rng.random_range(2..30), rng.random_range(2..30));
        let op = MeasurementOp::circulant(
            MaskSet::sample(r, c, rng.random_range(0.1..=1.0), t).unwrap(),
            CirculantSpectrum::from_seed(r, c, t),
        )
        .unwrap();
        check_adjoint(&op, &mut rng);
    }
}

#[test]
fn blur_adjoint() {
    let mut rng = rng_from_seed(13);
    for t in 0..50 {
        let (r, c) = (rng.random_range(1..30), rng.random_range(1..30));
        let kernel = match t % 3 {
            0 => BlurKernel::average(),
            1 => KernelId::Motion.kernel(),
            _ => BlurKernel::motion(rng.random_range(1.0..9.0), rng.random_range(0.0..360.0)),
        };
        check_adjoint(&MeasurementOp::blur(r, c, kernel).unwrap(), &mut rng);
    }
}

#[test]
fn extract_embed_adjoint() {
    let mut rng = rng_from_seed(14);
    for _ in 0..50 {
        let (rows, cols) = (rng.random_range(1..30), rng.random_range(1..30));
        let (n1, n2) = (rng.random_range(1..=rows.min(8)), rng.random_range(1..=cols.min(8)));
        let p = Partition::new(rows, cols, n1, n2, rng.random_range(1..=n1), rng.random_range(1..=n2)).unwrap();
        let x = gaussian(&mut rng, rows, cols);
        let f = gaussian(&mut rng, n1 * n2, p.num_cells());
        let lhs = (&p.extract_all(x.view()).unwrap() * &f).sum();
        let mut acc = Array2::zeros((rows, cols));
        p.embed_all(f.view(), &mut acc).unwrap();
        let rhs = (&x * &acc).sum();
        assert!((lhs - rhs).abs() <= TOL * (1.0 + lhs.abs()));
    }
}

/// `y[i, j] = sum_{a, b} w[a, b] x[i + 4 - a, j + 4 - b]`, indices mod size.
fn direct_circular(x: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let half = KERNEL_SIZE / 2;
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let mut s = 0.0;
        for a in 0..KERNEL_SIZE {
            for b in 0..KERNEL_SIZE {
                let r = (i + half + rows * KERNEL_SIZE - a) % rows;
                let c = (j + half + cols * KERNEL_SIZE - b) % cols;
                s += w[[a, b]] * x[[r, c]];
            }
        }
        s
    })
}

#[test]
fn blur_matches_direct_convolution() {
    let mut rng = rng_from_seed(15);
    for kernel in [
        BlurKernel::average(),
        KernelId::Motion.kernel(),
        BlurKernel::motion(5.0, 20.0),
    ] {
        let x = gaussian(&mut rng, 6, 6);
        let op = MeasurementOp::blur(6, 6, kernel.clone()).unwrap();
        let fast = op.apply_array(x.view()).unwrap();
        let slow = direct_circular(&x, kernel.weights());
        for (f, s) in fast.iter().zip(slow.iter()) {
            assert!((f.re - s).abs() <= 1e-12, "{} vs {s}", f.re);
            assert_eq!(f.im, 0.0);
        }
    }
}

#[test]
fn noise_level_is_exact() {
    let img = Image::new(gaussian(&mut rng_from_seed(16), 20, 24).mapv(|v| 128.0 + 40.0 * v)).unwrap();
    let ops = [
        MeasurementOp::mask(MaskSet::sample(20, 24, 0.3, 1).unwrap()),
        MeasurementOp::circulant(
            MaskSet::sample(20, 24, 0.3, 1).unwrap(),
            CirculantSpectrum::from_seed(20, 24, 1),
        )
        .unwrap(),
        MeasurementOp::blur(20, 24, BlurKernel::average()).unwrap(),
    ];
    for op in &ops {
        let clean = op.apply(&img).unwrap();
        for sigma_hat in [0.01, 0.05, 0.10] {
            let b = add_noise(&clean, sigma_hat, 4).unwrap();
            let err: f64 = b
                .values()
                .iter()
                .zip(clean.values())
                .map(|(a, c)| (a - c).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!((err / clean.norm() - sigma_hat).abs() <= 1e-12);
        }
    }
}
