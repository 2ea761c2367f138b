use proptest::prelude::*;

use ssit::image_io::{encode_ppm, parse_ppm, RgbImage};
use ssit::matting::{affine_loss, build_matting_laplacian, MattingConfig};
use ssit::tensor::Tensor;

fn image_strategy() -> impl Strategy<Value = RgbImage> {
    (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
        proptest::collection::vec(any::<u8>(), 3 * w * h).prop_map(move |px| RgbImage::new(w, h, px).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ppm_round_trip(img in image_strategy(), comment in proptest::option::of("[a-z =:]{0,20}")) {
        let bytes = encode_ppm(&img, comment.as_deref());
        prop_assert_eq!(parse_ppm(&bytes).unwrap(), img);
    }

    #[test]
    fn affine_loss_is_quadratic(
        pixels in proptest::collection::vec(0.0f64..1.0, 75),
        output in proptest::collection::vec(-1.0f64..1.0, 75),
        k in -3.0f64..3.0,
    ) {
        let image = Tensor::new([3, 5, 5], pixels).unwrap();
        let m = build_matting_laplacian(&image, &MattingConfig::default()).unwrap();
        let o = Tensor::new([3, 5, 5], output.clone()).unwrap();
        let ko = Tensor::new([3, 5, 5], output.iter().map(|v| k * v).collect()).unwrap();
        let base = affine_loss(&m, &o).unwrap();
        let scaled = affine_loss(&m, &ko).unwrap();
        prop_assert!(base >= -1e-10);
        prop_assert!((scaled - k * k * base).abs() <= 1e-10 * (1.0 + scaled.abs()));
    }
}
