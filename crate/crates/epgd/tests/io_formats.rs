use std::path::Path;

use epgd::io::{decode_ppm, encode_ppm};
use epgd::{load_image, save_image, ImageIoError};
use epgd_core::Image;
use sha2::{Digest, Sha256};

fn data(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn pixel_digest(img: &Image) -> String {
    Sha256::digest(img.to_rgb8())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Digests of the decoded RGB bytes as produced by Pillow.
#[test]
fn fixtures_decode_to_reference_pixels() {
    for (name, h, w, digest) in [
        (
            "astronaut.png",
            512,
            512,
            "a8c429c18afa7b0fd5673e598d73a21225d94c864a71bbb3885126fdecb41071",
        ),
        (
            "coffee.png",
            400,
            600,
            "0ce2b51640b9c95f19617f03eabf40c3f0368589cc1ee1190b70966165ac184f",
        ),
        (
            "rocket.png",
            427,
            640,
            "3d4435cc745752b7f9724df88c6e18817de3ce7e3d2d71c55f85f7831e68f197",
        ),
        (
            "chelsea_128.png",
            128,
            128,
            "d1af8444cb4f8e08c7027520eaf56da05d95faabe9c0e85529756fd71c85e97a",
        ),
    ] {
        let img = load_image(data(name)).unwrap();
        assert_eq!((img.height(), img.width()), (h, w), "{name}");
        assert_eq!(pixel_digest(&img), digest, "{name}");
    }
}

#[test]
fn ppm_round_trip_is_byte_identical() {
    let img = load_image(data("chelsea_128.png")).unwrap();
    let bytes = encode_ppm(&img);
    assert!(bytes.starts_with(b"P6\n128 128\n255\n"));
    let back = decode_ppm(&bytes).unwrap();
    assert_eq!(back, img);
    assert_eq!(encode_ppm(&back), bytes);
}

#[test]
fn png_and_ppm_files_agree() {
    let dir = tempfile::tempdir().unwrap();
    let img = load_image(data("chelsea_128.png")).unwrap();
    let png = dir.path().join("a.png");
    let ppm = dir.path().join("a.ppm");
    save_image(&img, &png).unwrap();
    save_image(&img, &ppm).unwrap();
    assert_eq!(load_image(&png).unwrap(), img);
    assert_eq!(load_image(&ppm).unwrap(), img);
}

#[test]
fn saving_quantizes_with_clamping() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image::from_vec(1, 2, vec![-3.0, 0.5, 254.5, 300.0, 1.49, 127.5]).unwrap();
    let path = dir.path().join("q.ppm");
    save_image(&img, &path).unwrap();
    assert_eq!(
        load_image(&path).unwrap().as_slice(),
        &[0.0, 1.0, 255.0, 255.0, 1.0, 128.0]
    );
}

#[test]
fn unknown_extension_and_missing_file() {
    assert!(matches!(
        load_image("x.jpg"),
        Err(ImageIoError::UnknownExtension(_))
    ));
    assert!(matches!(
        load_image("/nonexistent/x.png"),
        Err(ImageIoError::Io { .. })
    ));
}
