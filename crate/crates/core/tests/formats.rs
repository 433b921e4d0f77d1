use std::path::PathBuf;

use kwspot::cache::{read_cache, RunCache};
use kwspot::error::KwsError;
use kwspot::likelihood::LikelihoodMatrix;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn reads_golden_matrix() {
    let m = LikelihoodMatrix::load(data("small.kwsl")).unwrap();
    assert_eq!((m.num_frames(), m.num_states(), m.frame_shift_ms()), (3, 4, 10));
    assert_eq!(m.row(1), &[-3.0, -0.125, -4.75, -1.0]);
    assert_eq!(m.get(2, 3), -9.5);
}

#[test]
fn writes_the_golden_bytes_back() {
    let bytes = std::fs::read(data("small.kwsl")).unwrap();
    let m = LikelihoodMatrix::from_bytes(&bytes).unwrap();
    assert_eq!(m.to_bytes(), bytes);
}

#[test]
fn empty_matrix_is_valid() {
    let m = LikelihoodMatrix::load(data("empty.kwsl")).unwrap();
    assert_eq!((m.num_frames(), m.num_states()), (0, 4));
}

#[test]
fn rejects_damaged_matrices() {
    assert!(matches!(
        LikelihoodMatrix::load(data("truncated.kwsl")),
        Err(KwsError::PayloadMismatch { expected: 12, found: 10, .. })
    ));
    assert!(matches!(
        LikelihoodMatrix::load(data("bad_magic.kwsl")),
        Err(KwsError::MalformedHeader(_))
    ));
    assert!(matches!(
        LikelihoodMatrix::load(data("nonfinite.kwsl")),
        Err(KwsError::NonFinite { frame: 1, state: 2, .. })
    ));
}

#[test]
fn reads_golden_cache() {
    let c = read_cache(data("small.kwsc")).unwrap();
    let fp: Vec<u8> = (0..16).collect();
    assert_eq!(c.fingerprint.to_vec(), fp);
    assert_eq!((c.num_frames(), c.values_per_frame()), (2, 5));
    let r = c.record(1);
    assert_eq!(r.likelihoods, &[-0.5, -4.0, -1.25]);
    assert_eq!((r.d_best, r.end_best), (-1.5, -2.25));
    let bytes = std::fs::read(data("small.kwsc")).unwrap();
    assert_eq!(RunCache::from_bytes(&bytes).unwrap().to_bytes(), bytes);
}

#[test]
fn truncated_cache_names_the_frame() {
    let bytes = std::fs::read(data("small.kwsc")).unwrap();
    let err = RunCache::from_bytes(&bytes[..bytes.len() - 4]).unwrap_err();
    assert!(matches!(err, KwsError::TruncatedCache { frame: 1, num_frames: 2 }), "{err}");
}
