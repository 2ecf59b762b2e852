use cfota::runner::idx::{encode_images, encode_labels, load_idx_dataset, IdxError};

fn write_pair(dir: &std::path::Path, images: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
    let i = dir.join("images");
    let l = dir.join("labels");
    std::fs::write(&i, images).unwrap();
    std::fs::write(&l, labels).unwrap();
    (i, l)
}

#[test]
fn round_trip_with_filter() {
    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<u8> = (0..5 * 4).map(|i| (i * 12) as u8).collect();
    let (i, l) = write_pair(dir.path(), &encode_images(5, 2, 2, &pixels), &encode_labels(&[3, 7, 3, 1, 7]));
    let all = load_idx_dataset(&i, &l, None, 10).unwrap();
    assert_eq!(all.labels, vec![3, 7, 3, 1, 7]);
    assert_eq!(all.features.shape(), (5, 4));
    assert!((all.features[(1, 2)] - 72.0 / 255.0).abs() < 1e-15);

    let picked = load_idx_dataset(&i, &l, Some(&[7, 3]), 2).unwrap();
    assert_eq!(picked.labels, vec![1, 0, 1, 0]);
    assert_eq!(picked.features.row(1), all.features.row(1));
}

#[test]
fn malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let images = encode_images(2, 2, 2, &[0; 8]);
    let labels = encode_labels(&[0, 1]);

    let (i, l) = write_pair(dir.path(), &labels, &labels);
    assert!(matches!(load_idx_dataset(&i, &l, None, 10), Err(IdxError::BadMagic { .. })));

    let (i, l) = write_pair(dir.path(), &images[..images.len() - 1], &labels);
    assert!(matches!(load_idx_dataset(&i, &l, None, 10), Err(IdxError::TruncatedFile { .. })));

    let (i, l) = write_pair(dir.path(), &images, &encode_labels(&[0, 1, 2]));
    assert!(matches!(load_idx_dataset(&i, &l, None, 10), Err(IdxError::CountMismatch { .. })));

    let (i, l) = write_pair(dir.path(), &images, &labels);
    assert!(matches!(load_idx_dataset(&i, &l, None, 1), Err(IdxError::LabelOutOfRange { .. })));

    let missing = dir.path().join("absent");
    assert!(matches!(load_idx_dataset(&missing, &l, None, 10), Err(IdxError::Io { .. })));
}
