use tsr_bench::{checkerboard, six_mode_classes};
use tsr_core::ScoreField;

#[test]
fn fixtures_have_expected_shape() {
    let classes = six_mode_classes();
    assert_eq!(classes.mixture().len(), 6);
    assert_eq!(classes.num_classes(), 2);
    let data = checkerboard(100);
    assert_eq!((data.dim(), data.count()), (2, 100));
}
