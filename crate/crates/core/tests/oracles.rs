mod common;

use common::oracles;

macro_rules! oracle_test {
    ($name:ident, $check:path) => {
        #[test]
        fn $name() {
            let n = $check().unwrap_or_else(|e| panic!("{e}"));
            assert!(n >= 100, "only {n} instances");
        }
    };
}

oracle_test!(undersample_matches_brute_force, oracles::check_undersample);
oracle_test!(slide_matches_brute_force, oracles::check_slide);
oracle_test!(window_label_matches_brute_force, oracles::check_window_label);
oracle_test!(split_random_matches_shuffle_and_cut, oracles::check_split_random);
oracle_test!(smooth_matches_rescanning_reference, oracles::check_smooth);
oracle_test!(pearson_matrix_matches_two_pass_formula, oracles::check_pearson_matrix);
oracle_test!(pca_matches_dense_eigensolver, oracles::check_pca);

#[test]
fn brute_smoothing_examples() {
    assert_eq!(oracles::smooth_brute(&[0, 0, 1, 0, 0], 2), vec![0; 5]);
    assert_eq!(
        oracles::smooth_brute(&[1, 0, 1, 1, 0, 0, 0, 1, 0, 0], 3),
        vec![1, 1, 1, 1, 0, 0, 0, 0, 0, 0]
    );
}

#[test]
fn brute_undersample_examples() {
    assert_eq!(
        oracles::undersample_brute(&[0, 0, 0, 1, 0, 0, 0, 0], 1, 1),
        vec![(2, 5)]
    );
    assert_eq!(oracles::undersample_brute(&[1, 0, 0, 0, 1], 1, 1), vec![(0, 2), (3, 5)]);
}
