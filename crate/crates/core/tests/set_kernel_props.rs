use proptest::prelude::*;
use setbo::set_gp::{covariance_matrix, set_kernel};
use setbo::{Hyperparams, Layout};

fn layout() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..3000.0, 0.0f64..3000.0), 1..12)
}

proptest! {
    #[test]
    fn permutation_invariant_and_symmetric(a in layout(), b in layout(), l in 50.0f64..2000.0, shift in 0usize..12) {
        let h = Hyperparams::new(l, 1.0, 0.0).unwrap();
        let x1 = Layout::from_xy(&a);
        let x2 = Layout::from_xy(&b);
        let mut rotated = a.clone();
        rotated.rotate_left(shift % a.len());
        let k = set_kernel(&x1, &x2, &h).unwrap();
        prop_assert_eq!(set_kernel(&Layout::from_xy(&rotated), &x2, &h).unwrap(), k);
        prop_assert_eq!(set_kernel(&x2, &x1, &h).unwrap(), k);
        prop_assert!(k > 0.0 && k <= 1.0);
    }

    #[test]
    fn covariance_is_symmetric(sets in prop::collection::vec(layout(), 1..8)) {
        let layouts: Vec<Layout> = sets.iter().map(|s| Layout::from_xy(s)).collect();
        let k = covariance_matrix(&layouts, &Hyperparams::new(300.0, 2.0, 0.1).unwrap()).unwrap();
        prop_assert!(k.is_symmetric());
    }
}
