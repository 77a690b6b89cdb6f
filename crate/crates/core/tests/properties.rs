//! Property tests, 10^5 random cases each.

mod invariants;

const CASES: u32 = 100_000;

macro_rules! property {
    ($name:ident) => {
        #[test]
        fn $name() {
            if let Err(e) = invariants::$name(CASES) {
                panic!("{e}");
            }
        }
    };
}

property!(unit_circle_pairs);
property!(weight_and_disk);
property!(rotation_norm);
property!(biased_symmetry);
property!(exact_steps);
property!(coarse_arrays);
property!(clifford_region);
property!(clifford_fixed_points);
