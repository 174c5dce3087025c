use dolb::accelerated::{DispatchSet, FieldDump};
use dolb::cases::{CaseConfig, CaseSetup, Drive};
use proptest::prelude::*;

fn same_bits(a: &FieldDump, b: &FieldDump) -> bool {
    a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn check(setup: &CaseSetup, grid: [usize; 3], workers: usize, steps: usize) {
    let dispatch = DispatchSet::new(setup.required_models()).unwrap();
    let mut mono = setup.build_accelerated::<f64>([1, 1, 1], 1).unwrap();
    let mut split = setup.build_accelerated::<f64>(grid, workers).unwrap();
    for step in 0..steps {
        mono.collide_and_stream(&dispatch).unwrap();
        split.collide_and_stream(&dispatch).unwrap();
        assert!(
            same_bits(&mono.dump(), &split.dump()),
            "grid {grid:?} workers {workers} step {step}"
        );
    }
}

#[test]
fn cavity_walls_survive_decomposition() {
    let setup = CaseConfig::cavity(16, 400.0, 0.1).setup().unwrap();
    check(&setup, [2, 3, 2], 3, 6);
}

#[test]
fn channel_with_open_ends_survives_decomposition() {
    let setup = CaseConfig::porous_plates(8, 5, Drive::Pressure).setup().unwrap();
    check(&setup, [5, 1, 2], 2, 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn periodic_tgv_is_independent_of_the_partition(
        gx in 1usize..4, gy in 1usize..4, gz in 1usize..4, w in 1usize..5,
    ) {
        let grid = [gx, gy, gz];
        let workers = w.min(gx * gy * gz);
        let setup = CaseConfig::tgv(12, 200.0, 0.1).setup().unwrap();
        check(&setup, grid, workers, 3);
    }
}
