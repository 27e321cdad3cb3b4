use compmed::composition::{Composition, PartitionScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn coefficient_rows_are_orthonormal_and_zero_sum() {
    for parts in [2usize, 3, 10, 50] {
        for first in [0, parts / 2, parts - 1] {
            let scheme = PartitionScheme::with_first(parts, first).unwrap();
            let a: Vec<f64> = scheme.ilr_matrix();
            let rows = parts - 1;
            for r in 0..rows {
                let row = &a[r * parts..(r + 1) * parts];
                assert!(row.iter().sum::<f64>().abs() < 1e-12);
                for s in 0..rows {
                    let other = &a[s * parts..(s + 1) * parts];
                    let dot: f64 = row.iter().zip(other).map(|(x, y)| x * y).sum();
                    let want = if r == s { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-12, "J={parts} rows {r},{s}: {dot}");
                }
            }
        }
    }
}

#[test]
fn balances_equal_matrix_times_log_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..1000 {
        let parts = rng.random_range(2..40);
        let raw: Vec<f64> = (0..parts).map(|_| rng.random_range(1e-6..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let psi = Composition::new(raw.iter().map(|v| v / total).collect()).unwrap();
        let scheme = PartitionScheme::with_first(parts, case % parts).unwrap();
        let b = scheme.balances_all(&psi).unwrap();
        let a: Vec<f64> = scheme.ilr_matrix();
        for r in 0..parts - 1 {
            let direct: f64 = (0..parts).map(|j| a[r * parts + j] * psi.values()[j].ln()).sum();
            assert!((direct - b.values()[r]).abs() < 1e-10);
        }
    }
}
