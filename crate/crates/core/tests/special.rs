use compmed::special::{digamma, ln_gamma};

#[test]
fn special_functions_agree_with_reference_implementation() {
    let mut x = 1e-3;
    while x < 800.0 {
        let lg = statrs::function::gamma::ln_gamma(x);
        assert!((ln_gamma(x) - lg).abs() < 1e-10 * lg.abs().max(1.0), "ln_gamma({x})");
        let dg = statrs::function::gamma::digamma(x);
        assert!((digamma(x) - dg).abs() < 1e-10 * dg.abs().max(1.0), "digamma({x})");
        x *= 1.07;
    }
}

#[test]
fn single_precision_tracks_double() {
    for x in [0.05f32, 0.7, 1.0, 3.5, 42.0] {
        assert!((ln_gamma(x) as f64 - ln_gamma(x as f64)).abs() < 1e-4);
        assert!((digamma(x) as f64 - digamma(x as f64)).abs() < 1e-3 * digamma(x as f64).abs().max(1.0));
    }
}
