//! Marginal likelihood on the one-parameter dephasing family, where
//! `L(D|F)` is the ordinary likelihood at `p = 1 - F`.

use std::sync::Arc;

use cptp_hmc::duality::{self, dephasing_channel};
use cptp_hmc::family::{family, FamilyKind};
use cptp_hmc::linalg::from_flat;
use cptp_hmc::marginal::{marginal_likelihood, MarginalConfig, Property};
use cptp_hmc::tomo::{self, PriorSpec};

fn one_minus_p() -> Property {
    let eval = Arc::new(|choi: &[num_complex::Complex64]| duality::entanglement_overlap(&from_flat(4, choi), 2) / 4.0);
    Property::custom("one-minus-p", 0.0, 1.0, Some((1.0, 1.0)), eval).unwrap()
}

#[test]
fn dephasing_quadrature() {
    let tet = tomo::scheme_tetrahedron();
    let counts = tomo::simulate_counts(&dephasing_channel(0.25).unwrap(), &tet, 30, 17).unwrap();
    let fam = family(FamilyKind::Dephasing, 2).unwrap();
    let prop = one_minus_p();
    let cfg = MarginalConfig::with_sizes(200_000, 200_000, 3);
    let r = marginal_likelihood(&counts, &tet, fam.as_ref(), &prop, &PriorSpec::Primitive, &cfg, None).unwrap();
    let exact = |f: f64| {
        let p = duality::born_probabilities(&dephasing_channel(1.0 - f).unwrap(), &tet).unwrap();
        tomo::log_likelihood(&p, &counts).unwrap().exp()
    };

    // evidence under the uniform prior on p, by the midpoint rule
    let m = 20_000;
    let z: f64 = (0..m).map(|i| exact((i as f64 + 0.5) / m as f64)).sum::<f64>() / m as f64;
    assert!((r.log_evidence - z.ln()).abs() < 0.02, "{} {}", r.log_evidence, z.ln());
    assert!((r.normalization - 1.0).abs() < 0.05, "{}", r.normalization);

    let (a, b) = r.posterior_central;
    assert!(a < 0.75 && 0.75 < b);
    for i in 0..=50 {
        let f = a + (b - a) * i as f64 / 50.0;
        let rel = r.likelihood(f) / exact(f) - 1.0;
        assert!(rel.abs() < 0.05, "F={f:.4}: {:.4e} vs {:.4e}", r.likelihood(f), exact(f));
    }
    assert!(r.plausible_contains(0.75));
}
