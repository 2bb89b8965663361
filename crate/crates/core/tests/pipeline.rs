use swipt_core::extraction::{extract, verify_robust_feasibility, ExtractionMethod, FixedDesign};
use swipt_core::power_min::{default_settings, solve_power_min, solve_power_min_oma};
use swipt_core::system_model::{draw_channels, trial_seed, ChannelSet, NetworkConfig, UncertaintyModel};

fn instance(seed: u64) -> (NetworkConfig, ChannelSet) {
    let cfg = NetworkConfig::reference(3, 2, 1);
    let ch = draw_channels(&cfg, 0.8, 0.1, seed).unwrap();
    (cfg, ch)
}

#[test]
fn robustness_never_lowers_power() {
    for t in 0..4 {
        let (cfg, ch) = instance(trial_seed(5, t));
        let perfect = solve_power_min(&cfg, &ch, &default_settings()).unwrap();
        let bounded_model = UncertaintyModel::bounded_from_variances(&cfg, 1e-3, 1e-6).unwrap();
        let bounded = solve_power_min(&cfg, &ch.clone().with_uncertainty(bounded_model), &default_settings()).unwrap();
        if !(perfect.is_optimal() && bounded.is_optimal()) {
            continue;
        }
        assert!(bounded.objective >= perfect.objective * (1.0 - 1e-6), "{} < {}", bounded.objective, perfect.objective);
        assert!(perfect.objective <= cfg.p_b * (1.0 + 1e-7));
    }
}

#[test]
fn noma_needs_less_power_than_oma() {
    let (cfg, ch) = instance(42);
    let noma = solve_power_min(&cfg, &ch, &default_settings()).unwrap();
    let oma = solve_power_min_oma(&cfg, &ch).unwrap();
    assert!(noma.is_optimal());
    if oma.status == swipt_core::conic::SolveStatus::Optimal {
        assert!(noma.objective < oma.total_power);
    }
}

#[test]
fn extracted_bounded_design_survives_sampling() {
    let (cfg, ch) = instance(7);
    let model = UncertaintyModel::bounded_from_variances(&cfg, 1e-3, 1e-6).unwrap();
    let ch = ch.with_uncertainty(model);
    let sol = solve_power_min(&cfg, &ch, &default_settings()).unwrap();
    assert!(sol.is_optimal(), "{}", sol.diagnostic);
    let ex = extract(&sol, &cfg, &ch, ExtractionMethod::Randomization, 200, 3).unwrap();
    if ex.feasible {
        // the relaxation is a lower bound up to the solver tolerance
        assert!(ex.overhead >= 1.0 - 1e-4, "{}", ex.overhead);
        let design = FixedDesign::from_vectors(&ex.w, &sol.v, sol.rho);
        let rep = verify_robust_feasibility(&cfg, &ch, &design, 2000, 1e-6, 9).unwrap();
        assert!(rep.worst_margin() >= -1e-6, "{}", rep.worst_margin());
    }
    let relaxed = verify_robust_feasibility(&cfg, &ch, &FixedDesign::from_solution(&sol), 2000, 1e-6, 9).unwrap();
    assert!(relaxed.worst_margin() >= -1e-6);
}
