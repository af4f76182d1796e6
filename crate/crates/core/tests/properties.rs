//! Property tests of invariants that hold for arbitrary fields.

use proptest::prelude::*;

use mchom::continua::{classify, compute_averages, ContinuumSpec};
use mchom::experiment::load_preset;
use mchom::experiment::metrics::relative_l2;
use mchom::fine::flow::{solve_flow, FlowBc, FlowProblem};
use mchom::fine::particles::{advect, deposit, seed_particles};
use mchom::fine::transport::{donor_courant, upwind_step};
use mchom::grid::{CoarseGrid, DomainLayout, Extension, FineGrid};
use mchom::linalg::SolverKind;
use mchom::par::Exec;
use mchom::tpfa;

fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..=1.0f64, n)
}

fn mobility(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01..100.0f64, n)
}

/// Closed-box flow driven by the body force of `c`.
fn closed_flow(g: &FineGrid, lambda: &[f64], c: &[f64]) -> Vec<f64> {
    let pb = FlowProblem { grid: g, lambda, density: Some(c), source: None, bc: FlowBc::closed(0) };
    solve_flow(&pb, SolverKind::Direct, None).unwrap().flux
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn averages_split_block_integrals(c in field(12 * 6), t in 0.1..0.9f64) {
        let lay = DomainLayout::new(2.0, 1.0, 12, 6, Extension::None).unwrap();
        let coarse = CoarseGrid::new(lay.target.clone(), 3, 2).unwrap();
        let spec = ContinuumSpec::new(vec![t]).unwrap();
        let g = &lay.comp;
        let labels = classify(&c, &spec);
        let flux: Vec<f64> = (0..g.n_faces()).map(|f| (f as f64 * 0.37).sin()).collect();
        let p = vec![0.0; g.n_cells()];
        let inflow = vec![0.5; g.n_faces()];
        let av = compute_averages(&lay, &coarse, &spec, &labels, &p, &c, &flux, &inflow);
        let area = g.cell_area();
        for b in 0..coarse.n_blocks() {
            let direct: f64 = coarse.block_cells(b).iter().map(|&k| c[k] * area).sum();
            let split = av.c[2 * b] + av.c[2 * b + 1];
            prop_assert!((split - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            let vol = av.volume[2 * b] + av.volume[2 * b + 1];
            prop_assert!((vol - coarse.block_area()).abs() <= 1e-12);
        }
        for e in 0..coarse.n_edges() {
            let total: f64 = coarse.edge_faces(e).iter().map(|&f| flux[f]).sum();
            prop_assert!((av.v[2 * e] + av.v[2 * e + 1] - total).abs() <= 1e-12);
        }
    }

    #[test]
    fn uniform_density_stays_at_rest(lambda in mobility(10 * 5), value in 0.0..=1.0f64) {
        let g = FineGrid::new(0.0, 0.0, 2.0, 1.0, 10, 5).unwrap();
        let flux = closed_flow(&g, &lambda, &vec![value; g.n_cells()]);
        prop_assert!(flux.iter().all(|u| u.abs() <= 1e-10));
    }

    #[test]
    fn closed_flow_is_divergence_free(lambda in mobility(10 * 5), c in field(10 * 5)) {
        let g = FineGrid::new(0.0, 0.0, 2.0, 1.0, 10, 5).unwrap();
        let flux = closed_flow(&g, &lambda, &c);
        let scale = flux.iter().fold(1e-300f64, |m, u| m.max(u.abs()));
        for d in tpfa::divergence(&g, &flux) {
            prop_assert!(d.abs() <= 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn upwind_conserves_and_stays_bounded(lambda in mobility(10 * 5), c in field(10 * 5)) {
        let g = FineGrid::new(0.0, 0.0, 2.0, 1.0, 10, 5).unwrap();
        let flux = closed_flow(&g, &lambda, &c);
        let dc = donor_courant(&g, &flux, 1.0);
        prop_assume!(dc > 0.0);
        let tau = 0.9 / dc;
        let next = upwind_step(&g, &c, &flux, tau, None).unwrap();
        let (m0, m1): (f64, f64) = (c.iter().sum(), next.iter().sum());
        prop_assert!((m1 - m0).abs() <= 1e-12 * m0.max(1.0));
        let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(next.iter().all(|v| *v >= lo - 1e-12 && *v <= hi + 1e-12));
    }

    #[test]
    fn deposition_stays_within_particle_values(lambda in mobility(8 * 4), c in field(8 * 4), seed in 0u64..1000) {
        let g = FineGrid::new(0.0, 0.0, 2.0, 1.0, 8, 4).unwrap();
        let flux = closed_flow(&g, &lambda, &c);
        let mut ps = seed_particles(&g, &c, 8, seed);
        let vmax = flux.iter().fold(1e-300f64, |m, u| m.max(u.abs() / g.hy.min(g.hx)));
        advect(&g, &flux, &mut ps, 0.5 * g.hx / vmax, Exec::Sequential).unwrap();
        let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let out = deposit(&g, &ps);
        prop_assert!(out.iter().all(|v| *v >= lo && *v <= hi));
    }

    #[test]
    fn relative_error_is_scale_invariant(a in field(20), b in field(20), s in 0.1..10.0f64) {
        prop_assume!(b.iter().any(|v| *v > 0.0));
        let e = relative_l2(&a, &b);
        let sa: Vec<f64> = a.iter().map(|v| v * s).collect();
        let sb: Vec<f64> = b.iter().map(|v| v * s).collect();
        prop_assert!((relative_l2(&sa, &sb) - e).abs() <= 1e-9 * e.max(1.0));
        prop_assert_eq!(relative_l2(&b, &b), 0.0);
    }

    #[test]
    fn config_round_trips_through_toml(steps in 1usize..500, tau in 1e-4..1e-1f64) {
        let cfg = load_preset("smoke", &[format!("fine.steps={steps}"), format!("fine.tau={tau:e}")]).unwrap();
        prop_assert_eq!(cfg.fine.steps, steps);
        let back = mchom::experiment::ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
