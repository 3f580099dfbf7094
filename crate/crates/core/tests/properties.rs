use dosefind_core::crm::{crm_posterior, CrmModel, TrialData};
use dosefind_core::design::{
    boin_boundaries, boin_inverse, interval_probability, mtpi2_partition, posterior, safety_exclude,
};
use dosefind_core::rng::{seeded, StreamId};
use dosefind_core::scenarios::{paoletti_generate, random_scenario, PaolettiConfig, RandomScenarioAxes};
use dosefind_core::selection::{pava, select_mtd, true_mtd, TrueMtdRule};
use dosefind_core::simulator::{simulate_stream, TrialConfig};
use dosefind_core::special::reg_inc_beta;
use dosefind_core::tables::decision_table;
use dosefind_core::*;
use proptest::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

fn fixed_specs(target: TargetSpec) -> Vec<DesignSpec> {
    let mut specs = vec![
        DesignSpec::tpi(target),
        DesignSpec::mtpi(target),
        DesignSpec::mtpi2(target),
        DesignSpec::boin(BoinVariant::Default, target),
        DesignSpec::boin(BoinVariant::Epsilon, target),
        DesignSpec::boin(BoinVariant::Lambda, target),
    ];
    if dosefind_core::design::ccd_delta(target.p_t).is_ok() {
        specs.push(DesignSpec::ccd(target));
    }
    specs
}

#[test]
fn incomplete_beta_matches_statrs() {
    for &(a, b) in &[(1.0, 1.0), (2.0, 5.0), (0.5, 0.5), (13.0, 4.0), (31.0, 2.0), (1.005, 30.005)] {
        let dist = Beta::new(a, b).unwrap();
        for i in 1..100 {
            let x = i as f64 / 100.0;
            let ours = reg_inc_beta(a, b, x).unwrap();
            assert!((ours - dist.cdf(x)).abs() < 1e-10, "I_{x}({a}, {b})");
        }
    }
}

fn trapezoid_beta_mass(alpha: f64, beta: f64, lo: f64, hi: f64, steps: usize) -> f64 {
    let ln_b = statrs::function::beta::ln_beta(alpha, beta);
    let term = |a: f64, v: f64| if a == 1.0 { 0.0 } else { (a - 1.0) * v.ln() };
    let dens = |p: f64| (term(alpha, p) + term(beta, 1.0 - p) - ln_b).exp();
    let h = (hi - lo) / steps as f64;
    let mut s = 0.5 * (dens(lo) + dens(hi));
    for j in 1..steps {
        s += dens(lo + j as f64 * h);
    }
    s * h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interval_probability_matches_grid(x in 0u32..15, extra in 0u32..15, lo in 0.0f64..0.9, w in 0.01f64..0.5) {
        let n = x + extra;
        let hi = (lo + w).min(1.0);
        let post = posterior(DoseTally::new(x, n).unwrap(), BetaPrior::default()).unwrap();
        let ours = interval_probability(&post, Interval::new(lo, hi).unwrap()).unwrap();
        let grid = trapezoid_beta_mass(post.alpha, post.beta, lo, hi, 20_000);
        prop_assert!((ours - grid).abs() < 1e-6, "{ours} vs {grid}");
    }

    #[test]
    fn tables_are_column_monotone(p_t in 0.1f64..0.4, e1 in 0.005f64..0.06, e2 in 0.005f64..0.06) {
        let target = TargetSpec::new(p_t, e1, e2).unwrap();
        for spec in fixed_specs(target) {
            let t = decision_table(&spec.compile().unwrap(), 20).unwrap();
            prop_assert!(t.is_column_monotone(), "{}", spec.name());
            for col in &t.cells {
                if let Some(first) = col.iter().position(|d| d.is_exclusion()) {
                    prop_assert!(col[first..].iter().all(|d| d.is_exclusion()));
                }
            }
        }
    }

    #[test]
    fn safety_rule_is_monotone_in_x(p_t in 0.05f64..0.5, n in 3u32..40) {
        let target = TargetSpec::symmetric(p_t, 0.01).unwrap();
        let mut fired = false;
        for x in 0..=n {
            let now = safety_exclude(&target, DoseTally::new(x, n).unwrap(), 0.95, 3).unwrap();
            prop_assert!(!fired || now);
            fired = now;
        }
    }

    #[test]
    fn mtpi2_tiles_cover_the_unit_interval(p_t in 0.05f64..0.6, e1 in 0.005f64..0.1, e2 in 0.005f64..0.1) {
        prop_assume!(p_t - e1 > 0.0 && p_t + e2 < 1.0);
        let target = TargetSpec::new(p_t, e1, e2).unwrap();
        let tiles = mtpi2_partition(&target).unwrap();
        prop_assert!(tiles[0].0.lo == 0.0 && tiles.last().unwrap().0.hi == 1.0);
        for w in tiles.windows(2) {
            prop_assert!((w[0].0.hi - w[1].0.lo).abs() < 1e-12);
        }
        let post = posterior(DoseTally::new(2, 7).unwrap(), BetaPrior::default()).unwrap();
        let total: f64 = tiles.iter().map(|(iv, _)| interval_probability(&post, *iv).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn boin_inverse_round_trips(p_t in 0.1f64..0.5, a in 0.2f64..0.95, b in 1.05f64..1.8) {
        let phi1 = a * p_t;
        let phi2 = (b * p_t).min(0.95);
        prop_assume!(phi2 > p_t);
        let bb = boin_boundaries(p_t, phi1, phi2).unwrap();
        prop_assert!(bb.lambda_e > phi1 && bb.lambda_e < p_t && bb.lambda_d > p_t && bb.lambda_d < phi2);
        let (r1, r2) = boin_inverse(p_t, bb.lambda_e, bb.lambda_d).unwrap();
        prop_assert!((r1 - phi1).abs() < 1e-8 && (r2 - phi2).abs() < 1e-8);
    }

    #[test]
    fn pava_matches_grid_projection(vals in prop::collection::vec(0.0f64..1.0, 1..=5), ws in prop::collection::vec(0.5f64..5.0, 5)) {
        let w = &ws[..vals.len()];
        let fit = pava(&vals, w).unwrap();
        prop_assert!(fit.windows(2).all(|p| p[0] <= p[1] + 1e-15));
        prop_assert_eq!(&pava(&fit, w).unwrap(), &fit);
        let brute = grid_projection(&vals, w, 1000);
        for (f, g) in fit.iter().zip(&brute) {
            prop_assert!((f - g).abs() < 2e-3, "{fit:?} vs {brute:?}");
        }
    }

    #[test]
    fn selection_picks_tried_open_doses(raw in prop::collection::vec((0u32..7, 0u32..10, any::<bool>()), 1..7)) {
        let tallies: Vec<DoseTally> = raw.iter().map(|&(x, extra, _)| DoseTally::new(x.min(extra + x), x + extra).unwrap()).collect();
        let excluded: Vec<bool> = raw.iter().map(|r| r.2).collect();
        let target = TargetSpec::symmetric(0.3, 0.05).unwrap();
        let r = select_mtd(&tallies, &excluded, &target, BetaPrior::default()).unwrap();
        if let Some(d) = r.selected {
            prop_assert!(tallies[d].n > 0 && !excluded[d]);
        } else {
            prop_assert!((0..tallies.len()).all(|i| tallies[i].n == 0 || excluded[i]));
        }
        let est: Vec<f64> = r.isotonic_estimates.iter().flatten().copied().collect();
        prop_assert!(est.windows(2).all(|p| p[0] <= p[1] + 1e-15));
    }

    #[test]
    fn true_mtd_rules_are_exclusive(probs in prop::collection::vec(0.0f64..1.0, 1..8), p_t in 0.1f64..0.5) {
        let target = TargetSpec::symmetric(p_t, 0.05).unwrap();
        let m = true_mtd(&probs, &target);
        let in_ei = probs.iter().any(|&p| p >= p_t - 0.05 && p <= p_t + 0.05);
        let below = probs.iter().any(|&p| p < p_t);
        let expected = if in_ei { TrueMtdRule::InInterval } else if below { TrueMtdRule::HighestBelowTarget } else { TrueMtdRule::None };
        prop_assert_eq!(m.rule, expected);
    }

    #[test]
    fn trajectories_respect_moves_and_exclusions(seed in any::<u64>(), design in 0usize..4) {
        let sc = random_scenario(&RandomScenarioAxes::default(), &mut seeded(seed, 0)).unwrap();
        let target = TargetSpec::symmetric(sc.p_t, 0.05).unwrap();
        let spec = match design {
            0 => DesignSpec::mtpi(target),
            1 => DesignSpec::mtpi2(target),
            2 => DesignSpec::boin(BoinVariant::Lambda, target),
            _ => DesignSpec::crm(CrmModel::default_for(sc.n_doses().max(2)), target),
        };
        prop_assume!(sc.n_doses() >= 2);
        let d = spec.compile().unwrap();
        let cfg = TrialConfig::new(30, 3).unwrap();
        let r = simulate_stream(&d, &sc, &cfg, StreamId::new(seed, 0, 0, 0)).unwrap();
        prop_assert!(r.patients() <= 30);
        let mut excluded = vec![false; sc.n_doses()];
        let mut highest = 0usize;
        for (i, c) in r.cohorts.iter().enumerate() {
            prop_assert!(!excluded[c.dose], "treated at an excluded dose");
            if i > 0 {
                let prev = r.cohorts[i - 1].dose;
                if design < 3 {
                    prop_assert!(c.dose.abs_diff(prev) <= 1);
                } else {
                    prop_assert!(c.dose <= highest + 1);
                }
            }
            highest = highest.max(c.dose);
            if c.decision.is_exclusion() {
                for e in &mut excluded[c.dose..] {
                    *e = true;
                }
            }
        }
    }
}

/// Exact least-squares projection onto non-decreasing vectors restricted to
/// the grid {0, 1/g, ..., 1}, by dynamic programming over the last value.
fn grid_projection(vals: &[f64], w: &[f64], g: usize) -> Vec<f64> {
    let grid: Vec<f64> = (0..=g).map(|k| k as f64 / g as f64).collect();
    let mut cost = vec![0.0; g + 1];
    let mut back: Vec<Vec<usize>> = Vec::new();
    for (i, (&v, &wi)) in vals.iter().zip(w).enumerate() {
        let mut best_prev = vec![0usize; g + 1];
        let mut next = vec![0.0; g + 1];
        let (mut run_min, mut run_arg) = (f64::INFINITY, 0);
        for k in 0..=g {
            if i > 0 && cost[k] < run_min {
                run_min = cost[k];
                run_arg = k;
            }
            let prev = if i == 0 { 0.0 } else { run_min };
            next[k] = prev + wi * (grid[k] - v).powi(2);
            best_prev[k] = run_arg;
        }
        cost = next;
        back.push(best_prev);
    }
    let mut k = (0..=g).min_by(|&a, &b| cost[a].total_cmp(&cost[b])).unwrap();
    let mut out = vec![0.0; vals.len()];
    for i in (0..vals.len()).rev() {
        out[i] = grid[k];
        k = back[i][k];
    }
    out
}

fn riemann_crm_means(model: &CrmModel, tallies: &[DoseTally]) -> Vec<f64> {
    let sd = model.prior_sd;
    let step = 1e-4;
    let half = 14.0 * sd;
    let steps = (2.0 * half / step) as usize;
    let mut z = 0.0;
    let mut m = vec![0.0; model.n_doses()];
    let mut logs = Vec::with_capacity(steps);
    for j in 0..steps {
        let th = -half + (j as f64 + 0.5) * step;
        let mut ll = -0.5 * th * th / (sd * sd);
        for (q, t) in model.skeleton.iter().zip(tallies) {
            let p = q.powf(th.exp());
            ll += t.x as f64 * p.ln() + (t.n - t.x) as f64 * (1.0 - p).ln();
        }
        logs.push((th, ll));
    }
    let top = logs.iter().map(|l| l.1).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    for (th, ll) in logs {
        let w = (ll - top).exp();
        if w.is_nan() || w <= 0.0 {
            continue;
        }
        z += w;
        for (mi, q) in m.iter_mut().zip(&model.skeleton) {
            *mi += w * q.powf(th.exp());
        }
    }
    m.iter().map(|v| v / z).collect()
}

#[test]
fn crm_quadrature_matches_riemann_oracle() {
    let mut rng = seeded(2024, 9);
    for _ in 0..20 {
        let k = 3 + dosefind_core::rng::below(&mut rng, 4) as usize;
        let model = CrmModel::default_for(k);
        let mut data = TrialData::new(k, 0);
        for t in data.tallies.iter_mut() {
            let n = 3 * dosefind_core::rng::below(&mut rng, 4) as u32;
            let x = if n == 0 { 0 } else { dosefind_core::rng::below(&mut rng, n as u64 + 1) as u32 };
            *t = DoseTally::new(x, n).unwrap();
        }
        let ours = crm_posterior(&model, &data.tallies).unwrap().mean;
        let oracle = riemann_crm_means(&model, &data.tallies);
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{ours:?} vs {oracle:?}");
        }
        assert!(ours.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn crm_prior_spread_grows_with_prior_sd() {
    let tallies = vec![DoseTally::empty(); 6];
    let narrow = crm_posterior(&CrmModel::new(CrmModel::default_for(6).skeleton, 0.5).unwrap(), &tallies).unwrap();
    let wide = crm_posterior(&CrmModel::new(CrmModel::default_for(6).skeleton, 1.0).unwrap(), &tallies).unwrap();
    assert!(narrow.sd.iter().zip(&wide.sd).all(|(a, b)| b > a));
    let mut safe = tallies.clone();
    safe[0] = DoseTally::new(0, 6).unwrap();
    let after = crm_posterior(&CrmModel::default_for(6), &safe).unwrap().mean;
    let before = crm_posterior(&CrmModel::default_for(6), &tallies).unwrap().mean;
    assert!(after.iter().zip(&before).all(|(a, b)| a < b));
}

#[test]
fn paoletti_scenarios_are_monotone() {
    let cfg = PaolettiConfig::new(6, 0.2);
    let mut rng = seeded(3, 1);
    for _ in 0..2000 {
        let draw = paoletti_generate(&cfg, &mut rng).unwrap();
        assert!(draw.scenario.is_monotone());
        assert!(draw.scenario.probs.iter().all(|&p| p > 0.0 && p < 1.0));
    }
}

#[test]
fn random_scenarios_cover_their_axes() {
    let axes = RandomScenarioAxes::default();
    let mut rng = seeded(5, 2);
    let mut sizes = [0usize; 9];
    for _ in 0..6000 {
        let s = random_scenario(&axes, &mut rng).unwrap();
        assert!(s.is_monotone());
        assert!(axes.targets.contains(&s.p_t));
        sizes[s.n_doses()] += 1;
    }
    // Six equally likely dose counts: chi-square with 5 df, 0.1% point 20.5.
    let expected = 1000.0;
    let chi2: f64 = sizes[3..=8].iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 20.5, "chi2 = {chi2}");
}
