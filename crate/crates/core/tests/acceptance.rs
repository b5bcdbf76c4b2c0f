//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twostage_risk::crc::{split_indices, tcrc_feasible_set, tcrc_split_feasible_set, Lambda0Policy, SplitConfig};
use twostage_risk::harness::config::{CalibratorConfig, ExperimentConfig, GridSpec, Lambda0Keyword, Lambda0Spec};
use twostage_risk::harness::experiment::run_experiment;
use twostage_risk::harness::synth::{synth_generate, SynthConfig};
use twostage_risk::harness::validate::{mc_validate, ValidateConfig};
use twostage_risk::ltt::{compute_pvalue_families, ltt_feasible_set, LttConfig, LttProcedure, PValueFamilies};
use twostage_risk::pvalue::hb_pvalue;
use twostage_risk::retrieval::{monotonize1, monotonize2, ranking_loss, retrieval_loss, DocRecord, QueryRecord, R0Config};
use twostage_risk::{Error, LossTable1, LossTable2, ParameterGrid, RiskLevels};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------------------------------------------------------------------------
// 1. Brute-force equivalence

struct Instance {
    n: usize,
    grid: Vec<f64>,
    /// `l1[i][a]`
    l1: Vec<Vec<f64>>,
    /// `l2[i][a][b]`
    l2: Vec<Vec<Vec<f64>>>,
}

fn random_grid(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let mut pool: Vec<usize> = (0..20).collect();
    let mut picked = Vec::new();
    for _ in 0..m - 1 {
        let k = rng.random_range(0..pool.len());
        picked.push(pool.swap_remove(k));
    }
    picked.sort_unstable();
    let mut g: Vec<f64> = picked.into_iter().map(|k| k as f64 * 0.05).collect();
    g.push(1.0);
    g
}

/// Losses are multiples of 1/64 so that every sum is exact.
fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(6..=20);
    let m = rng.random_range(1..=10);
    let grid = random_grid(rng, m);
    let zero_top = rng.random_bool(0.7);
    let cell = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.3) {
            0.0
        } else {
            rng.random_range(0..=64) as f64 / 64.0
        }
    };
    let l1 = (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..m).map(|_| cell(rng)).collect();
            if zero_top {
                row[m - 1] = 0.0;
            }
            for a in (0..m - 1).rev() {
                row[a] = row[a].max(row[a + 1]);
            }
            row
        })
        .collect();
    let l2 = (0..n)
        .map(|_| {
            let mut s: Vec<Vec<f64>> = (0..m).map(|_| (0..m).map(|_| cell(rng)).collect()).collect();
            if zero_top {
                s[m - 1][m - 1] = 0.0;
            }
            for a in (0..m).rev() {
                for b in (0..m).rev() {
                    let mut v = s[a][b];
                    if a + 1 < m {
                        v = v.max(s[a + 1][b]);
                    }
                    if b + 1 < m {
                        v = v.max(s[a][b + 1]);
                    }
                    s[a][b] = v;
                }
            }
            s
        })
        .collect();
    Instance { n, grid, l1, l2 }
}

impl Instance {
    fn tables(&self) -> (LossTable1, LossTable2) {
        let g = ParameterGrid::new(self.grid.clone()).unwrap();
        let t1 = LossTable1::from_rows(g.clone(), &self.l1).unwrap();
        let slices: Vec<Vec<f64>> = self.l2.iter().map(|s| s.concat()).collect();
        let t2 = LossTable2::from_slices(g.clone(), g, &slices).unwrap();
        (t1, t2)
    }

    fn m(&self) -> usize {
        self.grid.len()
    }

    fn sum1(&self, rows: &[usize], a: usize) -> f64 {
        rows.iter().map(|&i| self.l1[i][a]).sum()
    }

    fn sum2(&self, rows: &[usize], a: usize, b: usize) -> f64 {
        rows.iter().map(|&i| self.l2[i][a][b]).sum()
    }

    fn ceil(&self, x: f64) -> usize {
        self.grid.iter().position(|&v| v >= x - 1e-12).unwrap_or(self.m() - 1)
    }

    fn gamma0(&self, rows: &[usize], a: usize, alpha2: f64) -> usize {
        let bound = (rows.len() as f64 + 1.0) * alpha2 - 1.0;
        (0..self.m()).find(|&b| self.sum2(rows, a, b) <= bound).unwrap_or(self.m() - 1)
    }
}

/// The union over a fine sweep of `t` of `{(λ̂(t), γ) : γ >= γ̂₀(λ̂(t))}`.
fn tcrc_oracle(inst: &Instance, alpha1: f64, alpha2: f64) -> Option<BTreeSet<(usize, usize)>> {
    let rows: Vec<usize> = (0..inst.n).collect();
    let m = inst.m();
    let b1 = (inst.n as f64 + 1.0) * alpha1 - 1.0;
    let b2 = (inst.n as f64 + 1.0) * alpha2 - 1.0;
    let l1 = (0..m).find(|&a| inst.sum1(&rows, a) <= b1)?;
    let l2 = (0..m).find(|&a| inst.sum2(&rows, a, m - 1) <= b2)?;
    let base = inst.grid[l1.max(l2)];
    let mut set = BTreeSet::new();
    for k in 0..=20_000 {
        let t = k as f64 / 20_000.0;
        let a = inst.ceil(t * base + (1.0 - t));
        for b in inst.gamma0(&rows, a, alpha2)..m {
            set.insert((a, b));
        }
    }
    Some(set)
}

fn tcrc_split_oracle(
    inst: &Instance,
    alpha1: f64,
    alpha2: f64,
    split: &SplitConfig,
    lambda0: f64,
) -> Option<BTreeSet<(usize, usize)>> {
    let (i1, i2) = split_indices(inst.n, split).unwrap();
    let m = inst.m();
    let b1 = (i1.len() as f64 + 1.0) * alpha1 - 1.0;
    let l1 = (0..m).find(|&a| inst.sum1(&i1, a) <= b1)?;
    let start = inst.ceil(inst.grid[l1].max(lambda0));
    let gbar = inst.gamma0(&i2, start, alpha2);
    Some((start..m).flat_map(|a| (gbar..m).map(move |b| (a, b))).collect())
}

fn level(
    proc_: LttProcedure,
    delta: f64,
    w: f64,
    m1: usize,
    m2: usize,
    i: usize,
) -> (f64, f64) {
    let geo = w.powi((m1 - 1 - i) as i32) * delta;
    match proc_ {
        LttProcedure::BonferroniFixedSequence => (delta / m1 as f64, delta / m1 as f64),
        LttProcedure::GeometricFixedSequence => (geo, (1.0 - w) * geo),
        LttProcedure::BonferroniBonferroni => (delta / m1 as f64, delta / (m1 * m2) as f64),
        LttProcedure::GeometricBonferroni => (geo, (1.0 - w) * geo / m2 as f64),
    }
}

/// Set-form definitions: a fixed-sequence index is rejected iff it and every
/// later index pass their levels; a Bonferroni index iff it passes its own.
fn ltt_oracle(f: &PValueFamilies, proc_: LttProcedure, delta: f64, w: f64) -> BTreeSet<(usize, usize)> {
    let (m1, m2) = (f.m_lambda(), f.m_gamma());
    let fixed1 = matches!(proc_, LttProcedure::GeometricFixedSequence | LttProcedure::GeometricBonferroni);
    let fixed2 = matches!(proc_, LttProcedure::BonferroniFixedSequence | LttProcedure::GeometricFixedSequence);
    let lv = |i: usize| level(proc_, delta, w, m1, m2, i);
    let r1: Vec<usize> = (0..m1)
        .filter(|&i| {
            if fixed1 {
                (i..m1).all(|k| f.stage1(k) <= lv(k).0)
            } else {
                f.stage1(i) <= lv(i).0
            }
        })
        .collect();
    let mut set = BTreeSet::new();
    for i in r1 {
        let l2 = lv(i).1;
        for j in 0..m2 {
            let ok = if fixed2 { (j..m2).all(|k| f.stage2(i, k) <= l2) } else { f.stage2(i, j) <= l2 };
            if ok {
                set.insert((i, j));
            }
        }
    }
    set
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = Vec::new();
    let mut nonempty = [0usize; 6];
    let alphas = [0.3, 0.4, 0.5, 0.6, 0.75, 0.9];
    for k in 0..1000 {
        let inst = random_instance(&mut rng);
        let (t1, t2) = inst.tables();
        let a1 = alphas[rng.random_range(0..alphas.len())];
        let a2 = alphas[rng.random_range(0..alphas.len())];
        let levels = RiskLevels::new(a1, a2).unwrap();

        let got = match tcrc_feasible_set(&t1, &t2, levels) {
            Ok(s) => Some(s.iter().collect::<BTreeSet<_>>()),
            Err(Error::Infeasible(_)) => None,
            Err(e) => panic!("{e}"),
        };
        let want = tcrc_oracle(&inst, a1, a2);
        nonempty[0] += want.as_ref().is_some_and(|s| !s.is_empty()) as usize;
        if got != want {
            mismatches.push(format!("instance {k} tcrc"));
        }

        let split = SplitConfig { split_fraction: 0.5, seed: k };
        let lambda0 = if rng.random_bool(0.5) {
            inst.grid[rng.random_range(0..inst.m())]
        } else {
            rng.random::<f64>()
        };
        let got = match tcrc_split_feasible_set(&t1, &t2, levels, &split, Lambda0Policy::Known(lambda0)) {
            Ok(s) => Some(s.iter().collect::<BTreeSet<_>>()),
            Err(Error::Infeasible(_)) => None,
            Err(e) => panic!("{e}"),
        };
        let want = tcrc_split_oracle(&inst, a1, a2, &split, lambda0);
        nonempty[1] += want.as_ref().is_some_and(|s| !s.is_empty()) as usize;
        if got != want {
            mismatches.push(format!("instance {k} tcrc-s"));
        }

        let fam = compute_pvalue_families(&t1, &t2, levels).unwrap();
        let delta = [0.05, 0.1, 0.2, 0.5][rng.random_range(0..4)];
        let w = [0.3, 0.5, 0.9][rng.random_range(0..3)];
        for (p, proc_) in LttProcedure::ALL.into_iter().enumerate() {
            let cfg = LttConfig::new(delta, proc_, Some(w)).unwrap();
            let got: BTreeSet<_> = ltt_feasible_set(&fam, &cfg).unwrap().iter().collect();
            let want = ltt_oracle(&fam, proc_, delta, w);
            nonempty[2 + p] += !want.is_empty() as usize;
            if got != want {
                mismatches.push(format!("instance {k} {}", proc_.name()));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches.is_empty() && secs < 60.0,
        format!(
            "1000 instances x 6 calibrators, {} mismatches {:?}, nonempty oracle sets {:?}, {secs:.1}s",
            mismatches.len(),
            mismatches.iter().take(3).collect::<Vec<_>>(),
            nonempty
        ),
    )
}

// ---------------------------------------------------------------------------
// 2-5. Monte Carlo guarantees

fn grid05() -> GridSpec {
    GridSpec::range(0.0, 1.0, 0.05)
}

fn crc_small_n_config() -> ValidateConfig {
    ValidateConfig {
        calibrators: vec![
            CalibratorConfig::Tcrc,
            CalibratorConfig::TcrcS {
                split_fraction: 0.5,
                lambda0: Lambda0Spec::Keyword(Lambda0Keyword::Analytic),
            },
        ],
        trials: 10_000,
        n: 100,
        holdout: 1,
        alpha1: 0.1,
        alpha2: 0.1,
        grid_lambda: grid05(),
        grid_gamma: grid05(),
        seed: 2,
        ..ValidateConfig::default()
    }
}

fn criteria_2_and_3() -> (Outcome, Outcome) {
    let start = Instant::now();
    let rep = mc_validate(&crc_small_n_config()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let describe = |r: &twostage_risk::harness::validate::GuaranteeReport, prefix: &str| {
        let checks: Vec<_> = r.checks.iter().filter(|c| c.name.starts_with(prefix)).collect();
        let pass = !checks.is_empty() && checks.iter().all(|c| c.pass) && r.infeasible_trials == 0;
        let text = checks
            .iter()
            .map(|c| format!("{} {:.4}<={:.4}", c.name, c.estimate, c.bound))
            .collect::<Vec<_>>()
            .join(", ");
        (pass, text)
    };
    let (p2, d2) = describe(&rep.reports[0], "stage1");
    let (p3a, d3a) = describe(&rep.reports[1], "stage1");
    let (p3b, d3b) = describe(&rep.reports[1], "stage2");
    (
        outcome(p2 && secs < 300.0, format!("tcrc n=100, 10000 trials: {d2}; {secs:.1}s")),
        outcome(p3a && p3b, format!("tcrc-s n=100, 10000 trials: {d3a}, {d3b}")),
    )
}

fn criterion_4() -> Outcome {
    let cfg = ValidateConfig {
        calibrators: vec![CalibratorConfig::Tcrc],
        trials: 500,
        n: 2000,
        holdout: 20,
        grid_lambda: grid05(),
        grid_gamma: grid05(),
        asymptotic_slack: 0.015,
        seed: 4,
        ..ValidateConfig::default()
    };
    let rep = mc_validate(&cfg).unwrap();
    let r = &rep.reports[0];
    let checks: Vec<_> = r.checks.iter().filter(|c| c.name.starts_with("stage2")).collect();
    let pass = checks.iter().all(|c| c.pass && c.bound <= 0.1 + 0.015 + 1e-12) && r.infeasible_trials == 0;
    outcome(
        pass,
        format!(
            "tcrc n=2000, 500 trials: {}",
            checks.iter().map(|c| format!("{} {:.4}<={:.4}", c.name, c.estimate, c.bound)).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cfg = ValidateConfig {
        calibrators: LttProcedure::ALL
            .into_iter()
            .map(|p| CalibratorConfig::ltt(0.1, p, p.needs_weight().then_some(0.5)))
            .collect(),
        trials: 500,
        n: 200,
        grid_lambda: grid05(),
        grid_gamma: grid05(),
        seed: 5,
        ..ValidateConfig::default()
    };
    let rep = mc_validate(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let parts: Vec<String> = rep
        .reports
        .iter()
        .map(|r| {
            let c = r.check("fwer").unwrap();
            format!("{} {:.3}", r.calibrator.trim_start_matches("ltt:"), c.estimate)
        })
        .collect();
    let pass = rep.reports.iter().all(|r| r.check("fwer").unwrap().estimate <= 0.140) && secs < 600.0;
    outcome(pass, format!("violation fractions (bound 0.140): {}; {secs:.1}s", parts.join(", ")))
}

// ---------------------------------------------------------------------------
// 6. HB p-value super-uniformity

fn criterion_6() -> Outcome {
    let trials = 10_000;
    let n = 100;
    let mut ok = true;
    let mut parts = Vec::new();
    for (s, alpha) in [0.1f64, 0.3].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(60 + s as u64);
        let ps: Vec<f64> = (0..trials)
            .map(|_| {
                let k = (0..n).filter(|_| rng.random_bool(alpha)).count();
                hb_pvalue(k as f64 / n as f64, n, alpha).unwrap().value()
            })
            .collect();
        for u in [0.05, 0.1, 0.2] {
            let frac = ps.iter().filter(|&&p| p <= u).count() as f64 / trials as f64;
            let bound = u + 3.0 * (u * (1.0 - u) / trials as f64).sqrt();
            ok &= frac <= bound;
            parts.push(format!("a={alpha} u={u}: {frac:.4}<={bound:.4}"));
        }
    }
    outcome(ok, parts.join(", "))
}

// ---------------------------------------------------------------------------
// 7. Loss identities

fn random_query(rng: &mut ChaCha8Rng, id: usize) -> QueryRecord {
    let k = rng.random_range(1..15);
    let docs = (0..k)
        .map(|j| DocRecord::new(format!("d{j}"), rng.random_range(0..5), rng.random(), rng.random()))
        .collect();
    QueryRecord::new(format!("q{id}"), docs).unwrap()
}

/// Ranking loss with base-2 logarithms.
fn ranking_loss_log2(q: &QueryRecord, lambda: f64, gamma: f64, r0: u32) -> f64 {
    let mut z: Vec<&DocRecord> = q.docs.iter().filter(|d| d.relevance >= r0).collect();
    z.sort_by_key(|d| std::cmp::Reverse(d.relevance));
    if z.is_empty() {
        return 0.0;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (j, d) in z.iter().enumerate() {
        let w = 1.0 / ((j + 2) as f64).log2();
        den += w;
        if d.score_retrieval >= 1.0 - lambda && d.score_rank >= 1.0 - gamma {
            num += w;
        }
    }
    1.0 - num / den
}

fn criterion_7() -> Outcome {
    let r0 = R0Config::new(1).unwrap();
    let hand = QueryRecord::new(
        "hand",
        vec![
            DocRecord::new("p1", 3, 1.0, 1.0),
            DocRecord::new("p2", 2, 1.0, 0.0),
            DocRecord::new("p3", 1, 1.0, 1.0),
        ],
    )
    .unwrap();
    let ln_value = ranking_loss(&hand, 0.5, 0.5, r0);
    let log2_value = ranking_loss_log2(&hand, 0.5, 0.5, 1);
    let target = 1.0 - 2.1640 / 3.0742;
    let mut ok = (ln_value - 0.29607).abs() < 1e-4 && (log2_value - 0.29607).abs() < 1e-4 && (ln_value - target).abs() < 1e-4;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_base = 0.0f64;
    let mut nonzero_at_one = 0;
    for i in 0..1000 {
        let q = random_query(&mut rng, i);
        let r0 = R0Config::new(rng.random_range(1..=3)).unwrap();
        if retrieval_loss(&q, 1.0) != 0.0 || ranking_loss(&q, 1.0, 1.0, r0) != 0.0 {
            nonzero_at_one += 1;
        }
        let (l, g) = (rng.random::<f64>(), rng.random::<f64>());
        worst_base = worst_base.max((ranking_loss(&q, l, g, r0) - ranking_loss_log2(&q, l, g, r0.r0)).abs());
    }
    ok &= nonzero_at_one == 0 && worst_base <= 1e-12;
    outcome(
        ok,
        format!(
            "hand case ln {ln_value:.5}, log2 {log2_value:.5}; 1000 queries: {nonzero_at_one} nonzero at 1, max base gap {worst_base:.1e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. Monotonization

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = ParameterGrid::uniform(0.0, 1.0, 0.25).unwrap();
    let (mut mismatches, mut not_idem, mut not_dom) = (0, 0, 0);
    for _ in 0..500 {
        let s: Vec<f64> = (0..25).map(|_| rng.random()).collect();
        let t = LossTable2::from_slices(g.clone(), g.clone(), std::slice::from_ref(&s)).unwrap();
        let m = monotonize2(t);
        for a in 0..5 {
            for b in 0..5 {
                let mut sup = f64::NEG_INFINITY;
                for a2 in a..5 {
                    for b2 in b..5 {
                        sup = sup.max(s[a2 * 5 + b2]);
                    }
                }
                mismatches += (m.get(0, a, b) != sup) as usize;
                not_dom += (m.get(0, a, b) < s[a * 5 + b]) as usize;
            }
        }
        let again = monotonize2(m.clone());
        not_idem += (again.slice(0) != m.slice(0)) as usize;

        let row: Vec<f64> = (0..5).map(|_| rng.random()).collect();
        let m1 = monotonize1(LossTable1::from_rows(g.clone(), std::slice::from_ref(&row)).unwrap());
        for a in 0..5 {
            let sup = row[a..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            mismatches += (m1.get(0, a) != sup) as usize;
        }
        not_idem += (monotonize1(m1.clone()).row(0) != m1.row(0)) as usize;
    }
    outcome(
        mismatches == 0 && not_idem == 0 && not_dom == 0,
        format!("500 slices and rows: {mismatches} oracle mismatches, {not_idem} idempotence failures, {not_dom} dominance failures"),
    )
}

// ---------------------------------------------------------------------------
// 9. Qualitative comparison

fn criterion_9() -> Outcome {
    let data = synth_generate(&SynthConfig { n_queries: 1000, seed: 9, ..SynthConfig::default() }).unwrap();
    let cfg = ExperimentConfig {
        calibrators: vec![CalibratorConfig::ltt(0.01, LttProcedure::BonferroniFixedSequence, None), CalibratorConfig::Tcrc],
        grid_lambda: GridSpec::range(0.0, 1.0, 0.02),
        grid_gamma: GridSpec::range(0.0, 1.0, 0.02),
        replications: 50,
        seed: 9,
        ..ExperimentConfig::default()
    };
    let res = run_experiment(&data, &cfg, None).unwrap();
    let ltt: Vec<_> = res.method_rows("ltt:bonferroni-fixed-sequence").collect();
    let tcrc: Vec<_> = res.method_rows("tcrc").collect();
    let (mut risk_ok, mut size_ok, mut both) = (0, 0, 0);
    for (l, t) in ltt.iter().zip(&tcrc) {
        if let (Ok(l), Ok(t)) = (&l.outcome, &t.outcome) {
            both += 1;
            risk_ok += (l.report.risk2 <= t.report.risk2) as usize;
            size_ok += (t.report.set_size <= l.report.set_size) as usize;
        }
    }
    let reps = cfg.replications as f64;
    let pass = risk_ok as f64 >= 0.8 * reps && size_ok as f64 >= 0.8 * reps;
    let (lm, _) = res.means("ltt:bonferroni-fixed-sequence");
    let (tm, _) = res.means("tcrc");
    outcome(
        pass,
        format!(
            "{both}/50 both feasible; LTT risk2 <= tCRC in {risk_ok}, tCRC size <= LTT in {size_ok}; means risk2 {:.4} vs {:.4}, size {:.2} vs {:.2}",
            lm[1].unwrap_or(f64::NAN),
            tm[1].unwrap_or(f64::NAN),
            lm[2].unwrap_or(f64::NAN),
            tm[2].unwrap_or(f64::NAN)
        ),
    )
}

// ---------------------------------------------------------------------------
// 10. Determinism

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.tsv");
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"experiment": {"calibrators": [{"method": "tcrc"}, {"method": "tcrc-s"},
            {"method": "ltt", "delta": 0.1, "procedure": "geometric-fixed-sequence", "w": 0.5}],
            "grid_lambda": {"start": 0, "stop": 1, "step": 0.05},
            "grid_gamma": {"start": 0, "stop": 1, "step": 0.05}, "replications": 6}}"#,
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_twostage");
    let sim = Command::new(bin)
        .args(["simulate", "--n-queries", "400", "--seed", "10", "--out"])
        .arg(&data)
        .status()
        .unwrap();
    assert!(sim.success());
    let run = |threads: &str| {
        let out = Command::new(bin)
            .env("RAYON_NUM_THREADS", threads)
            .arg("--config")
            .arg(&config)
            .args(["--seed", "10", "run", "--data"])
            .arg(&data)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let a = run("1");
    let b = run("1");
    let c = run("4");
    let pass = !a.is_empty() && a == b && a == c;
    outcome(pass, format!("{} CSV bytes; repeat identical: {}, 1 vs 4 threads identical: {}", a.len(), a == b, a == c))
}

fn main() {
    // `cargo test` passes harness flags; a name filter skips the suite.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!("criterion {n:>2} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "brute-force equivalence", criterion_1());
    let (c2, c3) = criteria_2_and_3();
    report(2, "stage-1 conformal guarantee", c2);
    report(3, "split calibrator stage-2 guarantee", c3);
    report(4, "full-sample stage-2 large n", criterion_4());
    report(5, "testing calibrators FWER", criterion_5());
    report(6, "p-value super-uniformity", criterion_6());
    report(7, "loss identities", criterion_7());
    report(8, "monotonization", criterion_8());
    report(9, "LTT vs tCRC direction", criterion_9());
    report(10, "determinism", criterion_10());
    let failed = results.iter().filter(|(_, _, o)| !o.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
