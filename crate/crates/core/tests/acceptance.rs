//! Acceptance criteria 1-7, one PASS/FAIL line each. Exits nonzero when any
//! criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use lownoise::channel::ParamVector;
use lownoise::fisher::{divergent_fisher, fisher_inverse};
use lownoise::report::{to_jsonl, without_timestamp, Metadata};
use lownoise::scenarios::{
    build_scenario, scenario_ancilla_bell, scenario_pauli2, scenario_threelevel, ClosedForms, Quantity, ScenarioConfig,
    ScenarioKind,
};
use lownoise::spectral::{delta_eigenvalues, lambda_matrix, reduced_eigenvalues, DeltaVariant};
use lownoise::suite::run_random_suite;
use lownoise::sweep::{run_sweep, run_sweep_with, Report, SweepOptions};

struct Outcome {
    pass: bool,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            pass: true,
            notes: Vec::new(),
        }
    }

    fn require(&mut self, ok: bool, note: impl Into<String>) {
        let note = note.into();
        self.notes.push(if ok { note } else { format!("FAILED {note}") });
        self.pass &= ok;
    }

    fn info(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }
}

fn check_line(r: &Report, name: &str) -> (bool, String) {
    match r.check(name) {
        Some(c) => (c.pass, format!("{}: {}", c.name, c.detail)),
        None => (false, format!("{name}: missing")),
    }
}

fn slope(r: &Report, q: Quantity) -> Option<f64> {
    r.fit(q).and_then(|f| f.fit).map(|f| f.slope)
}

fn within_budget(o: &mut Outcome, start: Instant, budget: Duration) {
    let t = start.elapsed();
    o.require(t < budget, format!("runtime {:.2}s (budget {}s)", t.as_secs_f64(), budget.as_secs()));
}

fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let r = run_sweep(&scenario_ancilla_bell()).expect("ancilla sweep");
    for name in ["printed-delta", "shifts", "fisher-diagonal"] {
        let (ok, line) = check_line(&r, name);
        o.require(ok, line);
    }
    let (ok, line) = check_line(&r, "order:inverse-deviation");
    o.require(ok, line);
    within_budget(&mut o, start, Duration::from_secs(5));
    o
}

fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let r = run_sweep(&scenario_pauli2()).expect("pauli sweep");
    for name in ["bloch-fisher", "order:inverse-eig-max", "order:inverse-eig-min", "zero-noise-limit"] {
        let (ok, line) = check_line(&r, name);
        o.require(ok, line);
    }
    o
}

fn criterion_3() -> Outcome {
    let mut o = Outcome::new();
    let sc = scenario_threelevel();
    let Some(ClosedForms::ThreeLevel(forms)) = &sc.closed_forms else {
        o.require(false, "three-level closed forms missing");
        return o;
    };
    let eps = ParamVector::new(vec![1e-3, 2e-3]).expect("valid ε");
    let lm = lambda_matrix(&sc.channel, &sc.input, &eps).expect("Λ");
    let reduced = reduced_eigenvalues(&lm).expect("K ≤ N − 1");
    let (plus, minus) = forms.shifts(&eps);
    let rel = (reduced[0] - plus).abs().max((reduced[1] - minus).abs()) / plus;
    o.require(rel <= 1e-6, format!("δp± vs Λ spectrum: relative {rel:.2e}"));

    let leading = delta_eigenvalues(&sc.channel, &sc.input, &eps, DeltaVariant::Leading).expect("leading Δ");
    let lam_vs_delta = reduced
        .iter()
        .zip(&leading.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    o.require(lam_vs_delta <= 1e-12, format!("Λ vs leading Δ eigenvalues: {lam_vs_delta:.2e}"));

    let inv = fisher_inverse(&divergent_fisher(&leading).expect("J^div"))
        .expect("invertible")
        .inverse
        .expect("inverse");
    let closed = forms.inverse_fisher(&eps);
    for (a, b, label) in [(0, 0, "J^11"), (1, 1, "J^22"), (0, 1, "J^12")] {
        let rel = (inv[(a, b)] - closed[(a, b)]).abs() / closed[(a, b)].abs();
        o.require(rel <= 1e-6, format!("{label} = {:.7e}: relative {rel:.2e}", closed[(a, b)]));
    }
    let r = run_sweep(&sc).expect("three-level sweep");
    for name in ["closed-shifts", "closed-inverse", "lambda-vs-delta"] {
        let (ok, line) = check_line(&r, name);
        o.require(ok, line);
    }
    o
}

fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    for sc in [scenario_ancilla_bell(), scenario_threelevel()] {
        let r = run_sweep(&sc).expect("sweep");
        for name in ["attainment", "order:bias", "order:inverse-gap", "cramer-rao"] {
            let (ok, line) = check_line(&r, name);
            o.require(ok, format!("{} {line}", sc.name));
        }
        if let Some(s) = slope(&r, Quantity::DivergentGap) {
            o.info(format!("{} ‖V − (J^div)⁻¹‖ slope {s:.3}", sc.name));
        }
    }
    // Same three-level channel with an input whose excited blocks decouple.
    let commuting = ScenarioConfig {
        input: Some(vec![[1.0, 0.0], [2.0, 0.0], [1.0, 0.0]]),
        ..ScenarioConfig::named(ScenarioKind::ThreeLevel)
    };
    let r = run_sweep(&build_scenario(&commuting).expect("scenario")).expect("sweep");
    if let Some(s) = slope(&r, Quantity::InverseGap) {
        o.info(format!("three-level input (1,2,1)/√6: ‖V − J⁻¹‖ slope {s:.3}"));
    }
    within_budget(&mut o, start, Duration::from_secs(30));
    o
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new();
    let r = run_sweep(&scenario_pauli2()).expect("pauli sweep");
    let (ok, line) = check_line(&r, "order:bad-direction-bound");
    o.require(ok, line);
    let att = r.check("attainment").expect("attainment row");
    o.require(!att.pass, format!("estimator refused: {}", att.detail));
    o
}

fn criterion_6() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let suite = run_random_suite(0, 100);
    let failures: Vec<String> = suite.failures().map(|(s, f)| format!("seed {s}: {f}")).collect();
    o.require(failures.is_empty(), format!("{} fixture failures {:?}", failures.len(), failures.iter().take(3).collect::<Vec<_>>()));
    let dims: std::collections::BTreeSet<usize> = suite.outcomes.iter().map(|x| x.dim).collect();
    o.info(format!("dimensions {dims:?}"));
    if let Some(v) = suite.worst(|x| Some(x.tpcp), true) {
        o.info(format!("max TPCP residual {v:.2e}"));
    }
    if let Some(v) = suite.worst(|x| Some(x.min_eigenvalue), false) {
        o.info(format!("min output eigenvalue {v:.2e}"));
    }
    let slopes: Vec<f64> = suite.outcomes.iter().filter_map(|x| x.first_order_slope).collect();
    let (lo, hi) = slopes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(*s), b.max(*s)));
    o.info(format!("first-order slopes in [{lo:.3}, {hi:.3}]"));
    let tp_count = suite.outcomes.iter().filter(|x| x.trace_power.is_some()).count();
    if let Some(v) = suite.worst(|x| x.trace_power, true) {
        o.info(format!("trace-power max {v:.2e} over {tp_count} fixtures with K ≤ N−1"));
    }
    o.require(tp_count > 0, "some fixtures exercise the Λ reduction");
    if let Some(v) = suite.worst(|x| x.completeness, true) {
        o.info(format!("POVM completeness max {v:.2e}"));
    }
    if let Some(v) = suite.worst(|x| x.fisher_difference_slope, false) {
        o.info(format!("min J^c − J^div slope {v:.3}"));
    }
    let dom = suite.outcomes.iter().filter(|x| x.dominance == Some(true)).count();
    o.require(dom == 20, format!("pure-input dominance on {dom}/20 mixed inputs"));
    within_budget(&mut o, start, Duration::from_secs(120));
    o
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    let sc = scenario_ancilla_bell();
    let opts = |workers| SweepOptions {
        shots: Some(1_000_000),
        workers,
    };
    let a = run_sweep_with(&sc, &opts(1)).expect("sweep");
    let (ok, line) = check_line(&a, "monte-carlo");
    o.require(ok, line);
    let b = run_sweep_with(&sc, &opts(1)).expect("sweep");
    let c = run_sweep_with(&sc, &opts(4)).expect("sweep");
    let text = |r: &Report| without_timestamp(&to_jsonl(r, &Metadata::now()).expect("jsonl"));
    o.require(text(&a) == text(&b), "rerun byte-identical");
    o.require(text(&a) == text(&c), "1 vs 4 workers byte-identical");
    o
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        (1, "ancilla Bell closed forms", criterion_1),
        (2, "Pauli Bloch Fisher and zero-noise limit", criterion_2),
        (3, "three-level closed forms and Λ reduction", criterion_3),
        (4, "attainment of the order-ε bound", criterion_4),
        (5, "Pauli negative control", criterion_5),
        (6, "random-channel property suite", criterion_6),
        (7, "Monte Carlo agreement and determinism", criterion_7),
    ];
    let mut all = true;
    for (id, title, run) in criteria {
        let o = run();
        all &= o.pass;
        println!("criterion {id} [{title}]: {}", if o.pass { "PASS" } else { "FAIL" });
        for n in &o.notes {
            println!("    {n}");
        }
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
