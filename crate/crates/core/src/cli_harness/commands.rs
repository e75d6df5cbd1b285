use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::persist::{persist_state, persist_table, restore_state};
use super::report::{series_text, Report};
use super::{fedosov_error, lagrangian_error, CliError, ProblemSpec, ProductName};
use crate::chart_geometry::{
    check_fiber_adapted, curvature, curvature_form_from_connection_form, poisson_bracket, validate_connection,
};
use crate::coeff_ring::{ChartSpec, CoeffFn, GaussRat};
use crate::fedosov_engine::{
    apply_quantum_corrections, build_gamma, generator_samples, geometry_hash, is_base_sector, monomial_basis, star_table,
    verify_equivalence, verify_fedosov_flatness, verify_lift, verify_star_axioms, FedosovState, FunctionMoyal, Opposite,
    StandardOrdered, StarProduct,
};
use crate::lagrangian_forms::{check_fiber_vanishing, check_normalization, normalize_closed_form};
use crate::semiclassical::{build_gamma0, verify_poisson_morphism, verify_semiclassical_flatness};
use crate::weyl_algebra::filtration_degree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    VerifyGeometry,
    BuildGamma,
    Lift,
    Star,
    StarTable,
    VerifyStar,
    NormalizeForm,
    CheckLagrangian,
    Semiclassical,
    VerifyEquivalence,
    QuantumCorrections,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::VerifyGeometry => "verify-geometry",
            Command::BuildGamma => "build-gamma",
            Command::Lift => "lift",
            Command::Star => "star",
            Command::StarTable => "star-table",
            Command::VerifyStar => "verify-star",
            Command::NormalizeForm => "normalize-form",
            Command::CheckLagrangian => "check-lagrangian",
            Command::Semiclassical => "semiclassical",
            Command::VerifyEquivalence => "verify-equivalence",
            Command::QuantumCorrections => "quantum-corrections",
        }
    }
}

/// Side files read or written by a command.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Reuse a persisted solved connection instead of rebuilding it.
    pub load_state: Option<PathBuf>,
    pub save_state: Option<PathBuf>,
    pub save_table: Option<PathBuf>,
}

pub fn execute(spec: &ProblemSpec, command: Command, opts: &RunOptions) -> Result<Report, CliError> {
    let mut report = Report::new(command.name());
    if spec.shallow {
        report.warn(format!("degree {} < 2·order: ℏ^{} terms are possibly truncated", spec.caps.degree, spec.caps.order));
    }
    let ctx = command.name();
    match command {
        Command::VerifyGeometry => verify_geometry(spec, &mut report)?,
        Command::BuildGamma => {
            let state = state(spec, opts, ctx)?;
            report.value("geometry_hash", state.geometry_hash(), state.geometry_hash());
            report.section("gamma", state.gamma());
            let flat = verify_fedosov_flatness(&state, &generator_samples(spec.chart, spec.caps)).map_err(|e| fedosov_error(ctx, e))?;
            report.check("flatness", flat.passed(), &flat);
            if let Some(path) = &opts.save_state {
                persist_state(&state, path)?;
            }
        }
        Command::Lift => {
            let state = state(spec, opts, ctx)?;
            for name in selected(spec, &spec.options.functions) {
                let f = &spec.functions[&name];
                let sigma = state.lift(f).map_err(|e| fedosov_error(ctx, e))?;
                report.section(&format!("lift({name})"), &sigma);
                let check = verify_lift(&state, f, &sigma).map_err(|e| fedosov_error(ctx, e))?;
                report.check(&format!("lift({name}) flat"), check.passed(), &check);
                let base = is_base_sector(&sigma).map_err(|e| fedosov_error(ctx, e))?;
                report.value(&format!("lift({name}) base sector"), base.to_string(), base);
            }
        }
        Command::Star => {
            let state = state(spec, opts, ctx)?;
            for [a, b] in pairs(spec) {
                let (f, g) = (&spec.functions[&a], &spec.functions[&b]);
                let fg = state.star(f, g).map_err(|e| fedosov_error(ctx, e))?;
                let gf = state.star(g, f).map_err(|e| fedosov_error(ctx, e))?;
                let comm: Vec<CoeffFn> = fg.iter().zip(&gf).map(|(x, y)| x - y).collect();
                report.series(&format!("{a} * {b}"), &fg);
                report.series(&format!("[{a}, {b}]"), &comm);
            }
        }
        Command::StarTable => {
            let state = state(spec, opts, ctx)?;
            let degree = spec.options.table_degree.unwrap_or(2);
            let table = star_table(&state, degree).map_err(|e| fedosov_error(ctx, e))?;
            report.value("geometry_hash", table.geometry_hash.clone(), &table.geometry_hash);
            report.value(
                "basis",
                table.basis.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", "),
                table.basis.iter().map(CoeffFn::to_records).collect::<Vec<_>>(),
            );
            let mut classical = true;
            for (&(i, j), q) in &table.entries {
                classical &= q[0] == &table.basis[i] * &table.basis[j];
                report.series(&format!("({}) * ({})", table.basis[i], table.basis[j]), q);
            }
            report.check("Q_0 is the pointwise product", classical, table.entries.len());
            if let Some(path) = &opts.save_table {
                persist_table(&table, path)?;
            }
        }
        Command::VerifyStar => {
            let state = state(spec, opts, ctx)?;
            let samples = samples(spec);
            let axioms = verify_star_axioms(&state, &spec.symplectic, &samples).map_err(|e| fedosov_error(ctx, e))?;
            report.check("star axioms", axioms.passed(), &axioms);
        }
        Command::NormalizeForm => {
            let form = spec.form.as_ref().ok_or_else(|| CliError::validation("options.form", "normalize-form needs a form"))?;
            let out = normalize_closed_form(form).map_err(|e| lagrangian_error(ctx, e))?;
            report.section("omega_prime", &out.omega_prime);
            report.section("gamma", &out.gamma);
            let check = check_normalization(form, &out).map_err(|e| lagrangian_error(ctx, e))?;
            report.check("normalization", check.passed(), &check);
        }
        Command::CheckLagrangian => check_lagrangian(spec, opts, &mut report)?,
        Command::Semiclassical => semiclassical(spec, &mut report)?,
        Command::VerifyEquivalence => {
            let op = spec.operator.as_ref().ok_or_else(|| CliError::validation("options.operator", "verify-equivalence needs an operator"))?;
            let state = match (spec.options.left, spec.options.right) {
                (Some(l), Some(r)) if !uses_fedosov(l) && !uses_fedosov(r) => None,
                _ => Some(state(spec, opts, ctx)?),
            };
            let moyal = FunctionMoyal::new(&spec.symplectic, spec.caps.order);
            let standard = StandardOrdered::new(spec.chart, spec.caps.order);
            let left_name = spec.options.left.unwrap_or(ProductName::Fedosov);
            let right_name = spec.options.right.unwrap_or(ProductName::Moyal);
            let left = product(left_name, state.as_ref(), &moyal, &standard);
            let right = product(right_name, state.as_ref(), &moyal, &standard);
            report.value("left", format!("{left_name:?}"), left_name);
            report.value("right", format!("{right_name:?}"), right_name);
            let eq = verify_equivalence(op, left.as_ref(), right.as_ref(), &samples(spec)).map_err(|e| fedosov_error(ctx, e))?;
            report.check("equivalence", eq.passed(), &eq);
        }
        Command::QuantumCorrections => {
            let op = spec.operator.as_ref().ok_or_else(|| CliError::validation("options.operator", "quantum-corrections needs an operator"))?;
            for name in selected(spec, &spec.options.functions) {
                let f = &spec.functions[&name];
                let mut series = apply_quantum_corrections(op, f);
                report.series(&format!("P^-1({name})"), &series);
                series[0] = &series[0] - f;
                report.series(&format!("correction({name})"), &series);
            }
        }
    }
    Ok(report)
}

fn uses_fedosov(p: ProductName) -> bool {
    matches!(p, ProductName::Fedosov | ProductName::OppositeFedosov)
}

fn product<'a>(
    name: ProductName,
    state: Option<&'a FedosovState>,
    moyal: &'a FunctionMoyal,
    standard: &'a StandardOrdered,
) -> Box<dyn StarProduct + 'a> {
    let fedosov = || state.expect("state is built whenever a Fedosov product is requested");
    match name {
        ProductName::Fedosov => Box::new(fedosov()),
        ProductName::Moyal => Box::new(moyal),
        ProductName::Standard => Box::new(standard),
        ProductName::OppositeFedosov => Box::new(Opposite(fedosov())),
        ProductName::OppositeMoyal => Box::new(Opposite(moyal)),
        ProductName::OppositeStandard => Box::new(Opposite(standard)),
    }
}

fn state(spec: &ProblemSpec, opts: &RunOptions, ctx: &str) -> Result<FedosovState, CliError> {
    match &opts.load_state {
        Some(path) => {
            let expected = geometry_hash(&spec.symplectic, &spec.connection, &spec.omega, spec.caps);
            restore_state(path, Some(&expected))
        }
        None => build_gamma(&spec.symplectic, &spec.connection, &spec.omega, spec.caps).map_err(|e| fedosov_error(ctx, e)),
    }
}

fn selected(spec: &ProblemSpec, names: &Option<Vec<String>>) -> Vec<String> {
    names.clone().unwrap_or_else(|| spec.functions.keys().cloned().collect())
}

fn pairs(spec: &ProblemSpec) -> Vec<[String; 2]> {
    spec.options.pairs.clone().unwrap_or_else(|| {
        let names: Vec<String> = spec.functions.keys().cloned().collect();
        names.iter().flat_map(|a| names.iter().map(move |b| [a.clone(), b.clone()])).collect()
    })
}

/// Named samples plus seeded random polynomials; falls back to the
/// non-constant monomials of degree `≤ 2` when nothing is given.
fn samples(spec: &ProblemSpec) -> Vec<CoeffFn> {
    let mut out: Vec<CoeffFn> = match &spec.options.samples {
        Some(names) => names.iter().map(|n| spec.functions[n].clone()).collect(),
        None => spec.functions.values().cloned().collect(),
    };
    out.extend(random_polynomials(spec.chart, spec.seed, spec.options.random_samples.unwrap_or(0)));
    if out.is_empty() {
        out = monomial_basis(spec.chart, 2).into_iter().skip(1).collect();
    }
    out
}

/// Small random polynomials in the chart coordinates (no Fourier modes).
pub fn random_polynomials(chart: ChartSpec, seed: u64, count: usize) -> Vec<CoeffFn> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zeros = vec![0; chart.k];
    (0..count)
        .map(|_| {
            let mut f = CoeffFn::zero(chart);
            for _ in 0..rng.gen_range(1..=3) {
                let alpha: Vec<u32> = (0..chart.n).map(|_| rng.gen_range(0..=2)).collect();
                let beta: Vec<u32> = (0..chart.n).map(|_| rng.gen_range(0..=1)).collect();
                let c = GaussRat::ratio(rng.gen_range(-3..=3), rng.gen_range(1..=2));
                f = &f + &CoeffFn::monomial(chart, &alpha, &beta, &zeros, c);
            }
            f
        })
        .collect()
}

fn verify_geometry(spec: &ProblemSpec, report: &mut Report) -> Result<(), CliError> {
    let (s, c) = (&spec.symplectic, &spec.connection);
    report.value("chart", spec.chart.to_string(), spec.chart);
    report.value("caps", spec.caps.to_string(), spec.caps);
    let conn = validate_connection(c, s).map_err(|e| CliError::validation("connection", e))?;
    report.check("connection symmetric", conn.symmetric, &conn);
    let adapted = check_fiber_adapted(c);
    let text = if adapted.is_compliant() {
        "compliant".to_string()
    } else {
        adapted.violations.iter().map(|v| format!("{} at {:?}", v.constraint, v.indices)).collect::<Vec<_>>().join("; ")
    };
    let violations: Vec<_> = adapted.violations.iter().map(|v| json!({"constraint": v.constraint.describe(), "indices": v.indices, "value": v.value})).collect();
    report.value("fiber-adapted", text, violations);
    let tensor = curvature(c, s).form(spec.caps);
    let from_forms = curvature_form_from_connection_form(c, s, spec.caps).map_err(|e| CliError::validation("connection", e))?;
    report.check("curvature tensor equals dΓ + (1/ℏ)Γ∘Γ", tensor == from_forms, tensor.len());
    report.section("curvature", &tensor);
    let omega = &spec.omega;
    report.check("Weyl curvature closed", omega.d().is_zero(), ());
    let classical = omega.filter(|k| k.hbar == 0);
    report.check("Weyl curvature deforms ω", classical == s.omega_form(spec.caps), ());
    report.check("Weyl curvature central", !omega.has_fiber_variables(), ());
    Ok(())
}

fn check_lagrangian(spec: &ProblemSpec, opts: &RunOptions, report: &mut Report) -> Result<(), CliError> {
    let ctx = "check-lagrangian";
    let adapted = check_fiber_adapted(&spec.connection);
    if let Some(v) = adapted.violations.first() {
        return Err(CliError::validation(
            format!("connection{:?}", v.indices),
            format!("connection is not fiber-adapted: {} (value {})", v.constraint, v.value),
        ));
    }
    let filt = filtration_degree(&spec.omega).map_err(|e| CliError::validation("omega_corrections", e))?;
    report.check("Weyl curvature filtration degree ≤ 1", filt.is_none_or(|d| d <= 1), filt);
    report.check("Weyl curvature vanishes on fibers", check_fiber_vanishing(&spec.omega), ());
    if let Some(form) = &spec.form {
        report.check("form vanishes on fibers", check_fiber_vanishing(form), ());
    }
    let state = state(spec, opts, ctx)?;
    let mut inputs: Vec<(String, CoeffFn)> =
        spec.functions.iter().filter(|(_, f)| f.is_angle_free()).map(|(n, f)| (n.clone(), f.clone())).collect();
    if inputs.is_empty() {
        let basis = monomial_basis(spec.chart, 3);
        inputs = basis.into_iter().filter(|f| f.is_angle_free()).map(|f| (f.to_string(), f)).collect();
    }
    let mut base = Vec::new();
    for (name, f) in &inputs {
        let sigma = state.lift(f).map_err(|e| fedosov_error(ctx, e))?;
        if !is_base_sector(&sigma).map_err(|e| fedosov_error(ctx, e))? {
            base.push(name.clone());
        }
    }
    report.check("lifts of action-only functions lie in the base sector", base.is_empty(), &base);
    let mut deformed = Vec::new();
    for (a, f) in &inputs {
        for (b, g) in &inputs {
            let q = state.star(f, g).map_err(|e| fedosov_error(ctx, e))?;
            if q[1..].iter().any(|c| !c.is_zero()) {
                deformed.push(format!("{a} * {b} = {}", series_text(&q)));
            }
        }
    }
    report.check("action-only products have no ℏ-corrections", deformed.is_empty(), &deformed);
    Ok(())
}

fn semiclassical(spec: &ProblemSpec, report: &mut Report) -> Result<(), CliError> {
    let ctx = "semiclassical";
    let cap = spec.options.jet_degree.unwrap_or(spec.caps.degree);
    let state = build_gamma0(&spec.symplectic, &spec.connection, cap).map_err(|e| fedosov_error(ctx, e))?;
    report.section("gamma0", state.gamma());
    let flat = verify_semiclassical_flatness(&state, &generator_samples(spec.chart, state.caps())).map_err(|e| fedosov_error(ctx, e))?;
    report.check("flatness", flat.passed(), &flat);
    for name in selected(spec, &spec.options.functions) {
        let jet = state.exp_lift(&spec.functions[&name]).map_err(|e| fedosov_error(ctx, e))?;
        report.section(&format!("exp({name})"), &jet);
    }
    for [a, b] in pairs(spec) {
        let (f, g) = (&spec.functions[&a], &spec.functions[&b]);
        let m = verify_poisson_morphism(&state, f, g).map_err(|e| fedosov_error(ctx, e))?;
        report.check(&format!("Poisson morphism ({a}, {b})"), m.passed(), &m);
        report.function(&format!("{{{a}, {b}}}"), &poisson_bracket(f, g, &spec.symplectic));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli_harness::{parse_problem, Overrides};

    fn run(text: &str, command: Command) -> Report {
        let spec = parse_problem(text, &Overrides::default()).unwrap();
        execute(&spec, command, &RunOptions::default()).unwrap()
    }

    #[test]
    fn flat_star_commutator() {
        let text = r#"{"schema_version": 1, "chart": {"n": 1, "k": 1}, "caps": {"order": 2},
            "functions": {"f": [{"alpha": [1], "beta": [0], "re": "1"}], "g": [{"alpha": [0], "beta": [1], "re": "1"}]},
            "options": {"pairs": [["f", "g"]]}}"#;
        let report = run(text, Command::Star);
        assert!(report.passed);
        let comm = report.items.iter().find(|i| i.key == "[f, g]").unwrap();
        assert_eq!(comm.text, "ℏ·(-1)");
        let again = run(text, Command::Star);
        assert_eq!(report.render(super::super::OutputFormat::Json), again.render(super::super::OutputFormat::Json));
    }

    #[test]
    fn normalize_worked_example() {
        let text = r#"{"schema_version": 1, "chart": {"n": 1, "k": 1}, "caps": {"order": 0},
            "options": {"form": [{"l": 0, "a": [0, 0], "g": [0, 1], "coeff": [
                {"alpha": [0], "beta": [0], "re": "-1"},
                {"alpha": [0], "beta": [0], "m": [1], "re": "-1/2"},
                {"alpha": [0], "beta": [0], "m": [-1], "re": "-1/2"}]}]}}"#;
        let report = run(text, Command::NormalizeForm);
        assert!(report.passed, "{}", report.render(super::super::OutputFormat::Text));
    }

    #[test]
    fn verify_star_flat_order_three() {
        let text = r#"{"schema_version": 1, "chart": {"n": 1, "k": 1}, "caps": {"order": 3}}"#;
        assert!(run(text, Command::VerifyStar).passed);
    }
}
