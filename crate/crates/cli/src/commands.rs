use std::path::Path;

use nalgebra::DMatrix;
use netident::estimation::{
    identify_ml, identify_wls, montecarlo_bias, transformed_excitation, whiteness_fraction,
    Criterion, EntryOrders, EntryOverride, Estimate, IdentifyConfig, ModelOrders, MonteCarloConfig,
    PredictorData, Setup,
};
use netident::graph::{
    build_graph, check_delay_conditions, check_invariance_conditions, ModelDelayPattern, Selection,
    SelectionDoc,
};
use netident::model::{parse_network, uniform_grid, validate_network, NetworkSpec, TransferMatrix};
use netident::selection::{
    select_full_input, select_minimum_input, select_user, AccessibilitySpec,
};
use netident::simulation::{
    check_informativity, simulate, Dataset, ExcitationConfig, InformativityConfig,
};
use netident::transform::{second_order_check, transform_network, verify::verify_invariance_on};
use netident::ExecPolicy;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::report::{entries, matrix_rows, one_based, read_input, InputFile, Report};
use crate::{
    Cli, CliError, Command, CriterionArg, ExcitationArgs, FitArgs, Mode, SelectionArgs, SetupArgs,
};

pub fn run(cli: &Cli) -> Result<Report, CliError> {
    match &cli.command {
        Command::Validate { network } => validate(network),
        Command::Select { network, target } => {
            let sel = SelectionArgs {
                selection: None,
                target: Some(target.target.clone()),
                mode: target.mode,
                accessible: target.accessible.clone(),
            };
            select(network, &sel)
        }
        Command::Check {
            network,
            sel,
            proper_model,
            exc,
            grid,
            informativity_tol,
        } => check(network, sel, *proper_model, exc, *grid, *informativity_tol),
        Command::Transform {
            network,
            sel,
            tol,
            grid,
        } => transform(network, sel, *tol, *grid),
        Command::Simulate {
            network,
            n,
            seed,
            burn_in,
            exc,
            output,
        } => simulate_cmd(network, *n, *seed, *burn_in, exc, output),
        Command::Identify {
            network,
            data,
            setup,
            fit,
        } => identify(network, data, setup, fit),
        Command::Montecarlo {
            network,
            setup,
            fit,
            replicas,
            n,
            burn_in,
            exc,
            samples,
        } => montecarlo(network, setup, fit, *replicas, *n, *burn_in, exc, *samples),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn load_network(path: &Path) -> Result<(NetworkSpec, InputFile), CliError> {
    let (text, input) = read_input("network", path)?;
    let net =
        parse_network(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((net, input))
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{name} must be > 0")))
    }
}

fn zero_based(l: usize, v: &[usize], what: &str) -> Result<Vec<usize>, CliError> {
    v.iter()
        .map(|&k| {
            if k == 0 || k > l {
                Err(CliError::Input(format!("{what} node {k} outside 1..{l}")))
            } else {
                Ok(k - 1)
            }
        })
        .collect()
}

/// One-based `J I` to zero-based `(j, i)`.
fn target_pair(l: usize, t: &[usize]) -> Result<(usize, usize), CliError> {
    match zero_based(l, t, "target")?.as_slice() {
        [j, i] => Ok((*j, *i)),
        _ => Err(CliError::Input(
            "--target takes two node indices J I".into(),
        )),
    }
}

fn selection_from_file(net: &NetworkSpec, path: &Path) -> Result<(Selection, InputFile), CliError> {
    let (text, input) = read_input("selection", path)?;
    let v: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    // a select report carries the selection under result.selection
    let doc = v.pointer("/result/selection").cloned().unwrap_or(v);
    let doc: SelectionDoc = serde_json::from_value(doc)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((Selection::from_doc(net.l, &doc)?, input))
}

fn resolve_selection(
    net: &NetworkSpec,
    args: &SelectionArgs,
    inputs: &mut Vec<InputFile>,
) -> Result<(Selection, Value), CliError> {
    if args.accessible.is_some() && args.mode != Mode::User {
        return Err(CliError::Input(
            "--accessible is only valid with --mode user".into(),
        ));
    }
    if let Some(p) = &args.selection {
        let (sel, input) = selection_from_file(net, p)?;
        inputs.push(input);
        return Ok((sel, json!({ "source": "file" })));
    }
    let t = args
        .target
        .as_ref()
        .ok_or_else(|| CliError::Input("give --selection or --target J I".into()))?;
    let (j, i) = target_pair(net.l, t)?;
    let sel = match args.mode {
        Mode::Full => select_full_input(net, i, j),
        Mode::Min => select_minimum_input(net, i, j),
        Mode::User => {
            let acc = args
                .accessible
                .as_ref()
                .ok_or_else(|| CliError::Input("--mode user needs --accessible".into()))?;
            let spec = AccessibilitySpec {
                accessible: zero_based(net.l, acc, "accessible")?,
                i,
                j,
            };
            select_user(net, &spec)
        }
    }?;
    let mode = match args.mode {
        Mode::Full => "full",
        Mode::Min => "min",
        Mode::User => "user",
    };
    Ok((
        sel,
        json!({ "source": "computed", "target": [j + 1, i + 1], "mode": mode, "accessible": args.accessible }),
    ))
}

fn excitation(
    net: &NetworkSpec,
    args: &ExcitationArgs,
    inputs: &mut Vec<InputFile>,
) -> Result<ExcitationConfig, CliError> {
    let exc = match &args.excitation {
        Some(p) => {
            let (text, input) = read_input("excitation", p)?;
            inputs.push(input);
            serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        None => ExcitationConfig::white(net.k, 1.0),
    };
    exc.validate(net.k)?;
    Ok(exc)
}

fn validate(path: &Path) -> Result<Report, CliError> {
    let (net, input) = load_network(path)?;
    let rep = validate_network(&net);
    let mut report = Report::new("validate", vec![input], json!({}));
    report.passed = rep.valid;
    report.result = json!({ "L": net.l, "K": net.k, "validation": rep });
    Ok(report)
}

fn select(path: &Path, args: &SelectionArgs) -> Result<Report, CliError> {
    let (net, input) = load_network(path)?;
    let mut inputs = vec![input];
    let t = args.target.as_deref().unwrap_or_default();
    let (j, i) = target_pair(net.l, t)?;
    let config = json!({ "target": [j + 1, i + 1], "mode": args.mode.to_string(), "accessible": args.accessible });
    let mut report = Report::new("select", Vec::new(), config);
    match resolve_selection(&net, args, &mut inputs) {
        Ok((sel, _)) => {
            let cond = check_invariance_conditions(&build_graph(&net), &sel);
            report.passed = cond.passed;
            report.result = json!({ "selection": sel.to_doc(), "conditions": cond });
        }
        Err(CliError::Condition(msg)) => {
            report.passed = false;
            report.result = json!({ "selection": Value::Null, "reason": msg });
        }
        Err(e) => return Err(e),
    }
    report.inputs = inputs;
    Ok(report)
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::Min => "min",
            Mode::User => "user",
        })
    }
}

fn check(
    path: &Path,
    args: &SelectionArgs,
    proper_model: bool,
    exc_args: &ExcitationArgs,
    grid: usize,
    tol: f64,
) -> Result<Report, CliError> {
    positive("--informativity-tol", tol)?;
    if grid < 2 {
        return Err(CliError::Input("--grid must be at least 2".into()));
    }
    let (net, input) = load_network(path)?;
    let mut inputs = vec![input];
    let (sel, how) = resolve_selection(&net, args, &mut inputs)?;
    let exc = excitation(&net, exc_args, &mut inputs)?;
    let g = build_graph(&net);
    let invariance = check_invariance_conditions(&g, &sel);
    let model = ModelDelayPattern::uniform(&sel, !proper_model);
    let delay = check_delay_conditions(&g, &sel, &model);
    let icfg = InformativityConfig {
        tol,
        ..InformativityConfig::default()
    };
    let informativity = check_informativity(&net, &sel, &exc, &uniform_grid(grid), &icfg)?;
    let config = json!({
        "selection": how,
        "model_strictly_proper": !proper_model,
        "excitation": exc,
        "grid": grid,
        "informativity": icfg,
    });
    let mut report = Report::new("check", inputs, config);
    report.passed = invariance.passed && delay.passed && informativity.passed;
    report.result = json!({
        "selection": sel.to_doc(),
        "invariance": invariance,
        "delay": delay,
        "informativity": informativity,
    });
    Ok(report)
}

fn transform(path: &Path, args: &SelectionArgs, tol: f64, grid: usize) -> Result<Report, CliError> {
    positive("--tol", tol)?;
    if grid < 2 {
        return Err(CliError::Input("--grid must be at least 2".into()));
    }
    let (net, input) = load_network(path)?;
    let mut inputs = vec![input];
    let (sel, how) = resolve_selection(&net, args, &mut inputs)?;
    let tn = transform_network(&net, &sel)?;
    let inv = verify_invariance_on(&net, &sel, tol, grid)?;
    let so = second_order_check(&net, &tn, &uniform_grid(grid))?;
    let outs = sel.outputs();
    let ins = sel.inputs();
    let retained = tn.imm.retained.clone();
    let u_rows: Vec<usize> = sel.u.clone();
    let gbar_u = tn.gbar_u.to_transfer_matrix();
    let mut report = Report::new(
        "transform",
        inputs,
        json!({ "selection": how, "tol": tol, "grid": grid }),
    );
    report.passed = inv.passed;
    report.result = json!({
        "selection": sel.to_doc(),
        "retained": one_based(&retained),
        "noise_order": one_based(&tn.imm.noise_order),
        "stages": tn.stages,
        "gbar": entries(&tn.gbar(), &outs, &ins),
        "hbar": entries(&tn.hbar_tf(), &outs, &outs),
        "lambda_bar": matrix_rows(&tn.lambda_bar),
        "gbar_u": entries(&gbar_u, &u_rows, &retained),
        "hbar_uu": entries(&tn.hbar_uu.to_transfer_matrix(), &u_rows, &u_rows),
        "lambda_uu": matrix_rows(&tn.lambda_uu),
        "invariance": inv,
        "second_order": so,
    });
    Ok(report)
}

fn simulate_cmd(
    path: &Path,
    n: usize,
    seed: u64,
    burn_in: usize,
    exc_args: &ExcitationArgs,
    output: &Path,
) -> Result<Report, CliError> {
    let (net, input) = load_network(path)?;
    let mut inputs = vec![input];
    let exc = excitation(&net, exc_args, &mut inputs)?;
    let data = simulate(&net, n, seed, &exc, burn_in)?;
    let text = data.to_json();
    std::fs::write(output, &text)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", output.display())))?;
    let (_, written) = read_input("dataset", output)?;
    let config = json!({ "n": n, "seed": seed, "burn_in": burn_in, "excitation": exc });
    let mut report = Report::new("simulate", inputs, config);
    report.result = json!({
        "dataset": { "path": written.path, "sha256": written.sha256, "nodes": data.nodes(), "external": data.r.len(), "n": n },
    });
    Ok(report)
}

/// Orders document; override indices are one-based.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct OrdersDoc {
    #[serde(default)]
    g: Option<EntryOrders>,
    #[serde(default)]
    target: Option<EntryOrders>,
    #[serde(default)]
    overrides: Vec<OverrideDoc>,
    #[serde(default)]
    nc: Option<usize>,
    #[serde(default)]
    nf: Option<usize>,
    #[serde(default)]
    noise_diagonal: bool,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct OverrideDoc {
    to: usize,
    from: usize,
    orders: Option<EntryOrders>,
}

fn model_orders(
    l: usize,
    fit: &FitArgs,
    inputs: &mut Vec<InputFile>,
) -> Result<ModelOrders, CliError> {
    let mut orders = ModelOrders::default();
    if let Some(p) = &fit.orders {
        let (text, input) = read_input("orders", p)?;
        inputs.push(input);
        let doc: OrdersDoc = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        if let Some(g) = doc.g {
            orders.g = g;
        }
        orders.target = doc.target;
        for o in &doc.overrides {
            let v = zero_based(l, &[o.to, o.from], "override")?;
            orders.overrides.push(EntryOverride {
                output: v[0],
                input: v[1],
                orders: o.orders,
            });
        }
        orders.nc = doc.nc.unwrap_or(orders.nc);
        orders.nf = doc.nf.unwrap_or(orders.nf);
        orders.noise_diagonal = doc.noise_diagonal;
    }
    orders.g.nb = fit.nb.unwrap_or(orders.g.nb);
    orders.g.na = fit.na.unwrap_or(orders.g.na);
    orders.g.delay = fit.delay.unwrap_or(orders.g.delay);
    orders.nc = fit.nc.unwrap_or(orders.nc);
    orders.nf = fit.nf.unwrap_or(orders.nf);
    Ok(orders)
}

fn identify_config(fit: &FitArgs) -> IdentifyConfig {
    let mut cfg = IdentifyConfig {
        seed: fit.seed,
        ..IdentifyConfig::default()
    };
    if let Some(r) = fit.restarts {
        cfg.restarts = r.max(1);
    }
    if fit.sequential {
        cfg.policy = ExecPolicy::Sequential;
    }
    cfg
}

fn criterion(c: CriterionArg) -> Criterion {
    match c {
        CriterionArg::Wls => Criterion::Wls,
        CriterionArg::Ml => Criterion::Ml,
    }
}

/// Identification setup plus a description for the report and any condition warnings.
fn resolve_setup(
    net: &NetworkSpec,
    args: &SetupArgs,
    orders: ModelOrders,
    inputs: &mut Vec<InputFile>,
) -> Result<(Setup, Value, Vec<String>), CliError> {
    if let Some(dj) = &args.miso_inputs {
        if args.sel.selection.is_some() {
            return Err(CliError::Input(
                "--miso-inputs needs --target, not --selection".into(),
            ));
        }
        let t = args
            .sel
            .target
            .as_ref()
            .ok_or_else(|| CliError::Input("--miso-inputs needs --target J I".into()))?;
        let (j, i) = target_pair(net.l, t)?;
        let dj = zero_based(net.l, dj, "input")?;
        let desc = json!({ "kind": "miso", "target": [j + 1, i + 1], "inputs": one_based(&dj) });
        return Ok((Setup::Miso { j, i, dj, orders }, desc, Vec::new()));
    }
    let (sel, how) = resolve_selection(net, &args.sel, inputs)?;
    let cond = check_invariance_conditions(&build_graph(net), &sel);
    let mut warnings = Vec::new();
    if !cond.passed {
        warnings.push(format!(
            "selection fails the invariance conditions: {}",
            cond.failures().join(", ")
        ));
    }
    let desc = json!({ "kind": "mimo", "selection": how, "resolved": sel.to_doc() });
    Ok((Setup::Mimo { sel, orders }, desc, warnings))
}

fn offset(net: &NetworkSpec, setup: &Setup) -> Result<Option<TransferMatrix>, CliError> {
    if net.k == 0 {
        return Ok(None);
    }
    Ok(Some(match setup {
        Setup::Mimo { sel, .. } => transformed_excitation(net, sel)?,
        Setup::Miso { j, .. } => {
            let cols: Vec<usize> = (0..net.k).collect();
            net.r.submatrix(&[*j], &cols)
        }
    }))
}

#[derive(Serialize)]
struct Coefficient {
    name: String,
    value: f64,
    std_error: f64,
    /// Fixed-decimal rendering for line-by-line comparison.
    fixed: String,
}

fn estimate_value(est: &Estimate) -> Value {
    let ms = &est.structure;
    let coefficients: Vec<Coefficient> = est
        .names
        .iter()
        .zip(est.theta.iter().zip(&est.std_errors))
        .map(|(name, (&value, &std_error))| Coefficient {
            name: name.clone(),
            value,
            std_error,
            fixed: format!("{value:.8} +- {std_error:.8}"),
        })
        .collect();
    let target = ms.target.map(|(j, i)| {
        json!({
            "module": [j + 1, i + 1],
            "theta": est.target_theta(),
            "std_errors": est.target_std_errors(),
        })
    });
    json!({
        "target": target,
        "criterion_kind": est.criterion_kind,
        "criterion": est.criterion,
        "coefficients": coefficients,
        "gbar": entries(&est.gbar, &ms.outputs, &ms.inputs),
        "hbar": entries(&est.hbar, &ms.outputs, &ms.outputs),
        "lambda": matrix_rows(&est.lambda),
        "residual_length": est.residuals.first().map_or(0, |r| r.len()),
        "whiteness_fraction": whiteness_fraction(&est.residuals, 20),
        "diagnostics": est.diagnostics,
    })
}

fn identify(
    path: &Path,
    data_path: &Path,
    args: &SetupArgs,
    fit: &FitArgs,
) -> Result<Report, CliError> {
    let (net, input) = load_network(path)?;
    let mut inputs = vec![input];
    let (text, dinput) = read_input("dataset", data_path)?;
    inputs.push(dinput);
    let data = Dataset::from_json(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", data_path.display())))?;
    if data.nodes() != net.l || data.r.len() != net.k {
        return Err(CliError::Input(format!(
            "dataset has {} nodes and {} external signals, network has {} and {}",
            data.nodes(),
            data.r.len(),
            net.l,
            net.k
        )));
    }
    let orders = model_orders(net.l, fit, &mut inputs)?;
    let (setup, desc, warnings) = resolve_setup(&net, args, orders.clone(), &mut inputs)?;
    let ms = setup.structure()?;
    let off = offset(&net, &setup)?;
    let pd = PredictorData::new(&ms, &data, off.as_ref())?;
    let cfg = identify_config(fit);
    let est = match criterion(fit.criterion) {
        Criterion::Wls => identify_wls(&ms, &pd, &DMatrix::identity(ms.ny(), ms.ny()), &cfg)?,
        Criterion::Ml => identify_ml(&ms, &pd, &cfg)?,
    };
    let config = json!({ "setup": desc, "orders": orders, "criterion": criterion(fit.criterion), "identify": cfg });
    let mut report = Report::new("identify", inputs, config);
    report.warnings = warnings;
    if !est.diagnostics.converged {
        report
            .warnings
            .push("optimizer did not converge; best point reported".into());
    }
    report.result = estimate_value(&est);
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn montecarlo(
    path: &Path,
    args: &SetupArgs,
    fit: &FitArgs,
    replicas: usize,
    n: usize,
    burn_in: usize,
    exc_args: &ExcitationArgs,
    keep_samples: bool,
) -> Result<Report, CliError> {
    let (net, input) = load_network(path)?;
    let mut inputs = vec![input];
    let exc = excitation(&net, exc_args, &mut inputs)?;
    let orders = model_orders(net.l, fit, &mut inputs)?;
    let (setup, desc, warnings) = resolve_setup(&net, args, orders.clone(), &mut inputs)?;
    let mut cfg = MonteCarloConfig::new(replicas, n, fit.seed, exc);
    cfg.burn_in = burn_in;
    cfg.criterion = criterion(fit.criterion);
    cfg.identify = identify_config(fit);
    let mut rep = montecarlo_bias(&net, &setup, &cfg)?;
    if !keep_samples {
        rep.samples.clear();
    }
    let config = json!({ "setup": desc, "orders": orders, "montecarlo": cfg });
    let mut report = Report::new("montecarlo", inputs, config);
    report.warnings = warnings;
    report.warnings.extend(rep.warnings.iter().cloned());
    report.result = to_value(&rep);
    Ok(report)
}
