use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use ndarray::{concatenate, Axis};
use otconf::baselines::{cossim, entropy_score, maxprob, ProbabilityVector};
use otconf::evaluation::{risk_coverage_aurc, selective_accuracy};
use otconf::io::{load_column, load_labels, load_matrix, write_column, write_csv, write_otsf};
use otconf::plot::{LinePlot, Series};
use otconf::score::{postcheck_binary, postcheck_componentwise, ResidualCheck};
use otconf::score::score_targets;
use otconf::sdot::{marginal_residual, solve};
use otconf::synthetic::{
    epsilon_ablation, gen_clusters, label_preservation, overlap_experiment, proportion_grid, reweight_sweep,
    separation_check, write_scatter_svg, OverlapScenario, ABLATION_EPSILONS,
};
use otconf::{
    class_means, load_features, misclassification_bound, normalize_and_reweight, ClusterSpec, CostExponent,
    DiscreteMeasure, FeatureTable, Format, ScoreReport, SolverConfig,
};
use serde::Serialize;
use serde_json::json;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::output::Run;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn load_table(path: &Path) -> CliResult<FeatureTable> {
    Ok(load_features(path, Format::from_path(path))?)
}

/// Prototype measure from a table of locations and optional masses.
fn load_measure(points: &Path, weights: Option<&Path>) -> CliResult<DiscreteMeasure> {
    let table = load_table(points)?;
    let points = table.features().clone();
    Ok(match weights {
        Some(w) => DiscreteMeasure::normalized(points, load_column(w)?)?,
        None => DiscreteMeasure::uniform(points)?,
    })
}

/// Scores from a JSON score report or a plain CSV column.
fn load_scores(path: &Path) -> CliResult<Vec<f64>> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        Ok(ScoreReport::read_json(BufReader::new(File::open(path)?))?.scores)
    } else {
        Ok(load_column(path)?)
    }
}

fn check_dims(expected: usize, actual: usize, what: &str) -> CliResult<()> {
    if expected != actual {
        return Err(invalid(format!("{what}: expected dimension {expected}, got {actual}")));
    }
    Ok(())
}

/// Resolves the solver configuration and enforces the seed rule.
fn solver_config(args: &SolverArgs, run: &mut Run, n_targets: usize, n_protos: usize) -> CliResult<SolverConfig> {
    let mut config = args.config();
    if let Some(path) = &args.warm_start {
        let w = load_column(path)?;
        if w.len() != n_protos {
            return Err(invalid(format!("warm start has {} weights for {n_protos} prototypes", w.len())));
        }
        config.warm_start = Some(w);
    }
    config.validate()?;
    if config.is_stochastic(n_targets) {
        if args.seed.is_none() {
            return Err(invalid("--seed is required when --batch-size is smaller than the number of targets"));
        }
        run.set_seed(args.seed);
    } else {
        run.set_seed(None);
    }
    Ok(config)
}

fn trace_plot(title: &str, series: Vec<Series>, y_label: &str) -> LinePlot {
    LinePlot {
        title: title.to_string(),
        x_label: "step".to_string(),
        y_label: y_label.to_string(),
        series,
    }
}

pub fn solve_cmd(args: &SolveArgs, run: &mut Run) -> CliResult<()> {
    let target = run.input(&args.target)?;
    let protos_path = run.input(&args.prototypes)?;
    let weights_path = run.optional_input(args.weights.as_ref())?;
    run.optional_input(args.solver.warm_start.as_ref())?;
    let targets = load_table(&target)?;
    let protos = load_measure(&protos_path, weights_path.as_deref())?;
    check_dims(targets.dim(), protos.dim(), "prototypes")?;
    let config = solver_config(&args.solver, run, targets.n_samples(), protos.len())?;

    let state = solve(&targets, &protos, &config)?;
    let residual = marginal_residual(&targets, &protos, &state.weights, config.epsilon, config.exponent)?;
    run.output(&args.out, |w| write_column(w, "w", &state.weights))?;
    if let Some(path) = &args.trace {
        run.output(path, |w| state.write_trace_csv(w))?;
    }
    if let Some(path) = &args.plot {
        let series = vec![
            Series {
                label: "marginal residual".into(),
                points: state.trace.iter().map(|r| (r.step as f64, r.residual)).collect(),
            },
            Series {
                label: "update norm".into(),
                points: state.trace.iter().map(|r| (r.step as f64, r.update_norm)).collect(),
            },
        ];
        run.output(path, |w| trace_plot("Dual ascent", series, "value").write(w))?;
    }
    println!("steps {} residual {residual:e}", state.step);
    run.set_results(json!({ "steps": state.step, "residual": residual }))
}

pub fn score_cmd(args: &ScoreArgs, run: &mut Run) -> CliResult<()> {
    let source_path = run.input(&args.source)?;
    let target_path = run.input(&args.target)?;
    let pseudo_path = run.input(&args.pseudo)?;
    run.optional_input(args.solver.warm_start.as_ref())?;
    let source = load_table(&source_path)?;
    let targets = load_table(&target_path)?;
    let pseudo = load_labels(&pseudo_path)?;
    // a labeled source table is reduced to its class means
    let means = if source.labels().is_some() {
        class_means(&source)?.points().clone()
    } else {
        source.features().clone()
    };
    check_dims(targets.dim(), means.ncols(), "source")?;
    if pseudo.len() != targets.n_samples() {
        return Err(invalid(format!(
            "{} pseudo-labels for {} targets",
            pseudo.len(),
            targets.n_samples()
        )));
    }
    if let Some(&bad) = pseudo.iter().find(|&&c| c >= means.nrows()) {
        return Err(invalid(format!("pseudo-label {bad} but only {} classes", means.nrows())));
    }
    let config = solver_config(&args.solver, run, targets.n_samples(), means.nrows())?;

    let result = score_targets(means, &targets, &pseudo, &config)?;
    let report = &result.report;
    run.output(&args.out, |w| report.write_json(w))?;
    if let Some(path) = &args.csv {
        run.output(path, |w| report.write_csv(w))?;
    }
    if let Some(path) = &args.plot {
        run.output(path, |w| write_scatter_svg(&targets, &report.scores, "OT score", w))?;
    }
    println!("mean score {}", report.mean_score);
    run.set_results(json!({
        "mean_score": report.mean_score,
        "steps": result.state.step,
        "weights": result.state.weights,
    }))
}

pub fn postcheck_cmd(args: &PostcheckArgs, run: &mut Run) -> CliResult<()> {
    let c1 = load_table(&run.input(&args.class1)?)?;
    let c2 = load_table(&run.input(&args.class2)?)?;
    let w1 = run.optional_input(args.proto1_weights.as_ref())?;
    let w2 = run.optional_input(args.proto2_weights.as_ref())?;
    let p1 = load_measure(&run.input(&args.proto1)?, w1.as_deref())?;
    let p2 = load_measure(&run.input(&args.proto2)?, w2.as_deref())?;
    let p = args.solver.exponent();
    for (dim, name) in [(c2.dim(), "class2"), (p1.dim(), "proto1"), (p2.dim(), "proto2")] {
        check_dims(c1.dim(), dim, name)?;
    }

    let result = if let (Some(m), Some(l)) = (&args.m, &args.l) {
        let m = load_column(&run.input(m)?)?;
        let l = load_column(&run.input(l)?)?;
        let check = args.residual_tol.map(|tolerance| ResidualCheck {
            epsilon: args.solver.epsilon,
            tolerance,
        });
        postcheck_componentwise(&c1, &c2, &p1, &p2, &m, &l, p, check)?
    } else {
        let w = match &args.weights {
            Some(path) => load_column(&run.input(path)?)?,
            None => {
                // joint problem with prototype masses scaled by the class sizes
                run.optional_input(args.solver.warm_start.as_ref())?;
                let targets = c1.concat(&c2)?;
                let n = targets.n_samples() as f64;
                let (s1, s2) = (c1.n_samples() as f64 / n, c2.n_samples() as f64 / n);
                let weights: Vec<f64> = p1
                    .weights()
                    .iter()
                    .map(|a| a * s1)
                    .chain(p2.weights().iter().map(|a| a * s2))
                    .collect();
                let points = concatenate(Axis(0), &[p1.points().view(), p2.points().view()])
                    .map_err(|e| invalid(e.to_string()))?;
                let joint = DiscreteMeasure::normalized(points, weights)?;
                let config = solver_config(&args.solver, run, targets.n_samples(), joint.len())?;
                solve(&targets, &joint, &config)?.weights
            }
        };
        postcheck_binary(&c1, &c2, &p1, &p2, &w, p)?
    };
    run.json_output(&args.out, &result)?;
    println!(
        "{} (left {}, right {})",
        if result.holds { "holds" } else { "fails" },
        result.left_margin,
        result.right_margin
    );
    run.set_results(result)
}

pub fn baseline_cmd(args: &BaselineArgs, run: &mut Run) -> CliResult<()> {
    let scores: Vec<f64> = match args.method {
        BaselineMethod::Maxprob | BaselineMethod::Entropy => {
            let path = args.probs.as_ref().ok_or_else(|| invalid("--probs is required"))?;
            let probs = load_matrix(&run.input(path)?)?;
            if matches!(args.method, BaselineMethod::Entropy) && probs.ncols() < 2 {
                return Err(invalid("the entropy score needs at least two classes"));
            }
            let rows = probs
                .outer_iter()
                .enumerate()
                .map(|(i, row)| {
                    ProbabilityVector::new(row.to_vec()).map_err(|e| invalid(format!("row {}: {e}", i + 1)))
                })
                .collect::<CliResult<Vec<_>>>()?;
            match args.method {
                BaselineMethod::Maxprob => rows.iter().map(maxprob).collect(),
                _ => rows.iter().map(entropy_score).collect::<otconf::Result<_>>()?,
            }
        }
        BaselineMethod::Cossim => {
            let need = |p: &Option<PathBuf>, flag: &str| p.clone().ok_or_else(|| invalid(format!("--{flag} is required")));
            let features = load_table(&run.input(&need(&args.features, "features")?)?)?;
            let centroids = load_table(&run.input(&need(&args.centroids, "centroids")?)?)?;
            let pseudo = load_labels(&run.input(&need(&args.pseudo, "pseudo")?)?)?;
            check_dims(features.dim(), centroids.dim(), "centroids")?;
            if pseudo.len() != features.n_samples() {
                return Err(invalid(format!("{} labels for {} samples", pseudo.len(), features.n_samples())));
            }
            if let Some(&bad) = pseudo.iter().find(|&&c| c >= centroids.n_samples()) {
                return Err(invalid(format!("label {bad} has no centroid")));
            }
            features
                .rows()
                .zip(&pseudo)
                .map(|(x, &c)| cossim(x, centroids.row(c)))
                .collect::<otconf::Result<_>>()?
        }
    };
    run.output(&args.out, |w| write_column(w, "confidence", &scores))?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    println!("{} scores, mean {mean}", scores.len());
    run.set_results(json!({ "n": scores.len(), "mean": mean }))
}

pub fn eval_cmd(args: &EvalArgs, run: &mut Run) -> CliResult<()> {
    let scores = load_scores(&run.input(&args.scores)?)?;
    let losses = load_column(&run.input(&args.losses)?)?;
    if scores.len() != losses.len() {
        return Err(invalid(format!("{} scores for {} losses", scores.len(), losses.len())));
    }
    if let Some(c) = args.coverage {
        if !(c > 0.0 && c <= 1.0) {
            return Err(invalid(format!("coverage must be in (0, 1], got {c}")));
        }
    }
    let curve = risk_coverage_aurc(&losses, &scores)?;
    let accuracy = match args.coverage {
        Some(c) => {
            let correct: Vec<bool> = losses.iter().map(|&l| l == 0.0).collect();
            Some(selective_accuracy(&correct, &scores, c)?)
        }
        None => None,
    };
    run.output(&args.out, |w| curve.write_csv(w))?;
    if let Some(path) = &args.plot {
        run.output(path, |w| curve.write_svg(w))?;
    }
    println!("AURC {}", curve.aurc);
    if let (Some(acc), Some(c)) = (accuracy, args.coverage) {
        println!("selective accuracy at coverage {c}: {acc}");
    }
    run.set_results(json!({ "aurc": curve.aurc, "n": scores.len(), "selective_accuracy": accuracy }))
}

pub fn reweight_cmd(args: &ReweightArgs, run: &mut Run) -> CliResult<()> {
    let scores = load_scores(&run.input(&args.scores)?)?;
    let companion = match run.optional_input(args.companion.as_ref())? {
        Some(path) => Some(load_scores(&path)?),
        None => None,
    };
    let (normalized, weights) = normalize_and_reweight(&scores, companion.as_deref())?;
    run.output(&args.out, |w| {
        writeln!(w, "normalized,weight")?;
        for (n, s) in normalized.iter().zip(&weights) {
            writeln!(w, "{n},{s}")?;
        }
        Ok(())
    })?;
    println!("{} weights", weights.len());
    run.set_results(json!({ "n": weights.len() }))
}

fn read_spec(path: &Path) -> CliResult<ClusterSpec> {
    let spec: ClusterSpec = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

fn table_output<'a>(path: &Path, table: &'a FeatureTable) -> impl FnOnce(&mut Vec<u8>) -> otconf::Result<()> + 'a {
    let format = Format::from_path(path);
    move |w| match format {
        Format::Csv => write_csv(w, table),
        Format::Otsf => write_otsf(w, table),
    }
}

pub fn synth_cmd(args: &SynthArgs, run: &mut Run) -> CliResult<()> {
    match &args.kind {
        SynthKind::Clusters { spec, seed, out } => {
            let mut spec = read_spec(&run.input(spec)?)?;
            spec.seed = *seed;
            run.set_seed(Some(*seed));
            let table = gen_clusters(&spec)?;
            run.output(out, table_output(out, &table))?;
            println!("{} samples in {} clusters", table.n_samples(), spec.num_clusters());
            run.set_results(json!({ "n": table.n_samples() }))
        }
        SynthKind::Overlap {
            coverage,
            per_class,
            source_offset,
            source_radius,
            target_offset,
            target_radius,
            solver,
            out,
            table,
            plot,
        } => {
            let seed = &solver.seed.ok_or_else(|| invalid("--seed is required"))?;
            let scenario = OverlapScenario {
                source_offset: *source_offset,
                source_radius: *source_radius,
                target_offset: *target_offset,
                target_radius: *target_radius,
                per_class: *per_class,
                seed: *seed,
            };
            run.optional_input(solver.warm_start.as_ref())?;
            let config = solver_config(solver, run, 2 * per_class, 2)?;
            scenario.source_spec().validate()?;
            scenario.target_spec().validate()?;
            if !(*coverage > 0.0 && *coverage <= 1.0) {
                return Err(invalid(format!("coverage must be in (0, 1], got {coverage}")));
            }
            run.set_seed(Some(*seed));
            let outcome = overlap_experiment(&scenario, &config, *coverage)?;
            run.json_output(out, &outcome)?;
            let target = outcome.target.as_ref().expect("experiment returns the target");
            let report = outcome.report.as_ref().expect("experiment returns the report");
            if let Some(path) = table {
                let labels = target.labels().expect("generated targets are labeled");
                run.output(path, |w| {
                    let d = target.dim();
                    let cols: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
                    writeln!(w, "{},score,pseudo,label", cols.join(","))?;
                    for (i, x) in target.rows().enumerate() {
                        let coords: Vec<String> = x.iter().map(f64::to_string).collect();
                        writeln!(
                            w,
                            "{},{},{},{}",
                            coords.join(","),
                            report.scores[i],
                            report.pseudo_labels[i],
                            labels[i]
                        )?;
                    }
                    Ok(())
                })?;
            }
            if let Some(path) = plot {
                run.output(path, |w| write_scatter_svg(target, &report.scores, "OT score", w))?;
            }
            println!(
                "accuracy {:.4} -> {:.4}, g gap {:.4} -> {:.4}",
                outcome.full_accuracy, outcome.retained_accuracy, outcome.gap_before, outcome.gap_after
            );
            run.set_results(&outcome)
        }
        SynthKind::Separation {
            source,
            target,
            seed,
            p,
            out,
        } => {
            let mut source = read_spec(&run.input(source)?)?;
            let mut target = read_spec(&run.input(target)?)?;
            source.seed = *seed;
            target.seed = seed.wrapping_add(1);
            run.set_seed(Some(*seed));
            let check = separation_check(&source, &target)?;
            let exponent = CostExponent::try_from(*p)?;
            let preservation = label_preservation(&gen_clusters(&source)?, None, &gen_clusters(&target)?, None, exponent)?;
            #[derive(Serialize)]
            struct Summary<'a> {
                separation: &'a otconf::synthetic::SeparationCheck,
                preservation: &'a otconf::synthetic::LabelPreservation,
            }
            let summary = Summary {
                separation: &check,
                preservation: &preservation,
            };
            run.json_output(out, &summary)?;
            println!(
                "separation {} ({} < {}), preserved {:.4}",
                check.holds, check.lhs, check.rhs, preservation.overall
            );
            run.set_results(&summary)
        }
    }
}

pub fn sweep_cmd(args: &SweepArgs, run: &mut Run) -> CliResult<()> {
    match &args.kind {
        SweepKind::Epsilon {
            target,
            prototypes,
            weights,
            eps,
            solver,
            out,
            plot,
        } => {
            let targets = load_table(&run.input(target)?)?;
            let w = run.optional_input(weights.as_ref())?;
            let protos = load_measure(&run.input(prototypes)?, w.as_deref())?;
            check_dims(targets.dim(), protos.dim(), "prototypes")?;
            run.optional_input(solver.warm_start.as_ref())?;
            let base = solver_config(solver, run, targets.n_samples(), protos.len())?;
            let eps_list = if eps.is_empty() { ABLATION_EPSILONS.to_vec() } else { eps.clone() };
            if let Some(bad) = eps_list.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
                return Err(invalid(format!("epsilon must be > 0, got {bad}")));
            }
            let runs = epsilon_ablation(&targets, &protos, &base, &eps_list)?;
            run.json_output(out, &runs)?;
            if let Some(path) = plot {
                let series = runs
                    .iter()
                    .map(|r| Series {
                        label: format!("eps = {:e}", r.epsilon),
                        points: r.trace.iter().map(|t| (t.step as f64, t.residual)).collect(),
                    })
                    .collect();
                run.output(path, |w| trace_plot("Marginal residual by epsilon", series, "residual").write(w))?;
            }
            let summary: Vec<_> = runs
                .iter()
                .map(|r| {
                    json!({
                        "epsilon": r.epsilon,
                        "initial_residual": r.initial_residual,
                        "final_residual": r.final_residual,
                        "sharpness": r.sharpness,
                    })
                })
                .collect();
            for r in &runs {
                println!(
                    "eps {:e}: residual {:e} -> {:e}, entropy {:e}",
                    r.epsilon, r.initial_residual, r.final_residual, r.sharpness.mean_entropy
                );
            }
            run.set_results(summary)
        }
        SweepKind::Reweight {
            source,
            target,
            steps,
            out,
            plot,
        } => {
            let source = load_table(&run.input(source)?)?;
            let target = load_table(&run.input(target)?)?;
            if *steps == 0 {
                return Err(invalid("--steps must be >= 1"));
            }
            let sweep = reweight_sweep(&source, &target, &proportion_grid(*steps))?;
            run.output(out, |w| {
                writeln!(w, "p,cost")?;
                for (p, c) in sweep.grid.iter().zip(&sweep.costs) {
                    writeln!(w, "{p},{c}")?;
                }
                Ok(())
            })?;
            if let Some(path) = plot {
                let plot = LinePlot {
                    title: format!("Reweighted W1, argmin p = {}", sweep.argmin_p),
                    x_label: "p".into(),
                    y_label: "W1".into(),
                    series: vec![Series {
                        label: "cost".into(),
                        points: sweep.grid.iter().copied().zip(sweep.costs.iter().copied()).collect(),
                    }],
                };
                run.output(path, |w| plot.write(w))?;
            }
            println!("argmin p = {}", sweep.argmin_p);
            run.set_results(json!({ "argmin_p": sweep.argmin_p }))
        }
    }
}

pub fn bound_cmd(args: &BoundArgs, run: &mut Run) -> CliResult<()> {
    let m1 = if args.m1.is_empty() { &args.f1 } else { &args.m1 };
    let m2 = if args.m2.is_empty() { &args.f2 } else { &args.m2 };
    let report = misclassification_bound(&args.f1, &args.f2, args.w_star, args.g, m1, m2, args.sigma)?;
    run.json_output(&args.out, &report)?;
    println!("bound {} (distances {}, {})", report.bound, report.distances[0], report.distances[1]);
    run.set_results(report)
}
