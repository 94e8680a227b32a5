//! Drivers for the `scan`, `simulate`, `toy`, `renewal` and `exitprob`
//! subcommands. Each writes its tables and returns the checks it asserts.

use anyhow::{Context, Result};
use vrjp_core::beta::BetaSampler;
use vrjp_core::graph::{
    build_box_lattice, build_halfspace_box, build_halfspace_strip, parse_graph, SideBoundary, VertexClass,
    WeightedGraph,
};
use vrjp_core::mc::{
    cell, derive_seed, map_replicates, moment_suite, opt_cell, phase_scan, tail_suite, two_sample_z, Table,
    TAIL_HEADER,
};
use vrjp_core::renewal::{ig_tail_check, overshoot_trace, renewal_decompose, Enumeration};
use vrjp_core::toy::{
    chain_partition_identity, convex_order_chain_test, relative_gap, toy_moment_check, toy_uniform_bound_experiment,
    ComparisonParams, ConvexFn, ToyBoundConfig, ToyMomentSpec, WeightSampler, TOY_MOMENT_HEADER,
};
use vrjp_core::vrjp::{exit_probability_annealed, simulate_vrjp, ExitEstimate, StopRule};
use vrjp_core::Error;

use crate::config::{GraphKind, Order, RunConfig, Weights};
use crate::output::{keyed, RunOutput};
use crate::suite::Verdict;

fn wants(only: &[String], part: &str) -> bool {
    only.is_empty() || only.iter().any(|o| o == part)
}

fn ds(d: usize) -> String {
    d.to_string()
}

pub fn scan(cfg: &RunConfig, out: &mut RunOutput) -> Result<Vec<Verdict>> {
    let s = &cfg.scan;
    let (seed, workers, only) = (cfg.run.seed, cfg.run.workers, &cfg.run.only);
    let sigma = cfg.tolerances.sigma;
    let mut phase_parts = Vec::new();
    let mut decay = Table::new([
        "d",
        "w",
        "slope",
        "slope_se",
        "clearly_negative",
        "slope_nondecreasing",
        "second_moment",
        "second_moment_se",
        "second_moment_nonincreasing",
    ]);
    let mut crossover = Table::new(["d", "lower_w", "upper_w"]);
    let mut moment_parts = Vec::new();
    let mut tail_parts = Vec::new();

    for &d in &s.d_set {
        let moments = if wants(only, "moments") || wants(only, "phase") {
            let p_set: Vec<i32> = if s.p_set.contains(&2) { s.p_set.clone() } else { [s.p_set.clone(), vec![2]].concat() };
            let build = |w| build_box_lattice(d, s.moment_radius, w);
            Some(moment_suite(build, &s.w_grid, &p_set, s.replicates, derive_seed(seed, 100 + d as u64), workers)?)
        } else {
            None
        };
        if wants(only, "phase") {
            let scan = phase_scan(d, &s.n_grid, &s.w_grid, s.replicates, derive_seed(seed, d as u64), workers)?;
            phase_parts.push((vec![ds(d)], scan.to_table()));
            let second = moments.as_ref().expect("moments computed with the phase part");
            for (i, sl) in scan.slopes.iter().enumerate() {
                let mono = i == 0 || {
                    let a = &scan.slopes[i - 1];
                    sl.slope >= a.slope - sigma * (a.std_error.powi(2) + sl.std_error.powi(2)).sqrt()
                };
                let row = second.row(sl.w, Some(2)).expect("second moment row").summary;
                let non_increasing = i == 0 || {
                    let prev = second.row(s.w_grid[i - 1], Some(2)).expect("second moment row").summary;
                    two_sample_z(&row, &prev) <= sigma
                };
                decay.push(vec![
                    ds(d),
                    cell(sl.w),
                    cell(sl.slope),
                    cell(sl.std_error),
                    sl.clearly_negative().to_string(),
                    mono.to_string(),
                    cell(row.mean),
                    opt_cell(row.std_error()),
                    non_increasing.to_string(),
                ]);
            }
            let (lo, hi) = scan.crossover.map_or((String::new(), String::new()), |(a, b)| (cell(a), cell(b)));
            crossover.push(vec![ds(d), lo, hi]);
        }
        if wants(only, "moments") {
            moment_parts.push((vec![ds(d)], moments.expect("computed").to_table()));
        }
        if wants(only, "tail") {
            for (i, &w) in s.w_grid.iter().enumerate() {
                let g = build_halfspace_strip(d, s.strip_levels, s.strip_m, w, SideBoundary::Free)?;
                let rows =
                    tail_suite(&g, &s.t_grid, s.replicates, derive_seed(seed, 200 + 10 * d as u64 + i as u64), workers)?;
                let mut t = Table::new(TAIL_HEADER);
                rows.iter().for_each(|r| t.push(r.to_row()));
                tail_parts.push((vec![ds(d), cell(w)], t));
            }
        }
    }
    if wants(only, "phase") {
        out.write("phase.csv", &keyed(&["d"], phase_parts))?;
        out.write("decay.csv", &decay)?;
        out.write("crossover.csv", &crossover)?;
    }
    if wants(only, "moments") {
        out.write("moments.csv", &keyed(&["d"], moment_parts))?;
    }
    if wants(only, "tail") {
        out.write("tail.csv", &keyed(&["d", "w"], tail_parts))?;
    }
    // the scan is descriptive: its diagnostics are columns, not assertions
    Ok(Vec::new())
}

fn pair_graph(w: f64) -> vrjp_core::Result<WeightedGraph> {
    let mut g = WeightedGraph::new();
    g.add_vertex(VertexClass::Plain, 0.0)?;
    g.add_vertex(VertexClass::Plain, 0.0)?;
    g.add_conductance(0, 1, w)?;
    g.set_root(Some(0))?;
    Ok(g)
}

fn simulation_graph(cfg: &RunConfig) -> Result<WeightedGraph> {
    let s = &cfg.simulate;
    Ok(match s.graph {
        GraphKind::Box => build_box_lattice(s.d, s.n, s.w)?,
        GraphKind::Halfspace => build_halfspace_box(s.d, s.n, s.m, s.w)?,
        GraphKind::Pair => pair_graph(s.w)?,
        GraphKind::File => {
            let path = s.graph_file.as_ref().expect("checked with the config");
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_graph(&text)?
        }
    })
}

fn exit_row(key: Vec<String>, e: &ExitEstimate) -> Vec<String> {
    key.into_iter()
        .chain([
            e.mass_ratio.n.to_string(),
            cell(e.mass_ratio.mean),
            opt_cell(e.mass_ratio.std_error()),
            e.walk_frequency.n.to_string(),
            cell(e.walk_frequency.mean),
            opt_cell(e.walk_frequency.std_error()),
            cell(e.z()),
            e.truncated.to_string(),
            e.walks.to_string(),
            e.walk_estimate_valid().to_string(),
        ])
        .collect()
}

const EXIT_HEADER: [&str; 10] = [
    "draws",
    "mass_ratio",
    "mass_ratio_se",
    "walks_counted",
    "walk_frequency",
    "walk_frequency_se",
    "z",
    "truncated",
    "walks",
    "walk_estimate_valid",
];

pub fn simulate(cfg: &RunConfig, out: &mut RunOutput) -> Result<Vec<Verdict>> {
    let s = &cfg.simulate;
    let (seed, workers, only) = (cfg.run.seed, cfg.run.workers, &cfg.run.only);
    let g = simulation_graph(cfg)?;
    let start = s.start.or(g.root()).unwrap_or(0);
    anyhow::ensure!(
        start < g.num_vertices(),
        Error::InvalidParameter(format!("start vertex {start} out of range"))
    );
    let stop = StopRule { horizon: s.horizon, jump_budget: s.budget };
    let mut verdicts = Vec::new();
    if wants(only, "trajectory") {
        let runs = map_replicates(s.replicates, derive_seed(seed, 0), workers, |rng| simulate_vrjp(&g, start, stop, rng))?;
        let mut events = Table::new(["replicate", "jump", "vertex", "time"]);
        let mut summary = Table::new(["replicate", "jumps", "clock", "exit_class", "truncated", "local_time_gap"]);
        for (r, tr) in runs.values.iter().enumerate() {
            for (j, &(v, t)) in tr.events.iter().enumerate() {
                events.push(vec![r.to_string(), (j + 1).to_string(), v.to_string(), cell(t)]);
            }
            // local times rebuilt from the events must agree exactly
            let gap = tr
                .local_time_from_events()
                .iter()
                .zip(&tr.local_time)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            summary.push(vec![
                r.to_string(),
                tr.events.len().to_string(),
                cell(tr.clock),
                tr.exit_class.map_or("none".into(), |c| c.as_str().to_string()),
                tr.truncated.to_string(),
                cell(gap),
            ]);
            verdicts.push(Verdict::new(
                &format!("trajectory {r}"),
                tr.events.len() <= s.budget && gap <= cfg.tolerances.algebraic * tr.clock.max(1.0),
                format!("{} jumps, local time gap {gap:.1e}", tr.events.len()),
            ));
        }
        out.write("trajectories.csv", &events)?;
        out.write("trajectory_summary.csv", &summary)?;
    }
    if wants(only, "exit") {
        let e = exit_probability_annealed(&g, s.exit_replicates, derive_seed(seed, 1), workers, stop)?;
        let mut t = Table::new(EXIT_HEADER);
        t.push(exit_row(Vec::new(), &e));
        out.write("exit.csv", &t)?;
        verdicts.push(Verdict::new(
            "exit",
            e.walk_estimate_valid() && e.z().abs() <= cfg.tolerances.exit_sigma,
            format!("mass ratio {:.4} vs walk frequency {:.4}, z {:.2}", e.mass_ratio.mean, e.walk_frequency.mean, e.z()),
        ));
    }
    Ok(verdicts)
}

fn weight_sampler(w: &Weights) -> Result<WeightSampler> {
    Ok(match w {
        Weights::Point { value } => WeightSampler::PointMass(*value),
        Weights::Uniform { lo, hi } => WeightSampler::Uniform { lo: *lo, hi: *hi },
        Weights::File { path } => WeightSampler::from_file(path)?,
    })
}

pub fn toy(cfg: &RunConfig, out: &mut RunOutput) -> Result<Vec<Verdict>> {
    let y = &cfg.toy;
    let (seed, workers, only) = (cfg.run.seed, cfg.run.workers, &cfg.run.only);
    let tol = &cfg.tolerances;
    let mut verdicts = Vec::new();
    if wants(only, "moments") {
        let mut t = Table::new(TOY_MOMENT_HEADER);
        for (i, s) in y.moments.iter().enumerate() {
            let spec = ToyMomentSpec::new(s.p, s.k, s.m, s.epsilon, s.eta0)?;
            let c = toy_moment_check(&spec, y.moment_replicates, derive_seed(seed, i as u64), workers)?;
            t.push(c.to_row());
            verdicts.push(Verdict::new(
                &format!("moment p={} k={} m={}", s.p, s.k, s.m),
                c.z().abs() <= tol.sigma,
                format!("estimate {:.4} vs {:.4}, z {:.2}", c.estimate, spec.closed_form, c.z()),
            ));
        }
        out.write("toy_moments.csv", &t)?;
    }
    if wants(only, "chain") {
        let mut t = Table::new(["length", "epsilon", "eta0", "replicates", "max_relative_gap", "holds"]);
        let mut rng = vrjp_core::mc::replicate_rng(derive_seed(seed, 50), 0);
        let mut worst = 0.0f64;
        for ell in 0..=y.chain_max_length {
            for &[eps, eta0] in &y.chain_params {
                let mut gap = 0.0f64;
                for _ in 0..y.chain_replicates {
                    let (s, prod) = chain_partition_identity(ell, eps, eta0, &mut rng)?;
                    gap = gap.max(relative_gap(s, prod));
                }
                worst = worst.max(gap);
                t.push(vec![
                    ell.to_string(),
                    cell(eps),
                    cell(eta0),
                    y.chain_replicates.to_string(),
                    cell(gap),
                    (gap <= tol.algebraic).to_string(),
                ]);
            }
        }
        out.write("chain.csv", &t)?;
        verdicts.push(Verdict::new("chain", worst <= tol.algebraic, format!("max relative gap {worst:.2e}")));
    }
    if wants(only, "bound") {
        let b = &y.bound;
        let config = ToyBoundConfig {
            n_grid: b.n_grid.clone(),
            m: b.m,
            epsilon: b.epsilon,
            eta0: b.eta0,
            epsilon0: b.epsilon0,
            p: b.p,
            replicates: b.replicates,
        };
        let report = toy_uniform_bound_experiment(&config, &weight_sampler(&b.weights)?, derive_seed(seed, 60), workers)?;
        out.write("toy_bound.csv", &report.to_table())?;
        let within = report.lemma_bound().is_none_or(|bound| {
            report.rows.iter().all(|r| r.estimate - tol.sigma * r.std_error <= bound)
        });
        let k_ok = !report.mass_condition() || report.k_rows.iter().all(|k| k.within_bound());
        verdicts.push(Verdict::new(
            "bound",
            report.no_upward_trend() != Some(false) && within && k_ok,
            format!(
                "slope {:.3e} +- {:.1e}; mass below eta0 {:.3} (epsilon0 {})",
                report.slope, report.slope_std_error, report.mass_below, b.epsilon0
            ),
        ));
    }
    if wants(only, "convex") {
        let c = &y.convex;
        let params = ComparisonParams { d: c.d, n: c.n, m: c.m, w: c.w, epsilon: c.epsilon };
        let fs = c.f_set.iter().map(|f| ConvexFn::parse(f)).collect::<vrjp_core::Result<Vec<_>>>()?;
        let report = convex_order_chain_test(&params, &fs, c.w_step, c.replicates, derive_seed(seed, 70), workers)?;
        out.write("convex_order.csv", &report.to_table())?;
        let violated = report.checks.iter().filter(|k| !k.holds()).count();
        verdicts.push(Verdict::new(
            "convex",
            report.monotone(),
            format!("{} comparisons, {violated} violated", report.checks.len()),
        ));
    }
    Ok(verdicts)
}

pub fn renewal(cfg: &RunConfig, out: &mut RunOutput) -> Result<Vec<Verdict>> {
    let r = &cfg.renewal;
    let (seed, workers, only) = (cfg.run.seed, cfg.run.workers, &cfg.run.only);
    let tol = &cfg.tolerances;
    let mut verdicts = Vec::new();
    let g = build_halfspace_strip(r.d, r.levels, r.m, r.w, SideBoundary::Free)?;
    let draws = if wants(only, "identity") || wants(only, "overshoot") {
        let sampler = BetaSampler::new(&g, None)?;
        map_replicates(r.replicates, derive_seed(seed, 0), workers, |rng| sampler.sample(rng))?.values
    } else {
        Vec::new()
    };
    if wants(only, "identity") {
        let mut t = Table::new(["replicate", "cut", "slab", "mass_at_cut", "direct", "product", "relative_error"]);
        let mut worst = 0.0f64;
        for (i, b) in draws.iter().enumerate() {
            for &[k, ell] in &r.cuts {
                let (cut_mass, direct, product, err) = match renewal_decompose(&g, b, k, ell) {
                    Ok(d) => (cell(d.mass_at_cut), cell(d.direct_value), cell(d.product_value), d.relative_error),
                    Err(Error::IdentityViolation { relative_error, .. }) => {
                        (String::new(), String::new(), String::new(), relative_error)
                    }
                    Err(e) => return Err(e.into()),
                };
                worst = worst.max(err);
                t.push(vec![i.to_string(), k.to_string(), ell.to_string(), cut_mass, direct, product, cell(err)]);
            }
        }
        out.write("renewal.csv", &t)?;
        verdicts.push(Verdict::new(
            "identity",
            worst <= tol.algebraic,
            format!("max relative error {worst:.2e} over {} decompositions", t.rows.len()),
        ));
    }
    if wants(only, "overshoot") {
        let order = match r.order {
            Order::Lexicographic => Enumeration::Lexicographic,
            Order::Reversed => Enumeration::Reversed,
        };
        let mut steps = Table::new([
            "replicate", "n", "vertex", "x_prev", "y_prev", "z", "z_shape", "split_error", "step_error",
        ]);
        let mut paths = Table::new(["replicate", "tau", "big_t", "r_final", "max_level_mass"]);
        let mut worst = 0.0f64;
        for (i, b) in draws.iter().enumerate() {
            let tr = overshoot_trace(&g, b, r.overshoot_cut, r.t, r.b, order)?;
            for s in &tr.steps {
                worst = worst.max(s.split_error).max(s.step_error);
                steps.push(vec![
                    i.to_string(),
                    s.n.to_string(),
                    s.vertex.to_string(),
                    cell(s.x_prev),
                    cell(s.y_prev),
                    cell(s.z),
                    cell(s.z_shape),
                    cell(s.split_error),
                    cell(s.step_error),
                ]);
            }
            paths.push(vec![
                i.to_string(),
                tr.tau.map_or(String::new(), |x| x.to_string()),
                tr.big_t.map_or(String::new(), |x| x.to_string()),
                cell(*tr.r_sequence.last().expect("R_0 present")),
                cell(tr.martingale_path.iter().copied().fold(0.0, f64::max)),
            ]);
        }
        out.write("overshoot_steps.csv", &steps)?;
        out.write("overshoot_paths.csv", &paths)?;
        verdicts.push(Verdict::new(
            "overshoot",
            worst <= tol.algebraic,
            format!("max split/step error {worst:.2e} over {} steps", steps.rows.len()),
        ));
    }
    if wants(only, "igtail") {
        let rows = ig_tail_check(r.lambda0, &r.lambdas, &r.a_grid)?;
        let mut t = Table::new(["lambda", "a", "ratio", "bound", "holds"]);
        for row in &rows {
            t.push(vec![cell(row.lambda), cell(row.a), cell(row.ratio), cell(row.bound), row.holds().to_string()]);
        }
        out.write("igtail.csv", &t)?;
        verdicts.push(Verdict::new(
            "igtail",
            rows.iter().all(|x| x.holds()),
            format!("{} ratios against constant {:.3}", rows.len(), rows[0].bound),
        ));
    }
    Ok(verdicts)
}

pub fn exitprob(cfg: &RunConfig, out: &mut RunOutput) -> Result<Vec<Verdict>> {
    let e = &cfg.exitprob;
    let stop = StopRule { horizon: f64::INFINITY, jump_budget: e.budget };
    let mut t = Table::new(["w"].into_iter().chain(EXIT_HEADER));
    let mut verdicts = Vec::new();
    for (i, &w) in e.w_grid.iter().enumerate() {
        let g = build_halfspace_box(e.d, e.levels, e.m, w)?;
        let est = exit_probability_annealed(&g, e.replicates, derive_seed(cfg.run.seed, i as u64), cfg.run.workers, stop)?;
        t.push(exit_row(vec![cell(w)], &est));
        verdicts.push(Verdict::new(
            &format!("w={w}"),
            est.walk_estimate_valid() && est.z().abs() <= cfg.tolerances.exit_sigma,
            format!(
                "mass ratio {:.4} vs walk frequency {:.4}, z {:.2}, truncated {}",
                est.mass_ratio.mean,
                est.walk_frequency.mean,
                est.z(),
                est.truncated
            ),
        ));
    }
    out.write("exitprob.csv", &t)?;
    Ok(verdicts)
}
