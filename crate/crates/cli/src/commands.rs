use jc_core::hilbert::{Factor, JointOps, SpaceTag, TruncatedSpace};
use jc_core::lindblad::{
    evolve, expectation, jc_liouvillian, partial_trace, steady_residual, steady_state, von_neumann_entropy, DensityMatrix,
};
use jc_core::meanfield::{bistability_leaf, dispersive_sweep, log_grid, mb_steady_scurve, BranchSet, Stability};
use jc_core::phasespace::{
    duffing_mean_photon, duffing_photon_pdf_variant, duffing_wigner_grid, find_critical_points, husimi_q, wigner,
    CriticalKind, CriticalPoint, DuffingParams, GridSpec, PhaseGrid,
};
use jc_core::sse::{
    classify_states, dark_line_estimate, initial_state, lifetime_histogram, mean_lifetime, qubit_coherence_series,
    run_ensemble, run_trajectory, spectrum, Episode, Label, Thresholds, TrajectoryConfig, TrajectoryRecord,
};
use jc_core::{SystemParams, C64};
use serde::Serialize;
use serde_json::json;

use crate::config::{Command, ExperimentConfig};
use crate::output::{Cell, Writer};
use crate::CliError;

const DEFAULT_GRID_POINTS: usize = 101;

type Out<T> = Result<T, CliError>;

fn ctx<T>(cmd: Command, r: jc_core::Result<T>) -> Out<T> {
    r.map_err(|source| CliError::Core {
        command: cmd.name(),
        source,
    })
}

pub fn dispatch(cfg: &ExperimentConfig, w: &mut Writer) -> Out<()> {
    match cfg.subcommand {
        Command::Steady => steady(cfg, w),
        Command::Evolve => evolve_cmd(cfg, w),
        Command::Trajectory => trajectory(cfg, w),
        Command::Ensemble => ensemble(cfg, w),
        Command::Wigner | Command::Qfunc => phase_map(cfg, w),
        Command::Duffing => duffing(cfg, w),
        Command::Meanfield => meanfield(cfg, w),
        Command::Leaf => leaf(cfg, w),
        Command::Spectrum => spectrum_cmd(cfg, w),
        Command::Lifetimes => lifetimes(cfg, w),
    }
}

fn space(cfg: &ExperimentConfig) -> Out<TruncatedSpace> {
    ctx(cfg.subcommand, TruncatedSpace::new(cfg.numerics.n_max))
}

fn traj_config(cfg: &ExperimentConfig) -> TrajectoryConfig {
    let n = &cfg.numerics;
    let mut t = TrajectoryConfig::new(n.t_final, n.dt, n.sample_stride, n.seed);
    t.propagation = n.propagation;
    t
}

fn plot_script(lines: &[String]) -> String {
    let mut s = String::from("# gnuplot script; run from the output directory\nset datafile separator ','\nset key autotitle columnhead\n");
    for l in lines {
        s.push_str(l);
        s.push('\n');
    }
    s
}

fn steady_jc(cfg: &ExperimentConfig) -> Out<(TruncatedSpace, DensityMatrix, f64)> {
    let cmd = cfg.subcommand;
    let sp = space(cfg)?;
    let l = ctx(cmd, jc_liouvillian(&cfg.params, &sp))?;
    let rho = ctx(cmd, steady_state(&l))?;
    Ok((sp, rho.clone(), steady_residual(&l, &rho)))
}

fn grid_for(cfg: &ExperimentConfig, rho_c: &DensityMatrix) -> Out<GridSpec> {
    let n = cfg.grid.points.unwrap_or(DEFAULT_GRID_POINTS);
    let r = match cfg.grid.half_width {
        Some(h) => GridSpec::square(C64::new(cfg.grid.center_re, cfg.grid.center_im), h, n),
        None => GridSpec::for_state(rho_c, n),
    };
    ctx(cfg.subcommand, r)
}

fn grid_rows(g: &PhaseGrid) -> Vec<Vec<Cell>> {
    let mut rows = Vec::with_capacity(g.nx * g.ny);
    for iy in 0..g.ny {
        for ix in 0..g.nx {
            let z = g.point(ix, iy);
            rows.push(vec![z.re.into(), z.im.into(), g.value(ix, iy).into()]);
        }
    }
    rows
}

#[derive(Serialize)]
struct CriticalSummary {
    maxima: usize,
    minima: usize,
    saddles: usize,
    points: Vec<CriticalPoint>,
}

fn critical_summary(g: &PhaseGrid) -> CriticalSummary {
    let points = find_critical_points(g);
    let count = |k| points.iter().filter(|p| p.kind == k).count();
    CriticalSummary {
        maxima: count(CriticalKind::Maximum),
        minima: count(CriticalKind::Minimum),
        saddles: count(CriticalKind::Saddle),
        points,
    }
}

fn write_grid(w: &mut Writer, stem: &str, quantity: &str, g: &PhaseGrid, extra: serde_json::Value) -> Out<()> {
    let meta = json!({
        "quantity": quantity,
        "x_min": g.x_min, "x_max": g.x_max, "nx": g.nx,
        "y_min": g.y_min, "y_max": g.y_max, "ny": g.ny,
        "integral": g.integral(),
        "min": g.min_value(),
        "max": g.max_value(),
        "critical_points": critical_summary(g),
        "warnings": g.warnings,
        "extra": extra,
    });
    w.table(stem, &["re_alpha", "im_alpha", quantity], &grid_rows(g), &meta)
}

fn photon_rows(rho_c: &DensityMatrix) -> Vec<Vec<Cell>> {
    let m = rho_c.matrix();
    (0..m.nrows()).map(|k| vec![k.into(), m[(k, k)].re.into()]).collect()
}

#[derive(Serialize)]
struct SteadySummary {
    relative_residual: f64,
    trace_error: f64,
    min_eigenvalue: f64,
    mean_photons: f64,
    alpha: C64,
    sigma_minus: C64,
    sigma_z: f64,
    qubit_entropy: f64,
    purity: f64,
    top_fock_population: f64,
}

fn steady(cfg: &ExperimentConfig, w: &mut Writer) -> Out<()> {
    let cmd = cfg.subcommand;
    let (sp, rho, residual) = steady_jc(cfg)?;
    let ops = JointOps::new(&sp);
    let ev = |op| ctx(cmd, expectation(&rho, op));
    let rho_c = ctx(cmd, partial_trace(&rho, Factor::Cavity))?;
    let rho_q = ctx(cmd, partial_trace(&rho, Factor::Qubit))?;
    let top = rho_c.matrix()[(sp.n_max() - 1, sp.n_max() - 1)].re;
    let summary = SteadySummary {
        relative_residual: residual,
        trace_error: (rho.trace() - 1.0).norm(),
        min_eigenvalue: rho.min_eigenvalue(),
        mean_photons: ev(&ops.n)?.re,
        alpha: ev(&ops.a)?,
        sigma_minus: ev(&ops.sm)?,
        sigma_z: ev(&ops.sz)?.re,
        qubit_entropy: von_neumann_entropy(&rho_q),
        purity: rho.purity(),
        top_fock_population: top,
    };
    w.json("steady.json", &summary)?;
    w.table("photon_pdf", &["n", "p"], &photon_rows(&rho_c), &json!({ "source": "master-equation steady state" }))?;
    let g = ctx(cmd, husimi_q(&rho_c, &grid_for(cfg, &rho_c)?))?;
    write_grid(w, "qfunc", "q", &g, json!({}))?;
    w.bytes(
        "plot.gp",
        plot_script(&[
            "set terminal pngcairo; set output 'qfunc.png'".into(),
            "set view map; splot 'qfunc.csv' using 1:2:3 with image".into(),
            "set output 'photon_pdf.png'; plot 'photon_pdf.csv' using 1:2 with boxes".into(),
        ])
        .as_bytes(),
    )
}

fn phase_map(cfg: &ExperimentConfig, w: &mut Writer) -> Out<()> {
    let cmd = cfg.subcommand;
    let (_, rho, residual) = steady_jc(cfg)?;
    let rho_c = ctx(cmd, partial_trace(&rho, Factor::Cavity))?;
    let spec = grid_for(cfg, &rho_c)?;
    let (stem, g) = if cmd == Command::Wigner {
        ("wigner", ctx(cmd, wigner(&rho_c, &spec))?)
    } else {
        ("q", ctx(cmd, husimi_q(&rho_c, &spec))?)
    };
    write_grid(w, cmd.name(), stem, &g, json!({ "relative_residual": residual }))?;
    w.bytes(
        "plot.gp",
        plot_script(&[
            format!("set terminal pngcairo; set output '{}.png'", cmd.name()),
            format!("set view map; splot '{}.csv' using 1:2:3 with image", cmd.name()),
        ])
        .as_bytes(),
    )
}

fn evolve_cmd(cfg: &ExperimentConfig, w: &mut Writer) -> Out<()> {
    let cmd = cfg.subcommand;
    let sp = space(cfg)?;
    let l = ctx(cmd, jc_liouvillian(&cfg.params, &sp))?;
    let ops = JointOps::new(&sp);
    let rho0 = ctx(cmd, DensityMatrix::from_pure(SpaceTag::Joint, &initial_state(&sp)))?;
    let m = cfg.numerics.time_points;
    let times: Vec<f64> = (0..m).map(|i| cfg.numerics.t_final * i as f64 / (m - 1) as f64).collect();
    let states = ctx(cmd, evolve(&rho0, &l, &times))?;
    let mut rows = Vec::with_capacity(m);
    for (t, rho) in times.iter().zip(&states) {
        let a = ctx(cmd, expectation(rho, &ops.a))?;
        let n = ctx(cmd, expectation(rho, &ops.n))?.re;
        let sz = ctx(cmd, expectation(rho, &ops.sz))?.re;
        let sq = von_neumann_entropy(&ctx(cmd, partial_trace(rho, Factor::Qubit))?);
        rows.push(vec![(*t).into(), a.re.into(), a.im.into(), n.into(), sz.into(), sq.into(), rho.purity().into()]);
    }
    w.table(
        "evolve",
        &["t", "re_a", "im_a", "n", "sz", "entropy", "purity"],
        &rows,
        &json!({ "initial_state": "vacuum, qubit ground" }),
    )?;
    w.bytes("plot.gp", plot_script(&["plot 'evolve.csv' using 1:4 with lines".into()]).as_bytes())
}

const TRAJ_HEADER: [&str; 10] = ["t", "re_a", "im_a", "n", "re_sm", "im_sm", "sx", "sy", "sz", "entropy"];

fn record_rows(rec: &TrajectoryRecord, prefix: Option<u64>) -> Vec<Vec<Cell>> {
    (0..rec.len())
        .map(|i| {
            let mut row: Vec<Cell> = prefix.map(Cell::from).into_iter().collect();
            row.extend([
                rec.times[i].into(),
                rec.a[i].re.into(),
                rec.a[i].im.into(),
                rec.n[i].into(),
                rec.sm[i].re.into(),
                rec.sm[i].im.into(),
                rec.sx[i].into(),
                rec.sy[i].into(),
                rec.sz[i].into(),
                rec.entropy[i].into(),
            ]);
            row
        })
        .collect()
}

fn traj_meta(cfg: &ExperimentConfig, rec: &TrajectoryRecord) -> serde_json::Value {
    json!({
        "seed": rec.seed,
        "dt": rec.dt,
        "sample_stride": rec.sample_stride,
        "sample_interval": rec.sample_interval(),
        "n_max": rec.n_max,
        "propagation": cfg.numerics.propagation,
        "initial_state": "vacuum, qubit ground",
    })
}

fn trajectory(cfg: &ExperimentConfig, w: &mut Writer) -> Out<()> {
    let rec = ctx(cfg.subcommand, run_trajectory(&cfg.params, &space(cfg)?, &traj_config(cfg)))?;
    w.table("trajectory", &TRAJ_HEADER, &record_rows(&rec, None), &traj_meta(cfg, &rec))?;
    w.bytes(
        "plot.gp",
        plot_script(&["plot 'trajectory.csv' using 1:4 with lines, '' using 1:9 with lines axes x1y2".into()]).as_bytes(),
    )
}

fn ensemble(cfg: &ExperimentConfig, w: &mut Writer) -> Out<()> {
    let cmd = cfg.subcommand;
    let recs = ctx(cmd, run_ensemble(&cfg.params, &space(cfg)?, &traj_config(cfg), cfg.numerics.trajectories))?;
    let mut header = vec!["trajectory"];
    header.extend(TRAJ_HEADER);
    let rows: Vec<Vec<Cell>> = recs.iter().flat_map(|r| record_rows(r, Some(r.trajectory))).collect();
    let meta = json!({ "trajectories": recs.len(), "record": traj_meta(cfg, &recs[0]) });
    w.table("ensemble", &header, &rows, &meta)?;

    // sample-wise ensemble means
    let len = recs.iter().map(TrajectoryRecord::len).min().unwrap_or(0);
    let k = recs.len() as f64;
    let mean_rows: Vec<Vec<Cell>> = (0..len)
        .map(|i| {
            let avg = |f: &dyn Fn(&TrajectoryRecord) -> f64| recs.iter().map(f).sum::<f64>() / k;
            vec![
                recs[0].times[i].into(),
                avg(&|r| r.a[i].re).into(),
                avg(&|r| r.a[i].im).into(),
                avg(&|r| r.n[i]).into(),
                avg(&|r| r.sz[i]).into(),
            ]
        })
        .collect();
    w.table("ensemble_mean", &["t", "re_a", "im_a", "n", "sz"], &mean_rows, &json!({ "trajectories": recs.len() }))?;
    w.bytes("plot.gp", plot_script(&["plot 'ensemble_mean.csv' using 1:4 with lines".into()]).as_bytes())
}

fn duffing(cfg: &ExperimentConfig, w: &mut Writer) -> Out<()> {
    let cmd = cfg.subcommand;
    let dp = ctx(cmd, DuffingParams::from_system(&cfg.params, cfg.duffing.s))?;
    let mean = ctx(cmd, duffing_mean_photon(&dp))?;
    let pdf = ctx(cmd, duffing_photon_pdf_variant(&dp, cfg.numerics.n_max, cfg.duffing.pdf_argument))?;
    let rows: Vec<Vec<Cell>> = pdf.iter().enumerate().map(|(k, p)| vec![k.into(), (*p).into()]).collect();
    let total: f64 = pdf.iter().sum();
    w.table(
        "duffing_pdf",
        &["n", "p"],
        &rows,
        &json!({ "pdf_argument": cfg.duffing.pdf_argument, "sum": total, "mean_photons": mean }),
    )?;
    let n = cfg.grid.points.unwrap_or(DEFAULT_GRID_POINTS);
    let half = cfg.grid.half_width.unwrap_or(mean.max(0.0).sqrt() + 3.0);
    let spec = ctx(cmd, GridSpec::square(C64::new(cfg.grid.center_re, cfg.grid.center_im), half, n))?;
    let g = ctx(cmd, duffing_wigner_grid(&dp, &spec))?;
    write_grid(w, "duffing_wigner", "wigner", &g, json!({ "duffing": dp }))?;
    w.bytes(
        "plot.gp",
        plot_script(&[
            "set terminal pngcairo; set output 'duffing_wigner.png'".into(),
            "set view map; splot 'duffing_wigner.csv' using 1:2:3 with image".into(),
        ])
        .as_bytes(),
    )
}

fn detuning_grid(cfg: &ExperimentConfig) -> Vec<f64> {
    let s = &cfg.sweep;
    let k = cfg.params.kappa;
    if s.log {
        log_grid(s.delta_c_over_kappa_min * k, s.delta_c_over_kappa_max * k, s.points)
    } else {
        (0..s.points)
            .map(|i| k * (s.delta_c_over_kappa_min + (s.delta_c_over_kappa_max - s.delta_c_over_kappa_min) * i as f64 / (s.points - 1) as f64))
            .collect()
    }
}

fn branch_rows(b: &BranchSet, kappa: f64) -> Vec<Vec<Cell>> {
    let mut rows = Vec::new();
    for (x, roots) in b.sweep.iter().zip(&b.roots) {
        for (i, r) in roots.iter().enumerate() {
            let stab = match r.stability {
                Stability::Stable => "stable",
                Stability::Unstable => "unstable",
                Stability::Marginal => "marginal",
            };
            let zeta = r.state.map_or(f64::NAN, |s| s.zeta);
            rows.push(vec![(x / kappa).into(), i.into(), r.n.into(), r.alpha.re.into(), r.alpha.im.into(), zeta.into(), stab.into()]);
        }
    }
    rows
}

const BRANCH_HEADER: [&str; 7] = ["delta_c_over_kappa", "root", "n", "re_alpha", "im_alpha", "zeta", "stability"];

fn meanfield(cfg: &ExperimentConfig, w: &mut Writer) -> Out<()> {
    let cmd = cfg.subcommand;
    let grid = detuning_grid(cfg);
    let k = cfg.params.kappa;
    let disp = ctx(cmd, dispersive_sweep(&cfg.params, &grid))?;
    w.table(
        "dispersive_scurve",
        &BRANCH_HEADER,
        &branch_rows(&disp, k),
        &json!({ "model": "dispersive, qubit relaxation neglected", "multistable_points": disp.multistable().len() }),
    )?;
    let mut plots = vec!["plot 'dispersive_scurve.csv' using 1:3 with points".to_string()];
    if cfg.params.gamma > 0.0 {
        let mb = ctx(cmd, mb_steady_scurve(&cfg.params, &grid))?;
        w.table(
            "mb_scurve",
            &BRANCH_HEADER,
            &branch_rows(&mb, k),
            &json!({ "model": "damped Maxwell-Bloch", "multistable_points": mb.multistable().len() }),
        )?;
        plots.push("replot 'mb_scurve.csv' using 1:3 with points".into());
    }
    w.bytes("plot.gp", plot_script(&plots).as_bytes())
}

fn leaf(cfg: &ExperimentConfig, w: &mut Writer) -> Out<()> {
    let cmd = cfg.subcommand;
    let k = cfg.params.kappa;
    let b = ctx(cmd, bistability_leaf(&cfg.params, &detuning_grid(cfg)))?;
    let rows: Vec<Vec<Cell>> = b
        .points
        .iter()
        .map(|p| vec![(p.delta_c / k).into(), p.delta_c.into(), p.eps_low.into(), p.eps_high.into()])
        .collect();
    let corner = |c: Option<(f64, f64)>| c.map(|(dc, eps)| json!({ "delta_c_over_kappa": dc / k, "delta_c": dc, "eps_d": eps }));
    w.table(
        "leaf",
        &["delta_c_over_kappa", "delta_c", "eps_low", "eps_high"],
        &rows,
        &json!({
            "bistable_points": b.points.len(),
            "nonempty": !b.is_empty(),
            "c1": corner(b.c1),
            "c2": corner(b.c2),
            "units": cfg.units,
        }),
    )?;
    w.bytes(
        "plot.gp",
        plot_script(&["set logscale xy; plot 'leaf.csv' using 1:3 with lines, '' using 1:4 with lines".into()]).as_bytes(),
    )
}

fn spectrum_cmd(cfg: &ExperimentConfig, w: &mut Writer) -> Out<()> {
    let cmd = cfg.subcommand;
    let p: &SystemParams = &cfg.params;
    let rec = ctx(cmd, run_trajectory(p, &space(cfg)?, &traj_config(cfg)))?;
    let (_, series) = qubit_coherence_series(&rec);
    let spec = ctx(cmd, spectrum(&series, rec.sample_interval()))?;
    let lambda = ctx(cmd, p.lambda())?;
    // the qubit-flip line sits on the negative side, the drive-locked response at +Δq
    let band: Vec<usize> = (0..spec.freqs.len()).filter(|&i| spec.freqs[i] > -4.0 * lambda && spec.freqs[i] < 0.0).collect();
    let peak = band.iter().copied().max_by(|&a, &b| spec.magnitudes[a].total_cmp(&spec.magnitudes[b]));
    let rows: Vec<Vec<Cell>> = spec.freqs.iter().zip(&spec.magnitudes).map(|(f, m)| vec![(*f).into(), (*m).into()]).collect();
    w.table(
        "spectrum",
        &["omega", "magnitude"],
        &rows,
        &json!({
            "series": "<sigma_minus(t)> demodulated by the bare qubit detuning",
            "bin_width": spec.bin_width(),
            "peak_omega": peak.map(|i| spec.freqs[i]),
            "peak_magnitude": peak.map(|i| spec.magnitudes[i]),
            "minus_lambda": -lambda,
            "dispersive_estimate": ctx(cmd, dark_line_estimate(p))?,
            "record": traj_meta(cfg, &rec),
        }),
    )?;
    w.bytes("plot.gp", plot_script(&["set logscale y; plot 'spectrum.csv' using 1:2 with lines".into()]).as_bytes())
}

fn thresholds(cfg: &ExperimentConfig) -> Out<Thresholds> {
    let cmd = cfg.subcommand;
    let t = &cfg.thresholds;
    let k = cfg.params.kappa;
    let mut thr = match (t.n_dark, t.n_mid, t.n_bright) {
        (Some(a), Some(b), Some(c)) => ctx(cmd, Thresholds::new(a, b, c, k))?,
        (None, None, None) => {
            // levels of the undamped dispersive response, shared by every damping value
            let undamped = SystemParams { gamma: 0.0, ..cfg.params };
            ctx(cmd, Thresholds::from_mean_field(&undamped))?
        }
        _ => return Err(CliError::Config("thresholds: give all of n_dark, n_mid, n_bright or none".into())),
    };
    if let Some(d) = t.min_duration {
        if !(d >= 0.0) {
            return Err(CliError::Config("thresholds.min_duration must be >= 0".into()));
        }
        thr.min_duration = d / k;
    }
    Ok(thr)
}

fn label_name(l: Label) -> &'static str {
    match l {
        Label::Bright => "bright",
        Label::Dim => "dim",
        Label::Dark => "dark",
    }
}

fn lifetimes(cfg: &ExperimentConfig, w: &mut Writer) -> Out<()> {
    let cmd = cfg.subcommand;
    let thr = thresholds(cfg)?;
    let k = cfg.params.kappa;
    let recs = ctx(cmd, run_ensemble(&cfg.params, &space(cfg)?, &traj_config(cfg), cfg.numerics.trajectories))?;
    let mut episodes: Vec<(u64, Episode)> = Vec::new();
    for r in &recs {
        episodes.extend(ctx(cmd, classify_states(r, &thr))?.into_iter().map(|e| (r.trajectory, e)));
    }
    if episodes.is_empty() {
        return Err(CliError::Statistics {
            command: cmd.name(),
            message: "no labelled episodes; lengthen t_final or adjust thresholds".into(),
        });
    }
    let rows: Vec<Vec<Cell>> = episodes
        .iter()
        .map(|(i, e)| {
            vec![
                (*i).into(),
                label_name(e.label).into(),
                e.t_start.into(),
                e.t_end.into(),
                (e.duration() * k).into(),
                e.mean_n.into(),
                e.mean_sz.into(),
            ]
        })
        .collect();
    w.table(
        "episodes",
        &["trajectory", "label", "t_start", "t_end", "duration_kappa", "mean_n", "mean_sz"],
        &rows,
        &json!({ "thresholds": thr, "trajectories": recs.len() }),
    )?;
    let plain: Vec<Episode> = episodes.iter().map(|(_, e)| *e).collect();
    let bin = cfg.thresholds.bin_width.unwrap_or(1.0);
    let mut summary = serde_json::Map::new();
    let mut plots = Vec::new();
    for label in [Label::Dark, Label::Dim, Label::Bright] {
        let Some((mean, count)) = mean_lifetime(&plain, label) else {
            continue;
        };
        let h = ctx(cmd, lifetime_histogram(&plain, label, bin, k))?;
        let rows: Vec<Vec<Cell>> = h
            .counts
            .iter()
            .enumerate()
            .map(|(i, c)| vec![h.bin_edges[i].into(), h.bin_edges[i + 1].into(), (*c).into()])
            .collect();
        let name = label_name(label);
        let stem = format!("lifetimes_{name}");
        w.table(&stem, &["bin_low_kappa", "bin_high_kappa", "count"], &rows, &json!({ "label": name, "total": h.total }))?;
        summary.insert(name.into(), json!({ "episodes": count, "mean_lifetime_kappa": mean * k }));
        plots.push(format!("plot '{stem}.csv' using 1:3 with steps"));
    }
    w.json("lifetimes.json", &summary)?;
    w.bytes("plot.gp", plot_script(&plots).as_bytes())
}
