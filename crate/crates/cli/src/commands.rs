//! One function per subcommand. Each writes its artifacts and returns a summary.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use ogc_core::brake::{brake_multiplicity, render_orbits_svg};
use ogc_core::descent::{flow, verify_critical, CriticalReport, FlowOutcome};
use ogc_core::geometry::{estimate_k0, K0Estimate, MetricField};
use ogc_core::multiplicity::{boundary_diameter, multistart, render_svg, MultistartConfig};
use ogc_core::pathspace::{chord, sample_m0, strip_sweep, DiscretePath, M0Estimate, StripSweep};
use ogc_core::shooting::{ogc_refine, scan_ot_chords, verify_shot, RefineOutcome, ShotCheck};
use ogc_core::transversality::{
    demo_row, lemma_sweep, sphere_cylinder, sphere_plane, stability_probe, DemoRow, LemmaSweep,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{vector, Problem, RunConfig, Setup};
use crate::{CliError, Outcome};

struct Artifacts {
    dir: PathBuf,
    out: Outcome,
}

impl Artifacts {
    fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = cfg.output_dir();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, out: Outcome::default() })
    }

    fn text(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.out.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        s.push('\n');
        self.text(name, &s)
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.out.summary.push_str(s.as_ref());
        self.out.summary.push('\n');
    }

    fn finish(self) -> Outcome {
        self.out
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn is_jacobi(cfg: &RunConfig) -> bool {
    matches!(cfg.problem, Problem::Lagrangian { .. })
}

#[derive(Serialize)]
struct ConstantsFile<'a> {
    name: &'a str,
    dim: usize,
    delta0: f64,
    k0: K0Estimate,
    m0: M0Estimate,
    delta0_over_k0: f64,
    m0_inequality: &'static str,
    strip: StripSweep,
    strip_inequalities: &'static str,
    seed: u64,
}

/// `delta0`, `K0`, `M0`, the check `M0 > delta0 / K0` and the strip inequalities on random paths.
pub fn constants(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let Setup { metric, boundary, .. } = cfg.setup()?;
    let c = &cfg.constants;
    let k0 = estimate_k0(&boundary, &metric, c.k0_samples)?;
    let m0 = sample_m0(&metric, &boundary, c.m0_grid, c.nodes)?;
    let ratio = boundary.delta0() / boundary.k0();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let strip = strip_sweep(&boundary, &metric, c.random_paths, c.nodes, &mut rng)?;
    let strip_ok = strip.violations == 0 && strip.corollary_violations == 0;
    let file = ConstantsFile {
        name: &cfg.name,
        dim: boundary.dim(),
        delta0: boundary.delta0(),
        k0,
        m0,
        delta0_over_k0: ratio,
        m0_inequality: pass(m0.m0 > ratio),
        strip,
        strip_inequalities: pass(strip_ok),
        seed: cfg.seed,
    };
    let mut art = Artifacts::new(cfg)?;
    art.json("constants.json", &file)?;
    art.line(format!("delta0 = {}", boundary.delta0()));
    art.line(format!("K0 = {} (raw {}, {} samples)", k0.k0, k0.raw, k0.samples));
    art.line(format!("M0^2 = {} (raw {}, {} pairs)", m0.m0_sq, m0.raw_sq, m0.pairs));
    art.line(format!("M0 > delta0/K0 = {ratio}: {}", file.m0_inequality));
    art.line(format!(
        "strip inequalities on {} paths ({} checks, {} corollary checks): {}",
        strip.paths, strip.checks, strip.corollary_checks, file.strip_inequalities
    ));
    Ok(art.finish())
}

#[derive(Serialize)]
struct ScanFile<'a> {
    name: &'a str,
    grid: usize,
    shots: usize,
    ot_chords: usize,
    min_abs_exit_cos: f64,
    no_return: usize,
    graze_events: usize,
}

/// Orthogonal shots from a boundary grid; O–T chords are written to `ot_chords.csv`.
pub fn scan_ot(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let Setup { metric, boundary, .. } = cfg.setup()?;
    let report = scan_ot_chords(&metric, &boundary, cfg.scan.grid, &cfg.solver.shoot)?;
    let dim = boundary.dim();
    let mut art = Artifacts::new(cfg)?;
    art.text("scan.csv", &ogc_core::shooting::ScanReport::to_csv(dim, &report.rows))?;
    art.text("ot_chords.csv", &ogc_core::shooting::ScanReport::to_csv(dim, report.findings()))?;
    let file = ScanFile {
        name: &cfg.name,
        grid: cfg.scan.grid,
        shots: report.rows.len(),
        ot_chords: report.tangent.len(),
        min_abs_exit_cos: report.min_abs_exit_cos,
        no_return: report.no_return,
        graze_events: report.graze_events,
    };
    art.json("scan.json", &file)?;
    art.line(format!(
        "{} shots: {} O-T chords, min |exit cos| = {}, {} without return, {} graze events",
        file.shots, file.ot_chords, file.min_abs_exit_cos, file.no_return, file.graze_events
    ));
    Ok(art.finish())
}

#[derive(Serialize)]
struct FindFile<'a> {
    name: &'a str,
    found: bool,
    method: &'static str,
    start: Vec<f64>,
    end: Option<Vec<f64>>,
    flow: Option<FlowSummary>,
    refine: Option<RefineSummary>,
    report: Option<CriticalReport>,
    shot_check: Option<ShotCheck>,
}

#[derive(Serialize)]
struct FlowSummary {
    status: ogc_core::descent::FlowStatus,
    iterations: usize,
    energy: f64,
}

#[derive(Serialize)]
struct RefineSummary {
    converged: bool,
    iterations: usize,
    residual: f64,
    start: Vec<f64>,
    message: String,
}

impl From<&RefineOutcome> for RefineSummary {
    fn from(r: &RefineOutcome) -> Self {
        Self {
            converged: r.converged,
            iterations: r.iterations,
            residual: r.residual,
            start: r.start.clone(),
            message: r.message.clone(),
        }
    }
}

/// A single OGC from `find.start` (and `find.end` if given).
pub fn find_ogc(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let find = cfg.find.as_ref().ok_or_else(|| CliError::Config("find-ogc needs a `find` section".into()))?;
    let Setup { metric, boundary, .. } = cfg.setup()?;
    let a = boundary.boundary_point(&vector(&find.start))?;
    let shoot = ogc_core::shooting::ShootConfig { nodes: find.nodes, ..cfg.solver.shoot.clone() };
    let tol = &cfg.solver.tolerances;

    let mut found: Option<(DiscretePath, CriticalReport, Option<ShotCheck>)> = None;
    let mut flow_summary = None;
    let mut refine_summary = None;
    let mut method = "shooting";
    let mut end = None;
    let mut refine_from = a.clone();
    if let Some(e) = &find.end {
        method = "descent";
        let e = boundary.boundary_point(&vector(e))?;
        end = Some(e.iter().copied().collect());
        let x0 = chord(&boundary, &a, &e, find.nodes)?;
        let FlowOutcome { path, trace, status } = flow(&x0, &boundary, &metric, &cfg.solver.flow)?;
        flow_summary =
            Some(FlowSummary { status, iterations: trace.len(), energy: ogc_core::pathspace::energy(&metric, &path) });
        let report = verify_critical(&path, &boundary, &metric, tol)?;
        refine_from = path.start().clone();
        if report.is_ogc() {
            found = Some((path, report, None));
        } else {
            method = "descent+shooting";
        }
    }
    if found.is_none() {
        let r = ogc_refine(&metric, &boundary, &refine_from, &shoot)?;
        refine_summary = Some(RefineSummary::from(&r));
        if let (true, Some(path)) = (r.converged, r.path()) {
            let report = verify_critical(path, &boundary, &metric, tol)?;
            if report.is_ogc() {
                found = Some((path.clone(), report, None));
            } else if is_jacobi(cfg) {
                let start = vector(&r.start);
                let check = verify_shot(&metric, &boundary, &start, &shoot, tol, boundary_diameter(&boundary)?)?;
                if check.passed {
                    found = Some((path.clone(), report, Some(check)));
                }
            }
        }
    }

    let mut art = Artifacts::new(cfg)?;
    let file = FindFile {
        name: &cfg.name,
        found: found.is_some(),
        method,
        start: a.iter().copied().collect(),
        end,
        flow: flow_summary,
        refine: refine_summary,
        report: found.as_ref().map(|f| f.1.clone()),
        shot_check: found.as_ref().and_then(|f| f.2.clone()),
    };
    art.json("ogc.json", &file)?;
    match &found {
        Some((path, report, _)) => {
            art.text("ogc.csv", &path.to_csv())?;
            if boundary.dim() == 2 {
                art.text("ogc.svg", &render_svg(&boundary, &[path])?)?;
            }
            art.line(format!(
                "OGC found by {method}: energy {}, endpoint angles {:?}",
                report.energy, report.endpoint_angles
            ));
        }
        None => art.line(format!("no verified OGC from this start ({method})")),
    }
    Ok(art.finish())
}

fn paths_csv(paths: &[&DiscretePath]) -> String {
    let dim = paths.first().map(|p| p.dim()).unwrap_or(2);
    let mut out = String::from("ogc,node");
    for j in 0..dim {
        let _ = write!(out, ",x{j}");
    }
    out.push('\n');
    for (k, p) in paths.iter().enumerate() {
        for (i, node) in p.nodes().iter().enumerate() {
            let _ = write!(out, "{k},{i}");
            for c in node.iter() {
                let _ = write!(out, ",{c:.16e}");
            }
            out.push('\n');
        }
    }
    out
}

/// Multistart catalog of distinct OGCs.
pub fn multiplicity(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let Setup { metric, boundary, .. } = cfg.setup()?;
    let ms = MultistartConfig { shot_fallback: is_jacobi(cfg), ..cfg.multistart_config() };
    let report = multistart(&metric, &boundary, &ms)?;
    let mut art = Artifacts::new(cfg)?;
    art.text("catalog.csv", &report.catalog.summary_csv())?;
    let paths: Vec<&DiscretePath> = report.catalog.entries.iter().map(|e| &e.path).collect();
    art.text("paths.csv", &paths_csv(&paths))?;
    let mut starts = String::from("index,i,j,chord_energy,outcome\n");
    for s in &report.starts {
        let outcome = serde_json::to_value(s.outcome).map_err(|e| CliError::Runtime(e.to_string()))?;
        let _ = writeln!(
            starts,
            "{},{},{},{:.16e},{}",
            s.index,
            s.pair.0,
            s.pair.1,
            s.chord_energy,
            outcome.as_str().unwrap_or_default()
        );
    }
    art.text("starts.csv", &starts)?;
    art.json("catalog.json", &report)?;
    if boundary.dim() == 2 {
        art.text("ogcs.svg", &render_svg(&boundary, &paths)?)?;
    }
    let spectrum: Vec<String> = report.catalog.spectrum().iter().map(|e| format!("{e:.6}")).collect();
    art.line(format!(
        "{} distinct OGCs (N = {}) from {} starts; energies [{}]",
        report.count(),
        report.catalog.target,
        report.starts.len(),
        spectrum.join(", ")
    ));
    if report.catalog.consistency_violations > 0 {
        art.line(format!("{} duplicate energies disagreed", report.catalog.consistency_violations));
    }
    Ok(art.finish())
}

/// Brake orbits of the Lagrangian problem.
pub fn brake(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let Setup { lagrangian, .. } = cfg.setup()?;
    let Some((l, domain)) = lagrangian else {
        return Err(CliError::Config("brake needs a lagrangian problem".into()));
    };
    let cat = brake_multiplicity(&l, &domain, &cfg.multistart_config(), &cfg.brake)?;
    let mut art = Artifacts::new(cfg)?;
    art.text("brake_summary.csv", &cat.summary_csv())?;
    for (i, e) in cat.entries.iter().enumerate() {
        art.text(&format!("orbit_{i}.csv"), &e.orbit.to_csv())?;
    }
    art.json("brake.json", &cat)?;
    if l.dim() == 2 {
        let orbits: Vec<_> = cat.entries.iter().map(|e| &e.orbit).collect();
        art.text("orbits.svg", &render_orbits_svg(&l, &orbits)?)?;
    }
    art.line(format!(
        "{} distinct brake orbits (N = {}) from {} OGCs, {} conversions failed",
        cat.count(),
        cat.target,
        cat.ogcs.count(),
        cat.failures.len()
    ));
    for (i, e) in cat.entries.iter().enumerate() {
        art.line(format!(
            "  orbit {i}: half-period {:.9}, deviation {:.3e}, energy residual {:.3e}",
            e.report.half_period, e.report.deviation, e.report.energy_residual
        ));
    }
    Ok(art.finish())
}

#[derive(Serialize)]
struct TransversalityFile {
    rows: Vec<DemoRow>,
    lemma: LemmaSweep,
    probe_kept: usize,
    probe_count: usize,
    probe_scale: f64,
    seed: u64,
}

/// Demonstration table, random lemma sweep and the perturbation probe.
pub fn transversality_demo(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let m = MetricField::euclidean(3);
    let rows = vec![demo_row(&m, &sphere_plane())?, demo_row(&m, &sphere_cylinder())?];
    let t = &cfg.transversality;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lemma = lemma_sweep(t.lemma_instances, &mut rng)?;
    let probe_kept = stability_probe(&sphere_cylinder(), t.probe_scale, t.probe_count, &mut rng)?;

    let mut art = Artifacts::new(cfg)?;
    let mut csv = String::from("instance,branch,criterion,family,brute\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.instance,
            r.branch.as_str(),
            r.criterion.as_str(),
            r.family.as_str(),
            r.brute
        );
    }
    art.text("transversality.csv", &csv)?;
    art.json(
        "transversality.json",
        &TransversalityFile {
            rows: rows.clone(),
            lemma,
            probe_kept,
            probe_count: t.probe_count,
            probe_scale: t.probe_scale,
            seed: cfg.seed,
        },
    )?;
    art.line(format!("{:<16} {:<8} {:<16} {:<16} {}", "instance", "branch", "criterion", "family", "brute"));
    for r in &rows {
        art.line(format!(
            "{:<16} {:<8} {:<16} {:<16} {}",
            r.instance,
            r.branch.as_str(),
            r.criterion.as_str(),
            r.family.as_str(),
            r.brute
        ));
    }
    art.line(format!(
        "lemma: {}/{} instances agree ({} transversal)",
        lemma.agreements, lemma.instances, lemma.transversal
    ));
    art.line(format!("perturbation probe: {probe_kept}/{} kept a transversal O-T point", t.probe_count));
    Ok(art.finish())
}
