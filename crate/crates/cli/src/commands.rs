use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use agpsr::erroranalysis::{linspace, ErrorFunctionCurve};
use agpsr::experiments::{build_problem, derivative_scan, scaling_study, write_scaling_csv, ScalingConfig, ScanConfig};
use agpsr::quantum::ShotModel;
use agpsr::shiftrules::{RuleKind, ShiftRuleSpec};
use agpsr::spectral::{gap_histogram, max_gap_count, GapSet, PseudoGapStrategy};
use agpsr::varianceopt::{estimate_sigma0_sq, full_pipeline, monte_carlo_variance, predict_variance};
use agpsr::vqe::{run_vqe, summarize, VqeConfig, VqeProblem};
use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{ErrorCurveConfig, GapsConfig, MonteCarloConfig, VarianceOptConfig};
use crate::manifest::RunManifest;

/// Shared state for one invocation; everything recorded here ends up in the manifest.
pub struct Run<'a> {
    pub config_path: Option<&'a Path>,
    pub seed: Option<u64>,
    pub out_dir: &'a Path,
    pub manifest: RunManifest,
}

impl Run<'_> {
    /// Reads the config file (or `fallback`), applies flag overrides and echoes the result.
    fn load<T: DeserializeOwned + Serialize>(&mut self, fallback: Option<Value>, overrides: Vec<(&str, Option<Value>)>) -> Result<T> {
        let mut value = match (self.config_path, fallback) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
            }
            (None, Some(v)) => v,
            (None, None) => bail!("--config is required for `{}`", self.manifest.command),
        };
        let Value::Object(map) = &mut value else { bail!("config must be a JSON object") };
        for (key, v) in overrides {
            if let Some(v) = v {
                map.insert(key.to_string(), v);
            }
        }
        self.manifest.config = value.clone();
        let typed: T = serde_json::from_value(value).context("invalid config")?;
        self.manifest.config = serde_json::to_value(&typed)?;
        Ok(typed)
    }

    fn seed_override(&self) -> Option<Value> {
        self.seed.map(Value::from)
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path: PathBuf = self.out_dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.manifest.outputs.push(PathBuf::from(name));
        Ok(BufWriter::new(file))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        std::io::Write::write_all(&mut w, b"\n")?;
        Ok(())
    }
}

fn opt<T: Serialize>(v: Option<T>) -> Option<Value> {
    v.map(|v| serde_json::to_value(v).expect("plain value"))
}

pub fn scan(run: &mut Run, points: Option<usize>, shots: Option<u64>) -> Result<()> {
    let seed = run.seed_override();
    let cfg: ScanConfig = run.load(None, vec![("points", opt(points)), ("shots", opt(shots)), ("seed", seed)])?;
    run.manifest.seed = Some(cfg.seed);
    let res = derivative_scan(&cfg)?;
    res.write_csv(run.create("scan.csv")?)?;
    let methods: Vec<Value> = res
        .methods
        .iter()
        .map(|m| {
            json!({
                "label": m.label,
                "spec": m.spec,
                "condition_estimate": m.condition_estimate,
                "calls_per_point": m.calls_per_point,
                "relative_error": m.relative_error,
            })
        })
        .collect();
    for m in &res.methods {
        log::info!("{}: r = {:.3e} ({} points excluded)", m.label, m.relative_error.r, m.relative_error.excluded);
    }
    run.write_json("scan_summary.json", &json!({ "n_qubits": res.n_qubits, "total_gaps": res.total_gaps, "methods": methods }))
}

pub fn error_curve(run: &mut Run, k: Option<usize>, step: Option<f64>, delta_max: Option<f64>, points: Option<usize>) -> Result<()> {
    let strategy = step.map(|a| PseudoGapStrategy::UniformStep { a });
    let cfg: ErrorCurveConfig = run.load(
        Some(json!({})),
        vec![("K", opt(k)), ("strategy", opt(strategy)), ("delta_max", opt(delta_max)), ("points", opt(points))],
    )?;
    if cfg.points == 0 {
        bail!("error curve needs at least one point");
    }
    if !(cfg.delta_max > cfg.delta_min) {
        bail!("delta range [{}, {}] is empty", cfg.delta_min, cfg.delta_max);
    }
    let gammas = cfg.pseudo_gaps().gammas()?;
    let shifts = cfg.shifts.shifts(&gammas)?;
    // Same acceptance test as a real shift rule on these pseudo-gaps.
    ShiftRuleSpec::new(RuleKind::Agpsr, gammas.clone(), shifts.clone(), ShotModel::exact())?.prepare()?;
    let curve = ErrorFunctionCurve::sample(&gammas, &shifts, &linspace(cfg.delta_min, cfg.delta_max, cfg.points))?;
    curve.write_csv(run.create("error_curve.csv")?)?;
    run.write_json("error_curve.json", &json!({ "K": curve.k, "pseudo_gaps": curve.pseudo_gaps, "shifts": curve.shifts }))
}

pub fn scaling(run: &mut Run, n_min: Option<usize>, n_max: Option<usize>, target: Option<f64>) -> Result<()> {
    let cfg: ScalingConfig = run.load(
        Some(json!({})),
        vec![("n_min", opt(n_min)), ("n_max", opt(n_max)), ("target_r", opt(target))],
    )?;
    let rows = scaling_study(&cfg)?;
    write_scaling_csv(&rows, run.create("scaling.csv")?)?;
    for r in &rows {
        log::info!("N={} S={} minimal K={:?}", r.n_qubits, r.total_gaps, r.min_k);
    }
    run.write_json("scaling.json", &rows)
}

pub fn variance_opt(run: &mut Run, k: Option<usize>, step: Option<f64>, monte_carlo: bool) -> Result<()> {
    let seed = run.seed_override();
    let mut cfg: VarianceOptConfig = run.load(None, vec![("K", opt(k)), ("step_a", opt(step)), ("seed", seed)])?;
    if monte_carlo && cfg.monte_carlo.is_none() {
        cfg.monte_carlo = Some(MonteCarloConfig::default());
        run.manifest.config = serde_json::to_value(&cfg)?;
    }
    run.manifest.seed = Some(cfg.seed);
    let generator = cfg.generator.build()?;
    let pipeline = full_pipeline(&generator, cfg.k, cfg.step_a, cfg.bounds)?;
    let mut report = Map::new();
    report.insert("pipeline".into(), serde_json::to_value(&pipeline)?);
    if let Some(mc) = &cfg.monte_carlo {
        let problem = build_problem(&cfg.generator, &mc.initial_state, &mc.cost)?;
        let sigma0_sq = estimate_sigma0_sq(&problem, mc.x);
        let shots = ShotModel::finite(mc.shots, cfg.seed)?;
        let opt = &pipeline.optimization;
        let mut arms = Map::new();
        for (name, shifts) in [("initial", &opt.initial_shifts), ("optimized", &opt.optimal_shifts)] {
            let spec = ShiftRuleSpec::new(pipeline.spec.kind, pipeline.spec.gaps.clone(), shifts.clone(), shots)?;
            let predicted = predict_variance(&spec, sigma0_sq)?;
            // Same base seed for both arms so the comparison is paired.
            let measured = monte_carlo_variance(&problem, mc.x, &spec, mc.estimates, cfg.seed)?;
            arms.insert(
                name.into(),
                json!({
                    "shifts": shifts,
                    "g": predicted.g_value,
                    "predicted_variance": predicted.sigma_d_sq,
                    "predicted_variance_correlated": predicted.sigma_d_sq_correlated,
                    "measured": measured,
                }),
            );
        }
        report.insert("monte_carlo".into(), json!({ "x": mc.x, "shots": mc.shots, "sigma0_sq": sigma0_sq, "arms": arms }));
    }
    run.write_json("variance_opt.json", &report)
}

pub fn vqe(run: &mut Run, n_qubits: Option<usize>, runs: Option<usize>, iterations: Option<usize>) -> Result<()> {
    let seed = run.seed_override();
    let cfg: VqeConfig = run.load(
        None,
        vec![("n_qubits", opt(n_qubits)), ("runs", opt(runs)), ("iterations", opt(iterations)), ("seed", seed)],
    )?;
    cfg.validate()?;
    run.manifest.seed = Some(cfg.seed);
    let problem = VqeProblem::new(cfg.clone())?;
    let traces = run_vqe(&cfg)?;
    for t in &traces {
        t.write_csv(run.create(&format!("trace_run{:02}.csv", t.run))?)?;
    }
    let summary = summarize(&problem, &traces);
    log::info!("{}: mean final energy {:.6}, savings x{}", summary.method, summary.mean_final_energy, summary.savings_vs_gpsr);
    let finals: Vec<Value> = traces.iter().map(|t| json!({ "run": t.run, "run_seed": t.run_seed, "final_energy": t.final_energy })).collect();
    run.write_json("vqe_summary.json", &json!({ "summary": summary, "runs": finals }))
}

pub fn gaps(run: &mut Run, bins: Option<usize>) -> Result<()> {
    let cfg: GapsConfig = run.load(None, vec![("bins", opt(bins))])?;
    let g = cfg.generator.build()?;
    let gaps = GapSet::of(&g);
    gaps.write_csv(run.create("gaps.csv")?)?;
    let hist = if gaps.is_empty() { None } else { Some(gap_histogram(&gaps, cfg.bins)?) };
    let bound = g.n_qubits().map(|n| max_gap_count(n as u32));
    run.write_json(
        "gaps.json",
        &json!({
            "dimension": g.dim(),
            "total_gaps": gaps.len(),
            "max_possible_gaps": bound,
            "min_gap": gaps.min(),
            "max_gap": gaps.max(),
            "eigenvalues": g.eigenvalues(),
            "histogram": hist,
        }),
    )
}
