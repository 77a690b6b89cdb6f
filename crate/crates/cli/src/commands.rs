use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use qdtree::clifford::{clifford_flow, CliffordState};
use qdtree::coarse::{
    coarse_deficit, coarse_evolve, coarse_purity, moment_predictions, spin_moments, tau_resolved_purity,
    DEFAULT_TABLE_CAP,
};
use qdtree::criticality::{
    collapse_curve, collapse_spread, estimate_jd, lambda_d_point, redundancy_empirical, redundancy_exponent, JdConfig,
};
use qdtree::exact::{ExactConfig, DEFAULT_PEAK_CAP};
use qdtree::io::{
    observable_row, parse_list, provenance, write_clifford, write_figure, write_histogram, write_snapshot,
    write_triple, Config, RunMetadata, SnapshotHeader, OBSERVABLE_COLUMNS,
};
use qdtree::observables::{encoding_eigenvalue, linear_fit, redundancy_prediction, window_average};
use qdtree::oracle::certification_matrix;
use qdtree::run::{self, record, Engine, EngineKind};
use qdtree::{ModelParams, QdError, QdResult, Variant, VERSION};
use rayon::prelude::*;
use serde_json::json;

pub struct Ctx {
    pub cfg: Config,
    pub out: PathBuf,
    pub name: Option<String>,
}

impl Ctx {
    fn name(&self, default: &str) -> String {
        self.name.clone().unwrap_or_else(|| default.to_string())
    }

    fn create(&self, file: &str) -> QdResult<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.out.join(file))?))
    }

    fn append_json(&self, file: &str, line: &str) -> QdResult<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(self.out.join(file))?;
        writeln!(f, "{line}")?;
        Ok(())
    }

    fn seed(&self) -> QdResult<u64> {
        self.cfg.or("seed", 1u64)
    }

    fn prov(&self) -> QdResult<String> {
        Ok(provenance(&self.cfg.hash(), self.seed()?))
    }
}

fn default_engine(variant: Variant) -> EngineKind {
    match variant {
        Variant::Random => EngineKind::Biased,
        _ => EngineKind::Compressed,
    }
}

/// Engine from `engine`, `N` and `M`; `fallback` applies when `engine` is unset.
fn engine(cfg: &Config, variant: Variant, fallback: EngineKind) -> QdResult<Engine> {
    let kind = cfg.parsed::<EngineKind>("engine")?.unwrap_or(fallback);
    let e = match kind {
        EngineKind::Exact => Engine::Exact(ExactConfig {
            peak_cap: cfg.or("peak_cap", DEFAULT_PEAK_CAP)?,
            ..ExactConfig::default()
        }),
        EngineKind::Compressed => Engine::compressed(cfg.or("N", 100usize)?),
        EngineKind::Biased => Engine::biased(cfg.or("M", 100_000usize)?),
    };
    if e.size() == 0 && kind != EngineKind::Exact {
        return Err(QdError::InvalidParam("sample size must be positive".into()));
    }
    e.check(variant)?;
    Ok(e)
}

fn variant(cfg: &Config) -> QdResult<Variant> {
    cfg.require("variant")
}

fn list_usize(cfg: &Config, key: &str, default: Vec<usize>) -> QdResult<Vec<usize>> {
    match cfg.list_f64(key)? {
        None => Ok(default),
        Some(v) => v
            .into_iter()
            .map(|x| {
                if x >= 0.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(QdError::Parse(format!("{key}: expected non-negative integers, got {x}")))
                }
            })
            .collect(),
    }
}

pub fn evolve(ctx: &Ctx) -> QdResult<()> {
    let cfg = &ctx.cfg;
    let variant = variant(cfg)?;
    let params = ModelParams::new(variant, cfg.require("J")?, cfg.or("k", 2usize)?)?;
    let engine = engine(cfg, variant, EngineKind::Exact)?;
    let t_max: usize = cfg.require("t")?;
    let seed = ctx.seed()?;
    let snap_every: Option<usize> = cfg.parsed("snapshot_every")?;
    let name = ctx.name("evolve");
    let prov = ctx.prov()?;
    let hash = cfg.hash();
    let start = Instant::now();

    let mut csv = ctx.create(&format!("{name}.csv"))?;
    writeln!(csv, "{prov}")?;
    writeln!(csv, "{OBSERVABLE_COLUMNS}")?;
    let lc = encoding_eigenvalue(params.j());
    let mut io_err: QdResult<()> = Ok(());
    let last = run::evolve(&params, &engine, t_max, seed, |e| {
        if io_err.is_err() {
            return;
        }
        io_err = (|| {
            let rec = record(e, &params);
            writeln!(csv, "{}", observable_row(variant, params.j(), params.k(), engine.size(), seed, &rec, lc))?;
            let due = match snap_every {
                Some(0) => e.t == t_max,
                Some(s) => e.t % s == 0 || e.t == t_max,
                None => false,
            };
            if due {
                let header = SnapshotHeader { t: e.t, variant, j: params.j(), k: params.k() };
                let mut f = ctx.create(&format!("{name}_t{}.snap", e.t))?;
                write_snapshot(&mut f, &header, e, &hash, seed)?;
            }
            Ok(())
        })();
    })?;
    io_err?;
    csv.flush()?;
    if cfg.or("histogram", false)? {
        let mut f = ctx.create(&format!("{name}_hist.csv"))?;
        write_histogram(&mut f, &last, &prov)?;
    }
    let meta = RunMetadata {
        tool: "qdtree".into(),
        version: VERSION.into(),
        config_hash: hash,
        seed,
        variant,
        j: params.j(),
        k: params.k(),
        engine: format!("{:?}", engine.kind()).to_lowercase(),
        size: engine.size(),
        t_max,
        dropped_mass: last.dropped,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    ctx.append_json(&format!("{name}.jsonl"), &meta.to_json_line()?)?;
    println!("t={} purity={:.12e} peaks={}", last.t, qdtree::observables::purity(&last), last.len());
    Ok(())
}

/// Grid of (J, k); point `i` uses seed `seed + i`. Points with a `.done`
/// marker are skipped on rerun.
pub fn sweep(ctx: &Ctx) -> QdResult<()> {
    let cfg = &ctx.cfg;
    let variant = variant(cfg)?;
    let js = cfg.list_f64("J")?.unwrap_or_default();
    let ks = list_usize(cfg, "k", vec![2])?;
    let t_max: usize = cfg.require("t")?;
    let times = list_usize(cfg, "times", vec![t_max])?;
    let engine = engine(cfg, variant, EngineKind::Exact)?;
    let seed = ctx.seed()?;
    let jobs: usize = cfg.or("jobs", 1usize)?;
    let name = ctx.name("sweep");
    let dir = ctx.out.join(format!("{name}.points"));
    fs::create_dir_all(&dir)?;

    let grid: Vec<(usize, f64, usize)> = js
        .iter()
        .flat_map(|&j| ks.iter().map(move |&k| (j, k)))
        .enumerate()
        .map(|(i, (j, k))| (i, j, k))
        .collect();
    let id = |j: f64, k: usize| format!("J{j:.6}_k{k}");
    let lc_row = |j: f64| encoding_eigenvalue(j);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| QdError::InvalidParam(format!("thread pool: {e}")))?;
    let skipped: usize = pool.install(|| {
        grid.par_iter()
            .map(|&(i, j, k)| {
                let pid = id(j, k);
                if dir.join(format!("{pid}.done")).exists() {
                    return 1;
                }
                let point_seed = seed.wrapping_add(i as u64);
                let res = (|| -> QdResult<Vec<String>> {
                    let params = ModelParams::new(variant, j, k)?;
                    let mut rows = Vec::new();
                    run::evolve(&params, &engine, t_max, point_seed, |e| {
                        if times.contains(&e.t) {
                            let rec = record(e, &params);
                            rows.push(observable_row(variant, j, k, engine.size(), point_seed, &rec, lc_row(j)));
                        }
                    })?;
                    Ok(rows)
                })();
                let _ = fs::remove_file(dir.join(format!("{pid}.failed")));
                let written = match res {
                    Ok(rows) => fs::write(dir.join(format!("{pid}.csv")), rows.join("\n") + "\n")
                        .and_then(|_| fs::write(dir.join(format!("{pid}.done")), "")),
                    Err(e) => fs::write(dir.join(format!("{pid}.failed")), e.to_string()),
                };
                if let Err(e) = written {
                    eprintln!("warning: could not record point {pid}: {e}");
                }
                0
            })
            .sum()
    });

    let mut csv = ctx.create(&format!("{name}.csv"))?;
    writeln!(csv, "{}", ctx.prov()?)?;
    writeln!(csv, "{OBSERVABLE_COLUMNS}")?;
    let mut failures = Vec::new();
    for &(_, j, k) in &grid {
        let pid = id(j, k);
        if dir.join(format!("{pid}.done")).exists() {
            csv.write_all(&fs::read(dir.join(format!("{pid}.csv")))?)?;
        } else {
            let msg = fs::read_to_string(dir.join(format!("{pid}.failed"))).unwrap_or_default();
            failures.push(format!("{pid}: {msg}"));
        }
    }
    csv.flush()?;
    println!("points={} resumed={} failed={}", grid.len(), skipped, failures.len());
    if failures.is_empty() {
        let _ = fs::remove_file(ctx.out.join(format!("{name}.failures")));
        Ok(())
    } else {
        fs::write(ctx.out.join(format!("{name}.failures")), failures.join("\n") + "\n")?;
        Err(QdError::CheckFailed(format!("{} sweep points failed", failures.len())))
    }
}

pub fn criticality(ctx: &Ctx) -> QdResult<()> {
    match ctx.cfg.or("mode", "jd".to_string())?.as_str() {
        "jd" => crit_jd(ctx),
        "epsilon" => crit_epsilon(ctx),
        "collapse" => crit_collapse(ctx),
        other => Err(QdError::InvalidParam(format!("unknown criticality mode '{other}'"))),
    }
}

fn seeds(ctx: &Ctx) -> QdResult<Vec<u64>> {
    let n: u64 = ctx.cfg.or("seeds", 4u64)?;
    let s = ctx.seed()?;
    Ok((0..n.max(1)).map(|i| s + i).collect())
}

fn crit_jd(ctx: &Ctx) -> QdResult<()> {
    let cfg = &ctx.cfg;
    let variant = variant(cfg)?;
    let engine = engine(cfg, variant, default_engine(variant))?;
    let default_t = if variant == Variant::Random { 10 } else { 9 };
    let mut jc = JdConfig::new(variant, engine, cfg.or("t_converge", default_t)?);
    jc.seeds = seeds(ctx)?;
    jc.tol = cfg.or("tol", 2e-3)?;
    let b = cfg.list_f64("bracket")?.unwrap_or_else(|| vec![0.3, 0.45]);
    if b.len() != 2 {
        return Err(QdError::InvalidParam("bracket needs two values".into()));
    }
    let est = estimate_jd(&jc, (b[0], b[1]))?;
    let name = ctx.name("criticality");
    let mut f = ctx.create(&format!("{name}_lambda.csv"))?;
    writeln!(f, "{}", ctx.prov()?)?;
    writeln!(f, "J,lambda_d,stderr,drift,r2_gap,converged")?;
    for p in &est.curve {
        writeln!(f, "{},{:.12e},{:.3e},{:.3e},{:.3e},{}", p.j, p.lambda_d, p.stderr, p.drift, p.r2_gap, p.converged)?;
    }
    let report = json!({"variant": variant, "jd": est.jd, "converged": est.converged, "points": est.curve.len()});
    println!("{report}");
    ctx.append_json(&format!("{name}.jsonl"), &report.to_string())?;
    Ok(())
}

fn crit_epsilon(ctx: &Ctx) -> QdResult<()> {
    let cfg = &ctx.cfg;
    let eps = cfg.list_f64("eps")?.unwrap_or_else(|| vec![0.005, 0.01, 0.02]);
    let k: usize = cfg.or("k", 6)?;
    let t: usize = cfg.or("t", 160)?;
    let engine = engine(cfg, Variant::Random, EngineKind::Biased)?;
    let seed = ctx.seed()?;
    let name = ctx.name("epsilon");
    let mut f = ctx.create(&format!("{name}.csv"))?;
    writeln!(f, "{}", ctx.prov()?)?;
    writeln!(f, "eps,J,r2_window,8eps,ratio")?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &e in &eps {
        if !(e > 0.0 && e < 0.5) {
            return Err(QdError::InvalidParam(format!("eps must lie in (0, 1/2), got {e}")));
        }
        let j = (0.5 + e).sqrt().acos() / std::f64::consts::FRAC_PI_2;
        let params = ModelParams::new(Variant::Random, j, k)?;
        let recs = run::evolve_records(&params, &engine, t, seed)?;
        let series: Vec<(usize, f64)> = recs.iter().map(|r| (r.t, r.purity)).collect();
        let r2 = window_average(&series, t).unwrap_or(f64::NAN);
        writeln!(f, "{e},{j:.12},{r2:.12e},{:.12e},{:.6}", 8.0 * e, r2 / (8.0 * e))?;
        xs.push(8.0 * e);
        ys.push(r2);
    }
    let slope = if xs.len() >= 2 { linear_fit(&xs, &ys).0 } else { f64::NAN };
    let report = json!({"eps": eps, "r2": ys, "slope": slope});
    println!("{report}");
    ctx.append_json(&format!("{name}.jsonl"), &report.to_string())?;
    Ok(())
}

fn crit_collapse(ctx: &Ctx) -> QdResult<()> {
    let cfg = &ctx.cfg;
    let variant: Variant = cfg.or("variant", Variant::Deterministic)?;
    let engine = engine(cfg, variant, default_engine(variant))?;
    let js = cfg.list_f64("J")?.unwrap_or_else(|| parse_list("0.27:0.43:0.01").unwrap());
    let times = list_usize(cfg, "times", vec![7, 8, 9, 10])?;
    let k: usize = cfg.or("k", 2)?;
    let jd: f64 = cfg.or("jd", 0.35)?;
    let seeds = seeds(ctx)?;
    let t_max = times.iter().copied().max().unwrap_or(0);
    let mut data = vec![Vec::new(); times.len()];
    for &j in &js {
        let params = ModelParams::new(variant, j, k)?;
        let per_seed: Vec<QdResult<Vec<f64>>> = seeds
            .par_iter()
            .map(|&s| {
                let recs = run::evolve_records(&params, &engine, t_max, s)?;
                Ok(times.iter().map(|&t| recs[t].purity).collect())
            })
            .collect();
        let per_seed = per_seed.into_iter().collect::<QdResult<Vec<_>>>()?;
        for (i, d) in data.iter_mut().enumerate() {
            d.push((j, per_seed.iter().map(|v| v[i]).sum::<f64>() / per_seed.len() as f64));
        }
    }
    let name = ctx.name("collapse");
    let mut f = ctx.create(&format!("{name}.csv"))?;
    writeln!(f, "{}", ctx.prov()?)?;
    writeln!(f, "t,J,purity,x,y")?;
    let mut curves = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        for &(j, r2) in &data[i] {
            writeln!(f, "{t},{j},{r2:.12e},{:.12e},{:.12e}", (j - jd) * t as f64, (1.0 - r2) * t as f64)?;
        }
        curves.push(collapse_curve(t, &data[i], jd));
    }
    let w: f64 = cfg.or("window", 0.5)?;
    let spread = collapse_spread(&curves, -w, w, 41);
    let report = json!({"jd": jd, "window": w, "spread": spread});
    println!("{report}");
    ctx.append_json(&format!("{name}.jsonl"), &report.to_string())?;
    Ok(())
}

pub fn coarse(ctx: &Ctx) -> QdResult<()> {
    let cfg = &ctx.cfg;
    let j: f64 = cfg.require("J")?;
    let k: usize = cfg.or("k", 2)?;
    let t: usize = cfg.require("t")?;
    let tau: usize = cfg.or("tau", 0)?;
    let params = ModelParams::new(Variant::Deterministic, j, k)?;
    let triples = coarse_evolve(&params, t);
    let prov = ctx.prov()?;
    let name = ctx.name("coarse");
    let last = triples.last().unwrap();
    write_triple(&mut ctx.create(&format!("{name}_triple.csv"))?, last, &prov)?;
    write_figure(&mut ctx.create(&format!("{name}_figure.csv"))?, last, &prov)?;
    let mut f = ctx.create(&format!("{name}_moments.csv"))?;
    writeln!(f, "{prov}")?;
    writeln!(f, "t,purity,deficit,M2,M2_predicted,Mu,Mu_predicted,skewness,excess_kurtosis")?;
    for tr in &triples {
        let m = spin_moments(tr);
        let pred = moment_predictions(j, k, tr.t);
        writeln!(
            f,
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.6e},{:.6e}",
            tr.t,
            coarse_purity(tr).1,
            coarse_deficit(tr),
            m.m2,
            pred.m2,
            m.mu,
            pred.mu,
            m.skewness,
            m.excess_kurtosis
        )?;
    }
    f.flush()?;
    let mut report = json!({"J": j, "k": k, "t": t, "purity": coarse_purity(last).1, "deficit": coarse_deficit(last)});
    if tau > 0 {
        let (r2, def) = tau_resolved_purity(&params, t, tau, cfg.or("table_cap", DEFAULT_TABLE_CAP)?)?;
        report["tau"] = json!(tau);
        report["tau_purity"] = json!(r2);
        report["tau_deficit"] = json!(def);
    }
    println!("{report}");
    Ok(())
}

pub fn clifford(ctx: &Ctx) -> QdResult<()> {
    let cfg = &ctx.cfg;
    let j: f64 = cfg.require("J")?;
    let s0 = CliffordState::new(cfg.or("pi_z", 0.5)?, cfg.or("pi_x", 0.0)?)?;
    let flow = clifford_flow(s0, j, cfg.or("t_max", 1000)?)?;
    let name = ctx.name("clifford");
    write_clifford(&mut ctx.create(&format!("{name}.csv"))?, &flow.trajectory, &ctx.prov()?)?;
    let last = flow.last();
    let report = json!({
        "J": j,
        "steps": flow.trajectory.len() - 1,
        "converged": flow.converged,
        "limit": flow.limit,
        "pi_z": last.pi_z,
        "pi_x": last.pi_x,
        "sum": last.purity(),
    });
    println!("{report}");
    Ok(())
}

pub fn oracle_check(ctx: &Ctx) -> QdResult<()> {
    let samples: usize = ctx.cfg.or("samples", 200)?;
    let cases = certification_matrix(samples, ctx.seed()?)?;
    let name = ctx.name("oracle");
    let mut f = ctx.create(&format!("{name}.jsonl"))?;
    let mut failed = 0;
    for c in &cases {
        let line = json!({
            "variant": c.variant,
            "J": c.j,
            "t": c.t,
            "k": c.k,
            "realizations": c.realizations,
            "max_deviation": c.comparison.max_error(),
            "isometry_error": c.isometry_error,
            "completeness_error": c.completeness_error,
            "pass": c.pass,
        });
        println!("{line}");
        writeln!(f, "{line}")?;
        failed += usize::from(!c.pass);
    }
    f.flush()?;
    if failed > 0 {
        return Err(QdError::CheckFailed(format!("{failed} of {} oracle cases failed", cases.len())));
    }
    Ok(())
}

pub fn redundancy(ctx: &Ctx) -> QdResult<()> {
    let cfg = &ctx.cfg;
    let variant: Variant = cfg.or("variant", Variant::Random)?;
    let j: f64 = cfg.require("J")?;
    let delta: f64 = cfg.or("delta", 0.2)?;
    let ns = list_usize(cfg, "n_list", (12..=18).collect())?;
    let engine = engine(cfg, variant, default_engine(variant))?;
    let seed = ctx.seed()?;
    let lambda_d = match cfg.parsed::<f64>("lambda_d")? {
        Some(l) => l,
        None => {
            let e = if engine.kind() == EngineKind::Exact { Engine::biased(100_000) } else { engine };
            let mut jc = JdConfig::new(variant, e, if variant == Variant::Random { 10 } else { 9 });
            jc.seeds = seeds(ctx)?;
            lambda_d_point(&jc, j)?.lambda_d
        }
    };
    let name = ctx.name("redundancy");
    let mut f = ctx.create(&format!("{name}.csv"))?;
    writeln!(f, "{}", ctx.prov()?)?;
    writeln!(f, "n,k_star,R_empirical,R_analytic")?;
    let mut scans = Vec::new();
    for &n in &ns {
        let scan = redundancy_empirical(variant, j, delta, n, &engine, seed)?;
        let analytic = redundancy_prediction(j, delta, (n as f64).exp2(), lambda_d)?;
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.6e}")).unwrap_or_default();
        writeln!(f, "{n},{},{},{analytic:.6e}", opt(scan.k_star), opt(scan.redundancy))?;
        scans.push(scan);
    }
    f.flush()?;
    let analytic_exponent = encoding_eigenvalue(j).ln() / std::f64::consts::LN_2;
    let report = json!({
        "J": j,
        "delta": delta,
        "lambda_d": lambda_d,
        "exponent_empirical": redundancy_exponent(&scans),
        "exponent_analytic": analytic_exponent,
    });
    println!("{report}");
    Ok(())
}
