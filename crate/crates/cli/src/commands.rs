use crate::output::{read_envelope, Outputs, Provenance};
use crate::{Cli, Command, DataArgs};
use maxstable_abc::clikelihood::{clic_at, mcle_fit, ClicResult, McleFit};
use maxstable_abc::fpstep::FpFit;
use maxstable_abc::io::{align_sites, read_maxima_file, read_sites_file, write_maxima, Maxima};
use maxstable_abc::margins::{fit_margins, gumbel_ks, GevSiteReport, ScaleTag};
use maxstable_abc::models::{ModelId, ParamVector};
use maxstable_abc::pipeline::{build_design, holdout_set, run_abc, streams, train, AnalysisConfig};
use maxstable_abc::simulate::Simulator;
use maxstable_abc::smcabc::{
    extended_f64, posterior_model_probs, posterior_param_summary, predictive_check, Particle, ParamSummaryRow,
    PredictiveSource,
};
use maxstable_abc::spatial::SiteSet;
use maxstable_abc::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fmt::Write as _;
use std::path::PathBuf;

/// Final particle set as written by `abc-run`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ParticleFile {
    pub models: Vec<ModelId>,
    #[serde(with = "extended_f64")]
    pub eps: f64,
    #[serde(with = "extended_f64")]
    pub init_eps: f64,
    pub n_invalid_init: usize,
    pub particles: Vec<Particle>,
}

#[derive(Debug, Serialize, Deserialize)]
struct McleEntry {
    model: ModelId,
    fit: Option<McleFit>,
    clic: Option<ClicResult>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct ModelTable {
    model: ModelId,
    rows: Vec<ParamSummaryRow>,
}

fn load_config(cli: &Cli) -> Result<AnalysisConfig> {
    let mut cfg = match &cli.config {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)?,
        None => AnalysisConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| Error::InvalidInput(format!("--{name} is required (flag or configuration)")))
}

fn load_data(args: &DataArgs, cfg: &AnalysisConfig) -> Result<(SiteSet, Maxima)> {
    let sites = read_sites_file(&require(&args.sites, &cfg.sites, "sites")?)?;
    let maxima = read_maxima_file(&require(&args.maxima, &cfg.maxima, "maxima")?, cfg.maxima_scale)?;
    if maxima.data.scale != ScaleTag::UnitFrechet {
        return Err(Error::InvalidInput("maxima must be on the unit Fréchet scale; run fit-margins first".into()));
    }
    let sites = align_sites(&sites, &maxima.data)?;
    Ok((sites, maxima))
}

fn matrix_csv(models: &[ModelId], m: &[Vec<f64>]) -> String {
    let mut s = String::from("true_model");
    for k in models {
        let _ = write!(s, ",{k}");
    }
    s.push('\n');
    for (k, row) in models.iter().zip(m) {
        let _ = write!(s, "{k}");
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let cfg_json = serde_json::to_string(&cfg)?;
    let name = match &cli.command {
        Command::Simulate { .. } => "simulate",
        Command::FitMargins { .. } => "fit-margins",
        Command::Mcle { .. } => "mcle",
        Command::FpTrain { .. } => "fp-train",
        Command::AbcRun { .. } => "abc-run",
        Command::Report { .. } => "report",
        Command::CheckPredictive { .. } => "check-predictive",
    };
    let mut out = Outputs::new(&cli.out_dir, Provenance::new(name, cfg.seed, &cfg_json))?;
    match &cli.command {
        Command::Simulate { model, lambda, kappa, alpha, ratio, nu, sites, reps, output } => {
            let params = ParamVector::new(*model, *lambda, *kappa, *alpha, *ratio, *nu)?;
            let sites = read_sites_file(sites)?;
            let mut rng = cfg.rng().child(streams::SIMULATE);
            let data = Simulator::new(*model, &params, &sites)?.dataset(&sites.ids, *reps, &mut rng)?;
            let years: Vec<String> = (1..=*reps).map(|y| y.to_string()).collect();
            let mut buf = Vec::new();
            write_maxima(&mut buf, &years, &data)?;
            out.csv(
                output,
                &String::from_utf8(buf).expect("csv output is utf-8"),
                json!({ "model": model, "params": params, "reps": reps, "sites": sites.ids }),
            )?;
        }
        Command::FitMargins { maxima, identity } => {
            let scale = if *identity { ScaleTag::UnitFrechet } else { ScaleTag::RawGev };
            let m = read_maxima_file(maxima, scale)?;
            let (data, report) = if *identity {
                let report: Vec<GevSiteReport> = (0..m.data.n_sites())
                    .map(|j| {
                        let (d, p) = gumbel_ks(&m.data.column(j));
                        GevSiteReport { id: m.data.site_ids[j].clone(), mu: 1.0, sigma: 1.0, xi: 1.0, ks_d: d, ks_p: p }
                    })
                    .collect();
                (m.data.clone(), report)
            } else {
                fit_margins(&m.data)?
            };
            let mut buf = Vec::new();
            write_maxima(&mut buf, &m.years, &data)?;
            out.csv("frechet_maxima.csv", &String::from_utf8(buf).expect("utf-8"), json!({ "identity": identity }))?;
            out.json("gev_report.json", &report)?;
        }
        Command::Mcle { data, clic } => {
            let (sites, maxima) = load_data(data, &cfg)?;
            let base = cfg.rng().child(streams::MCLE);
            let mut entries = Vec::new();
            for &m in &cfg.models {
                let mut rng = base.child(m.code() as u64);
                let entry = match mcle_fit(m, &maxima.data, &sites, &cfg.prior, None, &cfg.mcle, &mut rng) {
                    Ok(f) => {
                        let (c, err) = if *clic {
                            match clic_at(m, &f.params, &maxima.data, &sites, None) {
                                Ok(c) => (Some(c), None),
                                Err(e) => (None, Some(e.to_string())),
                            }
                        } else {
                            (None, None)
                        };
                        McleEntry { model: m, fit: Some(f), clic: c, error: err }
                    }
                    Err(e) => McleEntry { model: m, fit: None, clic: None, error: Some(e.to_string()) },
                };
                entries.push(entry);
            }
            out.json("mcle_report.json", &entries)?;
            if entries.iter().any(|e| e.fit.is_none()) {
                return Err(Error::NumericalAbort("composite likelihood fit failed for at least one model".into()));
            }
        }
        Command::FpTrain { data, holdout } => {
            let (sites, maxima) = load_data(data, &cfg)?;
            let rng = cfg.rng();
            let (design, fits) = build_design(&sites, &maxima.data, &cfg, &rng)?;
            out.json("mcle_report.json", &fits)?;
            let (fit, ts) = train(&sites, maxima.data.n_reps(), &design, &cfg, &rng)?;
            warn_all(&fit.warnings);
            let train_m = fit.average_probability_matrix(&ts.records)?;
            out.csv("training_matrix.csv", &matrix_csv(&fit.models, &train_m), json!({ "records": ts.records.len() }))?;
            let mut dump = String::from("model,lambda,kappa,alpha,ratio,nu");
            for n in &ts.names {
                let _ = write!(dump, ",{n}");
            }
            dump.push('\n');
            for r in &ts.records {
                let p = &r.params;
                let nu = p.nu.map(|v| v.to_string()).unwrap_or_default();
                let _ = write!(dump, "{},{},{},{},{},{nu}", r.model, p.lambda, p.kappa, p.alpha, p.ratio);
                for v in &r.summary {
                    let _ = write!(dump, ",{v}");
                }
                dump.push('\n');
            }
            out.csv("training_set.csv", &dump, json!({ "n_invalid": ts.n_invalid }))?;
            let hm = holdout.unwrap_or(cfg.fp.holdout_m);
            if hm > 0 {
                let mut hcfg = cfg.clone();
                hcfg.fp.holdout_m = hm;
                let hs = holdout_set(&sites, maxima.data.n_reps(), &design, &hcfg, &rng)?;
                let hold = fit.average_probability_matrix(&hs.records)?;
                let max_diff = train_m
                    .iter()
                    .flatten()
                    .zip(hold.iter().flatten())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                out.csv(
                    "holdout_matrix.csv",
                    &matrix_csv(&fit.models, &hold),
                    json!({ "records": hs.records.len(), "max_abs_diff_vs_training": max_diff }),
                )?;
            }
            out.json("fp_fit.json", &fit)?;
        }
        Command::AbcRun { data, fit } => {
            let (sites, maxima) = load_data(data, &cfg)?;
            let fit: FpFit = read_envelope(fit)?.content;
            let design =
                fit.design.clone().ok_or_else(|| Error::InvalidInput("fit file carries no summary design".into()))?;
            let (init, res) = run_abc(&fit, &design, &sites, &maxima.data, &cfg, &cfg.rng())?;
            out.csv("trace.csv", &res.trace.to_csv_string(), json!({ "models": fit.models }))?;
            let file = ParticleFile {
                models: fit.models.clone(),
                eps: res.eps,
                init_eps: init.eps,
                n_invalid_init: init.n_invalid,
                particles: res.particles,
            };
            out.json("particles.json", &file)?;
        }
        Command::Report { particles, data, draws } => {
            let pf: ParticleFile = read_envelope(particles)?.content;
            let probs = posterior_model_probs(&pf.particles, &pf.models);
            let mut table = String::from("model,count,probability\n");
            for (m, p) in pf.models.iter().zip(&probs) {
                let count = pf.particles.iter().filter(|q| q.model == *m).count();
                let _ = writeln!(table, "{m},{count},{p}");
            }
            out.csv("model_probs.csv", &table, json!({ "n_particles": pf.particles.len() }))?;
            let mut notes = Vec::new();
            let mut tables = Vec::new();
            for &m in &pf.models {
                match posterior_param_summary(&pf.particles, m) {
                    Ok(rows) => {
                        let mut s = String::from("parameter,Mean,SD,2.5%,Median,97.5%\n");
                        for r in &rows {
                            let _ = writeln!(s, "{},{},{},{},{},{}", r.name, r.mean, r.sd, r.q025, r.median, r.q975);
                        }
                        out.csv(&format!("params_{m}.csv"), &s, json!({ "model": m }))?;
                        tables.push(ModelTable { model: m, rows });
                    }
                    Err(_) => notes.push(format!("no particles from {m}; parameter table skipped")),
                }
            }
            warn_all(&notes);
            let have_data = data.sites.is_some() || cfg.sites.is_some();
            if have_data {
                let (sites, maxima) = load_data(data, &cfg)?;
                let n = draws.unwrap_or(cfg.predictive_draws);
                let rng = cfg.rng().child(streams::PREDICTIVE);
                let pc = predictive_check(
                    &PredictiveSource::Posterior(&pf.particles),
                    &sites,
                    maxima.data.n_reps(),
                    n,
                    Some(&maxima.data),
                    &rng,
                )?;
                out.csv(
                    "predictive.csv",
                    &pc.to_csv_string(),
                    json!({ "draws": n, "failed": pc.n_failed, "outside_rate": pc.outside_rate() }),
                )?;
            }
            out.json(
                "report.json",
                &json!({ "models": pf.models, "probabilities": probs, "tables": tables, "notes": notes }),
            )?;
        }
        Command::CheckPredictive { particles, data, draws, prior } => {
            let (sites, maxima) = load_data(data, &cfg)?;
            let n = draws.unwrap_or(cfg.predictive_draws);
            let rng = cfg.rng().child(streams::PREDICTIVE);
            let loaded: Vec<Particle>;
            let source = if *prior {
                PredictiveSource::Prior { prior: &cfg.prior, models: &cfg.models }
            } else {
                loaded = read_envelope::<ParticleFile>(particles)?.content.particles;
                PredictiveSource::Posterior(&loaded)
            };
            let pc = predictive_check(&source, &sites, maxima.data.n_reps(), n, Some(&maxima.data), &rng)?;
            let name = if *prior { "prior_predictive.csv" } else { "predictive.csv" };
            out.csv(name, &pc.to_csv_string(), json!({ "draws": n, "failed": pc.n_failed, "prior": prior }))?;
        }
    }
    for p in &out.written {
        println!("{}", p.display());
    }
    Ok(())
}
