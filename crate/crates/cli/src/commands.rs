//! Subcommand implementations; each writes its outputs and a manifest into `cfg.out`.

use crate::config::{load_counts, parse_channel, parse_prior, parse_scheme, RunConfig, Scale, StepSize};
use cptp_hmc::duality::{self, born_probabilities};
use cptp_hmc::family::{family, ChannelFamily};
use cptp_hmc::hmc::{effective_sample_size, write_draws_csv};
use cptp_hmc::linalg::min_eigenvalue;
use cptp_hmc::marginal::{marginal_likelihood, MarginalConfig, Property};
use cptp_hmc::model_select::{assess_criteria, select_models, AssessmentConfig, PriorSamples};
use cptp_hmc::regions::run_regions;
use cptp_hmc::target::{sample_channels, SampleSet, SamplerConfig};
use cptp_hmc::tomo::{self, simulate_counts, CountsData, MleOptions};
use cptp_hmc::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

#[derive(Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
}

pub fn read_manifest(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let m: Manifest = serde_json::from_str(&text)?;
    Ok(m.config)
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let w = self.create(name)?;
        serde_json::to_writer_pretty(w, value)?;
        Ok(())
    }
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)?;
    let start = Instant::now();
    let mut out = Outputs { dir: &cfg.out, files: Vec::new() };
    match cfg.command.as_str() {
        "simulate" => simulate(cfg, &mut out)?,
        "sample" => sample(cfg, &mut out)?,
        "regions" => regions(cfg, &mut out)?,
        "marginal" => marginal(cfg, &mut out)?,
        _ => model_select(cfg, &mut out)?,
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cfg.command.clone(),
        seed: cfg.seed,
        config: cfg.clone(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        outputs: out.files.clone(),
    };
    out.json("manifest.json", &manifest)
}

fn sampler(cfg: &RunConfig, draws: usize) -> SamplerConfig {
    let mut s = SamplerConfig { chains: cfg.chains, ..Default::default() };
    s.hmc.draws = draws;
    s.hmc.seed = cfg.seed;
    s.hmc.burn_in = cfg.burn_in;
    if let StepSize::Value(v) = cfg.step_size {
        s.hmc.step_size = v;
        s.hmc.adapt = false;
    }
    s
}

fn counts_of(cfg: &RunConfig) -> Result<Option<CountsData>> {
    cfg.counts.as_deref().map(load_counts).transpose()
}

fn simulate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let scheme = parse_scheme(&cfg.scheme)?;
    let rho = parse_channel(cfg.channel.as_deref().unwrap_or_default())?;
    if rho.dim() != scheme.dim() {
        return Err(Error::Config(format!("channel has dimension {}, scheme {}", rho.dim(), scheme.dim())));
    }
    let counts = simulate_counts(&rho, &scheme, cfg.copies.unwrap_or(0), cfg.seed)?;
    counts.write_csv(out.create("counts.csv")?)?;
    if cfg.probabilities {
        let p = born_probabilities(&rho, &scheme)?;
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(out.create("probabilities.csv")?);
        for row in p {
            wr.write_record(row.iter().map(|v| v.to_string()))?;
        }
        wr.flush()?;
    }
    println!("total {}", counts.total());
    Ok(())
}

#[derive(Serialize)]
struct Validation {
    checked: usize,
    min_eigenvalue: f64,
    max_tp_defect: f64,
}

fn validate_draws(fam: &dyn ChannelFamily, set: &SampleSet, every: usize) -> Result<Validation> {
    let mut v = Validation { checked: 0, min_eigenvalue: f64::INFINITY, max_tp_defect: 0.0 };
    for x in set.params.iter().step_by(every) {
        let rho = fam.choi(x)?;
        v.checked += 1;
        v.min_eigenvalue = v.min_eigenvalue.min(min_eigenvalue(rho.matrix()));
        v.max_tp_defect = v.max_tp_defect.max(rho.tp_defect());
    }
    if v.min_eigenvalue < -1e-10 || v.max_tp_defect > 1e-10 {
        return Err(Error::Numerical(format!(
            "draw validation failed: min eigenvalue {:.3e}, TP defect {:.3e}",
            v.min_eigenvalue, v.max_tp_defect
        )));
    }
    Ok(v)
}

fn coordinate_ess(set: &SampleSet) -> Vec<f64> {
    let dim = set.params.first().map_or(0, |x| x.len());
    (0..dim)
        .map(|j| {
            let series: Vec<f64> = set.params.iter().map(|x| x[j]).collect();
            if set.step_size.is_none() {
                return series.len() as f64;
            }
            let mut off = 0;
            let mut total = 0.0;
            for &len in &set.chain_lengths {
                total += effective_sample_size(&series[off..off + len]);
                off += len;
            }
            total
        })
        .collect()
}

fn sample(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let scheme = parse_scheme(&cfg.scheme)?;
    let prior = parse_prior(&cfg.prior, &scheme)?;
    let counts = counts_of(cfg)?;
    let fam = family(cfg.family, scheme.dim())?;
    let draws = cfg.draws.unwrap_or(match cfg.scale {
        Scale::Desk => 10_000,
        Scale::Paper => 100_000,
    });
    let s = sampler(cfg, draws);
    let set = sample_channels(fam.as_ref(), &scheme, &prior, counts.as_ref(), None, &s)
        .map_err(|e| Error::Numerical(format!("sampling {}: {e}", cfg.family)))?;
    write_draws_csv(out.create("chain.csv")?, &set.params, &set.log_w)?;
    let validation = validate_draws(fam.as_ref(), &set, 100)?;
    if set.step_size.is_some() && !(0.5..=0.8).contains(&set.acceptance_rate) {
        eprintln!("warning: acceptance rate {:.3} outside [0.5, 0.8]", set.acceptance_rate);
    }
    let ess = coordinate_ess(&set);
    let summary = json!({
        "family": cfg.family,
        "dim": scheme.dim(),
        "draws": set.len(),
        "chains": set.chain_lengths.len(),
        "direct": set.step_size.is_none(),
        "acceptance_rate": set.acceptance_rate,
        "step_size": set.step_size,
        "ess_min": ess.iter().cloned().fold(f64::INFINITY, f64::min),
        "ess": ess,
        "validation": validation,
    });
    out.json("summary.json", &summary)?;
    println!("draws {} acceptance {:.3}", set.len(), set.acceptance_rate);
    Ok(())
}

fn regions(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let scheme = parse_scheme(&cfg.scheme)?;
    let prior = parse_prior(&cfg.prior, &scheme)?;
    let counts = counts_of(cfg)?.expect("validated");
    let fam = family(cfg.family, scheme.dim())?;
    let draws = cfg.draws.unwrap_or(match (cfg.scale, scheme.dim()) {
        (Scale::Desk, 2) => 50_000,
        (Scale::Desk, _) => 20_000,
        (Scale::Paper, 2) => 500_000,
        (Scale::Paper, _) => 100_000,
    });
    let run = run_regions(&counts, &scheme, fam.as_ref(), &prior, &sampler(cfg, draws), &MleOptions { seed: cfg.seed, ..Default::default() })?;
    run.curves.write_csv(out.create("curves.csv")?)?;
    let truth = match &cfg.truth {
        Some(t) => {
            let p = born_probabilities(&parse_channel(t)?, &scheme)?;
            let ll = tomo::log_likelihood(&p, &counts)?;
            Some(json!({
                "channel": t,
                "log_likelihood": ll,
                "member_below_lambda": (ll - run.mle.log_lmax).exp(),
            }))
        }
        None => None,
    };
    let summary = json!({
        "lambda_crit": run.curves.lambda_crit,
        "s_crit": run.curves.s_crit,
        "c_crit": run.curves.c_crit,
        "log_lmax": run.mle.log_lmax,
        "mle_avg_fidelity": duality::avg_fidelity(&run.mle.choi)?,
        "draws": run.prior.len(),
        "prior_acceptance": run.prior.acceptance_rate,
        "posterior_acceptance": run.posterior.acceptance_rate,
        "prior_ess": run.prior.ess_of(&run.prior_ll),
        "posterior_ess": run.posterior.ess_of(&run.posterior_ll),
        "truth": truth,
    });
    out.json("regions.json", &summary)?;
    println!(
        "lambda_crit {:.4} s {:.4} c {:.4}",
        run.curves.lambda_crit, run.curves.s_crit, run.curves.c_crit
    );
    Ok(())
}

fn marginal(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let scheme = parse_scheme(&cfg.scheme)?;
    let prior = parse_prior(&cfg.prior, &scheme)?;
    let counts = counts_of(cfg)?.expect("validated");
    let fam = family(cfg.family, scheme.dim())?;
    let property = Property::builtin(cfg.property.as_deref().unwrap_or_default(), cfg.family, scheme.dim())?;
    let mut mc = match cfg.scale {
        Scale::Desk => MarginalConfig::desk(cfg.seed),
        Scale::Paper => MarginalConfig::paper(cfg.seed),
    };
    if let Some(d) = cfg.draws {
        mc.prior_draws = d;
        mc.reweighted_draws = d;
    }
    let template = sampler(cfg, 0);
    mc.sampler.hmc = cptp_hmc::hmc::HmcConfig { seed: cfg.seed, ..template.hmc };
    mc.sampler.chains = template.chains;
    let r = marginal_likelihood(&counts, &scheme, fam.as_ref(), &property, &prior, &mc, None)?;
    r.write_csv(out.create("marginal.csv")?)?;
    r.write_curves_csv(out.create("intervals.csv")?)?;
    out.json("marginal.json", &r)?;
    let seg: Vec<String> = r.plausible.iter().map(|(a, b)| format!("[{a:.4}, {b:.4}]")).collect();
    println!("plausible interval {}", seg.join(" "));
    Ok(())
}

fn model_select(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let preset = match cfg.scale {
        Scale::Desk => AssessmentConfig::desk(cfg.seed),
        Scale::Paper => AssessmentConfig::paper(cfg.seed),
    };
    let draws = cfg.draws.unwrap_or(preset.prior_draws);
    let s = sampler(cfg, draws);
    if let Some(counts) = counts_of(cfg)? {
        let samples = PriorSamples::draw(draws, cfg.seed, &s)?;
        let report = select_models(&counts, &samples, &MleOptions { seed: cfg.seed, ..Default::default() })?;
        report.write_csv(out.create("report.csv")?)?;
        out.json("report.json", &report)?;
        println!(
            "AIC {} BIC {} RBR {}",
            report.aic_choice,
            report.bic_choice,
            report.rbr_choice.map_or("none".to_string(), |k| k.to_string())
        );
    }
    if cfg.assess {
        let ac = AssessmentConfig { prior_draws: draws, ..preset };
        let a = assess_criteria(&ac, &s)?;
        a.write_selection_csv(out.create("selection.csv")?)?;
        a.write_bias_csv(out.create("bias.csv")?)?;
        out.json("assessment.json", &a)?;
    }
    Ok(())
}
