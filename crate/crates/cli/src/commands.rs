use std::collections::HashMap;
use std::fs;
use std::thread;

use glpm_core::diagnostics::{DyadEfficiency, DyadSample};
use glpm_core::network::write_network_text;
use glpm_core::tuning::TunedSampler;
use glpm_core::{
    effective_sample_size, generate_network, load_network_files, relative_efficiency, run_sampler,
    sample_dyads, tune_sampler, ChainOutput, TuneKernel, Network, PriorSpec, SamplerConfig, SamplerKind,
};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::output::{input_hash, num, opt, OutDir, Table};
use crate::CliError;

/// Independent seed streams from the one user seed (SplitMix64 finalizer).
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

const DYAD_STREAM: u64 = 1;

fn kind_index(kind: SamplerKind) -> u64 {
    SamplerKind::ALL.iter().position(|&k| k == kind).unwrap() as u64
}

fn tune_seed(seed: u64, kind: SamplerKind) -> u64 {
    derive_seed(seed, 100 + kind_index(kind))
}

fn chain_seed(seed: u64, kind: SamplerKind) -> u64 {
    derive_seed(seed, 200 + kind_index(kind))
}

/// Recorded draws to skip so that only iterations ≥ `burn_in` remain.
fn burn_in_draws(burn_in: usize, thin: usize) -> usize {
    burn_in.div_ceil(thin)
}

fn runtime(e: glpm_core::GlpmError) -> CliError {
    CliError::Runtime(e.to_string())
}

fn invalid(e: glpm_core::GlpmError) -> CliError {
    CliError::Validation(e.to_string())
}

struct Inputs {
    network: Network,
    prior: PriorSpec,
    dyads: DyadSample,
}

fn load_inputs(config: &ExperimentConfig) -> Result<Inputs, CliError> {
    let network = match &config.edges {
        Some(edges) => load_network_files(edges, config.covariates.as_deref(), config.mask.as_deref())
            .map_err(invalid)?,
        None => generate_network(&config.synth_spec()?, None).map_err(invalid)?.0,
    };
    let prior = config.prior(&network)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, DYAD_STREAM));
    let dyads = sample_dyads(&network, config.dyad_count, &mut rng);
    info!(
        "network: {} nodes, {} edges, {} non-edges, {} categories",
        network.node_count(),
        network.edge_count(),
        network.non_edge_count(),
        network.num_categories()
    );
    Ok(Inputs { network, prior, dyads })
}

fn network_summary(network: &Network) -> Value {
    json!({
        "nodes": network.node_count(),
        "categories": network.num_categories(),
        "edges": network.edge_count(),
        "non_edges": network.non_edge_count(),
        "unobserved": network.unobserved_count(),
    })
}

fn acceptance_summary(out: &ChainOutput) -> Value {
    json!({
        "position_rate": out.acceptance.position_rate(),
        "tau_rates": out.acceptance.tau_rates(),
        "counts": out.acceptance,
    })
}

/// Step sizes for `kind`: tuned when the config asks for it, explicit otherwise.
fn step_sizes(
    config: &ExperimentConfig,
    kind: SamplerKind,
    inputs: &Inputs,
) -> Result<(SamplerConfig, Option<TunedSampler>), CliError> {
    let explicit = config.sampler_config(inputs.network.num_categories())?;
    if !config.tune {
        return Ok((explicit, None));
    }
    info!("tuning {kind}");
    let tuned = tune_sampler(
        kind,
        &inputs.network,
        &inputs.prior,
        &explicit,
        &config.tune_settings(),
        tune_seed(config.seed, kind),
    )
    .map_err(runtime)?;
    Ok((tuned.config.clone(), Some(tuned)))
}

fn fit_one(
    config: &ExperimentConfig,
    kind: SamplerKind,
    inputs: &Inputs,
) -> Result<(ChainOutput, Option<TunedSampler>), CliError> {
    let (sampler, tuned) = step_sizes(config, kind, inputs)?;
    info!("fitting {kind}: {} iterations", config.iterations);
    let out = run_sampler(
        kind,
        &inputs.network,
        &inputs.prior,
        &sampler,
        config.iterations,
        config.thin,
        chain_seed(config.seed, kind),
    )
    .map_err(runtime)?;
    Ok((out, tuned))
}

pub fn generate(config: &ExperimentConfig) -> Result<(), CliError> {
    if config.edges.is_some() {
        return Err(CliError::Validation("generate needs a synthetic network (remove `edges`)".into()));
    }
    let (network, truth) = generate_network(&config.synth_spec()?, None).map_err(invalid)?;
    let dir = OutDir::create(&config.out)?;
    let (edges, covs, mask) = write_network_text(&network);
    dir.write("edges.txt", edges)?;
    dir.write("covariates.txt", covs)?;
    dir.write("mask.txt", mask)?;
    let d = truth.ncols();
    let mut table = Table::new(["node".to_string()].into_iter().chain((1..=d).map(|k| format!("z{k}"))));
    for (i, row) in truth.rows().into_iter().enumerate() {
        table.push([(i + 1).to_string()].into_iter().chain(row.iter().map(|&x| num(x))).collect());
    }
    dir.write_csv("truth.csv", &table)?;
    dir.write("config.resolved.toml", config.to_toml())?;
    info!("wrote {} edges to {}", network.edge_count(), config.out.display());
    Ok(())
}

pub fn tune(config: &ExperimentConfig) -> Result<(), CliError> {
    let inputs = load_inputs(config)?;
    let base = config.sampler_config(inputs.network.num_categories())?;
    let mut tuned = Vec::new();
    for &kind in &config.kinds {
        info!("tuning {kind}");
        let t = tune_sampler(
            kind,
            &inputs.network,
            &inputs.prior,
            &base,
            &config.tune_settings(),
            tune_seed(config.seed, kind),
        )
        .map_err(runtime)?;
        tuned.push(t);
    }
    let dir = OutDir::create(&config.out)?;
    let mut table = Table::new([
        "sampler",
        "kernel",
        "category",
        "tuned_value",
        "leap_count",
        "final_acceptance_rate",
        "pilot_rounds_used",
        "exhausted",
        "monotonicity_violations",
        "seconds",
    ]);
    for t in &tuned {
        for r in &t.results {
            // One row per category for the τ widths, one row otherwise.
            let per_category = r.kernel == TuneKernel::RwTau;
            for (c, &value) in r.values.iter().enumerate() {
                table.push(vec![
                    t.kind.to_string(),
                    serde_json::to_value(r.kernel).unwrap().as_str().unwrap_or_default().to_string(),
                    if per_category { (c + 1).to_string() } else { String::new() },
                    num(value),
                    r.leap_count.map(|l| l.to_string()).unwrap_or_default(),
                    num(r.final_acceptance_rate),
                    r.pilot_rounds_used.to_string(),
                    r.exhausted.to_string(),
                    r.monotonicity_violations.to_string(),
                    num(r.seconds),
                ]);
            }
        }
        dir.write(&format!("tuned_{}.toml", t.kind), config.with_tuned(t.kind, &t.config).to_toml())?;
    }
    dir.write_csv("tuning.csv", &table)?;
    dir.write("config.resolved.toml", config.to_toml())?;
    Ok(())
}

pub fn fit(config: &ExperimentConfig) -> Result<(), CliError> {
    let inputs = load_inputs(config)?;
    let (out, tuned) = fit_one(config, config.kind, &inputs)?;
    let dir = OutDir::create(&config.out)?;

    let categories = inputs.network.num_categories();
    let mut header = vec!["draw".to_string(), "iteration".to_string()];
    header.extend((1..=categories).map(|c| format!("tau_{c}")));
    header.push("gamma2".into());
    header.extend(inputs.dyads.dyads.iter().map(|d| format!("f_{}_{}", d.i + 1, d.j + 1)));
    let mut table = Table::new(header);
    let series: Vec<Vec<f64>> = inputs
        .dyads
        .dyads
        .iter()
        .map(|&d| out.dyad_series(d, inputs.network.category(d), 0))
        .collect();
    for k in 0..out.draw_count() {
        let mut row = vec![k.to_string(), (k * config.thin).to_string()];
        row.extend(out.tau[k].iter().map(|&t| num(t)));
        row.push(num(out.gamma2[k]));
        row.extend(series.iter().map(|s| num(s[k])));
        table.push(row);
    }
    dir.write_csv("draws.csv", &table)?;

    let manifest = json!({
        "command": "fit",
        "sampler": config.kind,
        "seed": config.seed,
        "chain_seed": out.seed,
        "iterations": config.iterations,
        "thin": config.thin,
        "burn_in": config.burn_in(),
        "draws": out.draw_count(),
        "dyads": inputs.dyads.dyads.len(),
        "dyads_exhausted": inputs.dyads.exhausted,
        "input_hash": format!("sha256:{}", input_hash(&inputs.network, config)),
        "network": network_summary(&inputs.network),
        "timings": out.timings,
        "sampling_seconds": out.sampling_seconds(),
        "tuning_seconds": tuned.as_ref().map(|t| t.seconds),
        "tuning": tuned.as_ref().map(|t| &t.results),
        "acceptance": acceptance_summary(&out),
        "sampler_config": out.config,
        "config": config,
    });
    dir.write_json("manifest.json", &manifest)?;
    dir.write("config.resolved.toml", config.to_toml())?;
    info!(
        "{}: {:.2} s sampling, position acceptance {}",
        config.kind,
        out.sampling_seconds(),
        opt(out.acceptance.position_rate())
    );
    Ok(())
}

/// Per-column summaries of a previous fit's draws after its burn-in.
pub fn diagnose(config: &ExperimentConfig) -> Result<(), CliError> {
    let fit_dir = config.fit_dir.as_deref().unwrap_or(&config.out);
    let read = |name: &str| {
        let path = fit_dir.join(name);
        fs::read_to_string(&path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    };
    let manifest: Value = serde_json::from_str(&read("manifest.json")?)
        .map_err(|e| CliError::Validation(format!("manifest.json: {e}")))?;
    let burn_in = manifest["burn_in"].as_u64().unwrap_or(0) as usize;
    let seconds = manifest["sampling_seconds"].as_f64().unwrap_or(f64::NAN);

    let text = read("draws.csv")?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let bad = |e: &dyn std::fmt::Display| CliError::Validation(format!("draws.csv: {e}"));
    let header: Vec<String> = reader.headers().map_err(|e| bad(&e))?.iter().map(String::from).collect();
    let iteration = header.iter().position(|h| h == "iteration").ok_or_else(|| bad(&"no iteration column"))?;
    let columns: Vec<usize> = (0..header.len()).filter(|&c| c != iteration && header[c] != "draw").collect();
    let mut series = vec![Vec::new(); header.len()];
    for record in reader.records() {
        let record = record.map_err(|e| bad(&e))?;
        let it: usize = record[iteration].parse().map_err(|e| bad(&e))?;
        if it < burn_in {
            continue;
        }
        for &c in &columns {
            series[c].push(record[c].parse::<f64>().map_err(|e| bad(&e))?);
        }
    }

    let mut table = Table::new(["column", "draws", "mean", "sd", "ess", "ess_per_second", "truncation_lag", "degenerate"]);
    for &c in &columns {
        let x = &series[c];
        let ess = effective_sample_size(x).map_err(|e| bad(&e))?;
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let sd = (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (x.len() - 1) as f64).sqrt();
        table.push(vec![
            header[c].clone(),
            x.len().to_string(),
            num(mean),
            num(sd),
            num(ess.ess),
            opt((seconds > 0.0).then(|| ess.ess / seconds)),
            ess.truncation_lag.to_string(),
            ess.degenerate.to_string(),
        ]);
    }
    let dir = OutDir::create(&config.out)?;
    dir.write_csv("diagnostics.csv", &table)?;
    dir.write("config.resolved.toml", config.to_toml())?;
    Ok(())
}

fn efficiency_table(rows: &[DyadEfficiency]) -> Table {
    let mut table = Table::new([
        "i",
        "j",
        "category",
        "ess_target",
        "ess_baseline",
        "seconds_target",
        "seconds_baseline",
        "relative_efficiency",
    ]);
    for r in rows {
        table.push(vec![
            (r.dyad.i + 1).to_string(),
            (r.dyad.j + 1).to_string(),
            (r.category + 1).to_string(),
            num(r.ess_target),
            num(r.ess_baseline),
            num(r.seconds_target),
            num(r.seconds_baseline),
            opt(r.ratio),
        ]);
    }
    table
}

/// Tunes and fits every sampler on one network, then reports each one's
/// per-dyad efficiency relative to Metropolis-within-Gibbs.
pub fn benchmark(config: &ExperimentConfig) -> Result<(), CliError> {
    if !config.kinds.contains(&SamplerKind::Mwg) {
        return Err(CliError::Validation("benchmark kinds must include mwg (the baseline)".into()));
    }
    let mut kinds = config.kinds.clone();
    kinds.dedup();
    let config = &ExperimentConfig { tune: true, ..config.clone() };
    let inputs = load_inputs(config)?;

    // Wall-clock comparisons are only fair when every fit has its own core.
    let cores = thread::available_parallelism().map_or(1, |n| n.get());
    let fits: Vec<Result<(ChainOutput, Option<TunedSampler>), CliError>> = if cores >= kinds.len() {
        let inputs = &inputs;
        thread::scope(|s| {
            let handles: Vec<_> = kinds.iter().map(|&k| s.spawn(move || fit_one(config, k, inputs))).collect();
            handles.into_iter().map(|h| h.join().expect("fit worker panicked")).collect()
        })
    } else {
        kinds.iter().map(|&k| fit_one(config, k, &inputs)).collect()
    };
    let mut by_kind = HashMap::new();
    for (&kind, fit) in kinds.iter().zip(fits) {
        by_kind.insert(kind, fit?);
    }

    let skip = burn_in_draws(config.burn_in(), config.thin);
    let (baseline, _) = &by_kind[&SamplerKind::Mwg];
    let dir = OutDir::create(&config.out)?;
    let mut summary = Table::new([
        "sampler",
        "median_relative_efficiency",
        "defined_dyads",
        "tuning_seconds",
        "sampling_seconds",
        "position_acceptance_rate",
    ]);
    let mut per_kind = serde_json::Map::new();
    for &kind in &kinds {
        let (out, tuned) = &by_kind[&kind];
        let report = relative_efficiency(out, baseline, &inputs.network, &inputs.dyads.dyads, skip).map_err(runtime)?;
        dir.write_csv(&format!("efficiency_{kind}.csv"), &efficiency_table(&report.rows))?;
        let tuning_seconds = tuned.as_ref().map_or(0.0, |t| t.seconds);
        summary.push(vec![
            kind.to_string(),
            opt(report.median),
            report.rows.iter().filter(|r| r.ratio.is_some()).count().to_string(),
            num(tuning_seconds),
            num(out.sampling_seconds()),
            opt(out.acceptance.position_rate()),
        ]);
        per_kind.insert(
            kind.to_string(),
            json!({
                "chain_seed": out.seed,
                "median_relative_efficiency": report.median,
                "tuning_seconds": tuning_seconds,
                "timings": out.timings,
                "acceptance": acceptance_summary(out),
                "sampler_config": out.config,
            }),
        );
    }
    dir.write_csv("summary.csv", &summary)?;
    dir.write_json(
        "manifest.json",
        &json!({
            "command": "benchmark",
            "seed": config.seed,
            "iterations": config.iterations,
            "thin": config.thin,
            "burn_in": config.burn_in(),
            "dyads": inputs.dyads.dyads.len(),
            "dyads_exhausted": inputs.dyads.exhausted,
            "concurrent_fits": cores >= kinds.len(),
            "input_hash": format!("sha256:{}", input_hash(&inputs.network, config)),
            "network": network_summary(&inputs.network),
            "samplers": per_kind,
            "config": config,
        }),
    )?;
    dir.write("config.resolved.toml", config.to_toml())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_distinct_and_stable() {
        let seeds: Vec<u64> = SamplerKind::ALL
            .iter()
            .flat_map(|&k| [tune_seed(7, k), chain_seed(7, k)])
            .chain([derive_seed(7, DYAD_STREAM)])
            .collect();
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), seeds.len());
        assert_eq!(chain_seed(7, SamplerKind::Mwg), chain_seed(7, SamplerKind::Mwg));
        assert_ne!(chain_seed(7, SamplerKind::Mwg), chain_seed(8, SamplerKind::Mwg));
    }

    #[test]
    fn burn_in_counts_recorded_draws() {
        assert_eq!(burn_in_draws(100, 1), 100);
        assert_eq!(burn_in_draws(100, 3), 34);
        assert_eq!(burn_in_draws(0, 5), 0);
    }
}
