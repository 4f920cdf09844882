use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hearth_lp::data::payload_path_for;
use hearth_lp::evaluation::{
    cell_households, emit_report, render_csv, render_json, render_plot_series, render_table, ReportFormat,
};
use hearth_lp::graph::write_matrix_csv;
use hearth_lp::{
    build_affinity, build_households, generate_synthetic, init_label_matrix, load_dataset, propagate, run_sweep,
    write_dataset, Catalog, Count, EmbeddingMatrix, HouseholdDataset, Role, ScorerInput, Split, SplitFile, SweepDataset,
};

use crate::config::{OutputFormat, RunConfig};

pub fn gen_synth(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    cfg.validate()?;
    let manifest = cfg.require_manifest()?;
    let (embeddings, catalog) = generate_synthetic(&cfg.synth_config())?;
    write_dataset(manifest, &embeddings, &catalog)?;
    writeln!(
        out,
        "wrote {} utterances ({} speakers, dim {}) to {} and {}",
        catalog.len(),
        cfg.n_speakers,
        cfg.dim,
        manifest.display(),
        payload_path_for(manifest).display()
    )?;
    Ok(())
}

pub fn build_households_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    cfg.validate()?;
    let (_, catalog) = load_dataset(cfg.require_manifest()?)?;
    let split = build_households(&catalog, &cfg.simulation_config())?;
    split.write(cfg.require_split_file()?)?;
    writeln!(
        out,
        "{} households ({} dev / {} val), {} speakers dropped",
        split.households.len(),
        split.in_split(Split::Dev).count(),
        split.in_split(Split::Val).count(),
        split.dropped_speakers.len()
    )?;
    Ok(())
}

fn load_inputs(cfg: &RunConfig) -> Result<(EmbeddingMatrix, Catalog, SplitFile)> {
    let (embeddings, catalog) = load_dataset(cfg.require_manifest()?)?;
    let split = SplitFile::read(cfg.require_split_file()?)?;
    Ok((embeddings, catalog, split))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory `{}`", dir.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write `{}`", path.display()))
}

/// Runs the configured sweep and writes `report.csv`, `report.json`,
/// `resolved_config.txt` and, if requested, `plot_<axis>.csv` to the output
/// directory.
pub fn sweep(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    cfg.validate()?;
    let dir = cfg.require_out_dir()?;
    let (embeddings, catalog, split) = load_inputs(cfg)?;
    let dataset = SweepDataset {
        embeddings: &embeddings,
        catalog: &catalog,
        split_file: &split,
    };
    let results = run_sweep(&cfg.sweep_spec(), dataset, cfg.lp_config(), cfg.jobs)?;
    create_dir(dir)?;
    write_file(&dir.join("resolved_config.txt"), &cfg.render())?;
    emit_report(&results, ReportFormat::Csv, &dir.join("report.csv"))?;
    emit_report(&results, ReportFormat::Json, &dir.join("report.json"))?;
    if let Some(axis) = cfg.plot {
        let name = match axis {
            hearth_lp::evaluation::PlotAxis::Labeled => "plot_L.csv",
            hearth_lp::evaluation::PlotAxis::Unlabeled => "plot_U.csv",
        };
        write_file(&dir.join(name), &render_plot_series(&results, axis))?;
    }
    match cfg.format {
        OutputFormat::Table => write!(out, "{}", render_table(&results))?,
        OutputFormat::Csv => write!(out, "{}", render_csv(&results))?,
        OutputFormat::Json => writeln!(out, "{}", render_json(&results)?)?,
    }
    Ok(())
}

fn single<'a>(values: &'a [Count], what: &str) -> Result<&'a Count> {
    match values {
        [one] => Ok(one),
        _ => bail!("this command takes a single {what} value, got {}", values.len()),
    }
}

/// The household `id` with roles drawn as in the sweep cell for the
/// configured (single) L and U values.
fn household(cfg: &RunConfig, catalog: &Catalog, embeddings: &EmbeddingMatrix, split: &SplitFile, id: &str) -> Result<HouseholdDataset> {
    let record = split
        .households
        .iter()
        .find(|h| h.household_id == id)
        .ok_or_else(|| anyhow!("household `{id}` is not in the split file"))?;
    let dataset = SweepDataset {
        embeddings,
        catalog,
        split_file: split,
    };
    let labeled = *single(&cfg.labeled, "labeled")?;
    let unlabeled = *single(&cfg.unlabeled, "unlabeled")?;
    cell_households(dataset, record.split, labeled, unlabeled, cfg.seed)?
        .into_iter()
        .find(|h| h.household_id == id)
        .ok_or_else(|| anyhow!("household `{id}` missing from its split"))
}

/// Graph nodes in propagation order: labeled, unlabeled, holdout.
fn graph_nodes(h: &HouseholdDataset) -> Vec<(&hearth_lp::Utterance, Role)> {
    [Role::Labeled, Role::Unlabeled, Role::Holdout]
        .into_iter()
        .flat_map(|role| h.with_role(role).map(move |u| (u, role)))
        .collect()
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::Labeled => "labeled",
        Role::Unlabeled => "unlabeled",
        Role::Holdout => "holdout",
    }
}

/// Prints one line per (method, holdout utterance). With `trace`, also
/// writes the per-iteration deltas of a plain propagation over the household.
pub fn score(cfg: &RunConfig, household_id: &str, trace: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    cfg.validate()?;
    let (embeddings, catalog, split) = load_inputs(cfg)?;
    let h = household(cfg, &catalog, &embeddings, &split, household_id)?;
    let input = ScorerInput::from_household(&h, &embeddings, cfg.lp_config());
    if let Some(path) = trace {
        let nodes = graph_nodes(&h);
        let rows: Vec<usize> = nodes.iter().map(|(u, _)| u.embedding_index).collect();
        let graph = build_affinity(&embeddings.select(&rows)?, cfg.sigma)?;
        let known: Vec<(usize, usize)> = nodes
            .iter()
            .enumerate()
            .filter(|(_, (_, role))| *role == Role::Labeled)
            .map(|(i, (u, _))| (i, h.speakers.iter().position(|s| *s == u.speaker).expect("household speaker")))
            .collect();
        let y0 = init_label_matrix(rows.len(), h.speakers.len(), &known)?;
        let result = propagate(graph.normalized(), &y0, &cfg.lp_config())?;
        let mut file = fs::File::create(path).with_context(|| format!("cannot write `{}`", path.display()))?;
        result.write_trace_csv(&mut file)?;
    }
    let holdout: Vec<_> = h.with_role(Role::Holdout).collect();
    writeln!(out, "method,utterance_id,speaker,predicted,correct,unreached")?;
    for &method in &cfg.methods {
        let prediction = method.score(&input)?;
        for (u, p) in holdout.iter().zip(&prediction.holdout) {
            writeln!(
                out,
                "{method},{},{},{},{},{}",
                u.utterance_id,
                u.speaker,
                p.speaker,
                u.speaker == p.speaker,
                p.unreached
            )?;
        }
    }
    Ok(())
}

/// Writes `nodes.csv`, `W.csv` and `S.csv` for one household's graph.
pub fn dump_graph(cfg: &RunConfig, household_id: &str, out: &mut dyn Write) -> Result<()> {
    cfg.validate()?;
    let dir = cfg.require_out_dir()?;
    let (embeddings, catalog, split) = load_inputs(cfg)?;
    let h = household(cfg, &catalog, &embeddings, &split, household_id)?;
    let nodes = graph_nodes(&h);
    let rows: Vec<usize> = nodes.iter().map(|(u, _)| u.embedding_index).collect();
    let graph = build_affinity(&embeddings.select(&rows)?, cfg.sigma)?;
    create_dir(dir)?;
    let mut listing = String::from("node,utterance_id,role\n");
    for (i, (u, role)) in nodes.iter().enumerate() {
        listing.push_str(&format!("{i},{},{}\n", u.utterance_id, role_name(*role)));
    }
    write_file(&dir.join("nodes.csv"), &listing)?;
    for (name, matrix) in [("W.csv", graph.weights()), ("S.csv", graph.normalized())] {
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, matrix)?;
        fs::write(dir.join(name), buf).with_context(|| format!("cannot write `{name}`"))?;
    }
    writeln!(out, "wrote {}-node graph for {household_id} to {}", nodes.len(), dir.display())?;
    Ok(())
}
