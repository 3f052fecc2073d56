use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use treerules::bench::bench;
use treerules::interactions::{itemize, mine, rank_interactions, InteractionKey};
use treerules::pipeline::{self, PipelineConfig};
use treerules::prune::prune_rules;
use treerules::report::{self, Format};
use treerules::rules::{assign_outcomes, extract_conditions, extract_rules, measure_rules};
use treerules::stel::build_stel;
use treerules::{generate_team_data, load_csv, Dataset, DecayMode, Ensemble, Error, LoadOptions};

use crate::args::*;

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_text(&text)?;
    }
    let format = match cli.format {
        OutputFormat::Csv => Format::Csv,
        OutputFormat::Pretty => Format::Pretty,
    };
    match cli.command {
        Command::Generate(a) => generate(a, &cfg),
        Command::Train(a) => train(a, cfg),
        Command::Extract(a) => extract(a, cfg, format),
        Command::Measure(a) => measure(a, &cfg, format),
        Command::Prune(a) => prune(a, cfg, format),
        Command::Select(a) => select(a, cfg, format),
        Command::Mine(a) => mine_cmd(a, cfg, format),
        Command::Stel(a) => stel(a, cfg, format),
        Command::Predict(a) => predict(a),
        Command::Bench(a) => bench_cmd(a, cfg, format),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Error::Param(msg.into()).into()
}

fn load(data: &DataArgs, cfg: &PipelineConfig) -> Result<Dataset> {
    let path = data
        .data
        .as_ref()
        .or(cfg.data.as_ref())
        .ok_or_else(|| usage("--data is required (or set `data` in the config file)"))?;
    load_path(path, data.target.clone())
}

fn load_path(path: &Path, target: Option<String>) -> Result<Dataset> {
    let opts = LoadOptions {
        target,
        ..LoadOptions::default()
    };
    load_csv(path, &opts).with_context(|| format!("loading {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

/// Run `f` against the output file or standard output.
fn emit(
    out: &OutArgs,
    cfg: &PipelineConfig,
    f: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    let path: Option<&PathBuf> = out.out.as_ref().or(cfg.output.as_ref());
    match path {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn apply_forest(f: &ForestArgs, cfg: &mut PipelineConfig) {
    if let Some(v) = f.trees {
        cfg.forest.n_trees = v;
    }
    if f.mtry.is_some() {
        cfg.forest.mtry = f.mtry;
    }
    if f.min_leaf.is_some() {
        cfg.forest.min_leaf = f.min_leaf;
    }
    if f.max_nodes.is_some() {
        cfg.forest.max_nodes = f.max_nodes;
    }
    if f.coef_reg.is_some() {
        cfg.coef_reg = f.coef_reg;
    }
    if f.no_bootstrap {
        cfg.forest.bootstrap = false;
    }
    if let Some(s) = f.seed {
        cfg.seed = s;
    }
}

fn limit(v: i64, name: &str) -> Result<Option<usize>> {
    match v {
        -1 => Ok(None),
        v if v >= 1 => Ok(Some(v as usize)),
        _ => Err(usage(format!("--{name} must be -1 or at least 1"))),
    }
}

fn generate(a: GenerateArgs, cfg: &PipelineConfig) -> Result<()> {
    let d = generate_team_data(a.n, a.p, a.active, a.seed)?;
    emit(&a.out, cfg, |w| Ok(d.write_csv(w)?))
}

fn train(a: TrainArgs, mut cfg: PipelineConfig) -> Result<()> {
    apply_forest(&a.forest, &mut cfg);
    let d = load(&a.data, &cfg)?;
    let forest = pipeline::train(&d, &cfg)?;
    if let Some(oob) = forest.oob_error(&d) {
        eprintln!("out-of-bag error: {oob}");
    }
    emit(&a.out, &cfg, |w| Ok(forest.export_node_tables(w)?))
}

fn extract(a: ExtractArgs, mut cfg: PipelineConfig, format: Format) -> Result<()> {
    if let Some(v) = a.max_depth {
        cfg.max_depth = limit(v, "max-depth")?;
    }
    let d = load(&a.data, &cfg)?;
    let model = Ensemble::import_node_tables(open(&a.model)?, d.schema())
        .with_context(|| format!("reading model {}", a.model.display()))?;
    let schema = d.schema();
    if a.leaf_rules {
        let set = extract_rules(&model);
        for w in &set.warnings {
            eprintln!(
                "warning: tree {} node {}: {}",
                w.source.tree, w.source.node, w.message
            );
        }
        return emit(&a.out, &cfg, |w| match format {
            Format::Csv => Ok(report::write_rules(w, &set.rules, schema)?),
            Format::Pretty => Ok(w.write_all(report::pretty_rules(&set.rules, schema).as_bytes())?),
        });
    }
    let set = extract_conditions(&model, cfg.max_depth)?;
    for w in &set.warnings {
        eprintln!(
            "warning: tree {} node {}: {}",
            w.source.tree, w.source.node, w.message
        );
    }
    emit(&a.out, &cfg, |w| match format {
        Format::Csv => Ok(report::write_conditions(w, &set.conditions, schema)?),
        Format::Pretty => {
            for c in &set.conditions {
                writeln!(w, "{}", c.render(schema, true))?;
            }
            Ok(())
        }
    })
}

fn write_rules(
    w: &mut dyn Write,
    rules: &[treerules::Rule],
    d: &Dataset,
    format: Format,
) -> Result<()> {
    match format {
        Format::Csv => report::write_rules(w, rules, d.schema())?,
        Format::Pretty => w.write_all(report::pretty_rules(rules, d.schema()).as_bytes())?,
    }
    Ok(())
}

fn measure(a: MeasureArgs, cfg: &PipelineConfig, format: Format) -> Result<()> {
    let mut d = load(&a.data, cfg)?;
    if let Some(bins) = a.bins {
        d = d.discretize_target(bins)?;
    }
    let rules = if a.keep_pred {
        let rules = report::read_rules(open(&a.input)?, d.schema())?;
        measure_rules(&rules, &d)?
    } else {
        let conditions = report::read_conditions(open(&a.input)?, d.schema())?;
        let (rules, dropped) = assign_outcomes(&conditions, &d);
        for c in &dropped {
            eprintln!(
                "warning: dropped `{}`: it covers no instance",
                c.to_text(d.schema())
            );
        }
        rules
    };
    emit(&a.out, cfg, |w| write_rules(w, &rules, &d, format))
}

fn prune(a: PruneArgs, mut cfg: PipelineConfig, format: Format) -> Result<()> {
    if let Some(m) = a.mode {
        cfg.prune.mode = match m {
            Mode::Relative => DecayMode::Relative,
            Mode::Absolute => DecayMode::Absolute,
        };
    }
    if let Some(t) = a.threshold {
        cfg.prune.threshold = t;
    }
    if let Some(s) = a.s {
        cfg.prune.s = s;
    }
    let d = load(&a.data, &cfg)?;
    let rules = report::read_rules(open(&a.input)?, d.schema())?;
    let pruned = prune_rules(&rules, &d, &cfg.prune)?;
    emit(&a.out, &cfg, |w| write_rules(w, &pruned, &d, format))
}

fn select(a: SelectArgs, mut cfg: PipelineConfig, format: Format) -> Result<()> {
    if let Some(v) = a.lambda0 {
        cfg.select.lambda0 = v;
    }
    if let Some(v) = a.gamma {
        cfg.select.gamma = v;
    }
    if let Some(v) = a.beta {
        cfg.select.beta = v;
    }
    if let Some(v) = a.trees {
        cfg.select.forest.n_trees = v;
    }
    if a.no_rescore {
        cfg.select.rescore = false;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let d = load(&a.data, &cfg)?;
    let conditions = report::read_conditions(open(&a.input)?, d.schema())?;
    let (rules, _) = assign_outcomes(&treerules::dedup_conditions(&conditions), &d);
    let selected = pipeline::select(&rules, &d, &cfg)?;
    emit(&a.out, &cfg, |w| {
        match format {
            Format::Csv => report::write_selected(w, &selected, d.schema())?,
            Format::Pretty => {
                w.write_all(report::pretty_selected(&selected, d.schema()).as_bytes())?
            }
        }
        Ok(())
    })
}

fn mine_cmd(a: MineArgs, mut cfg: PipelineConfig, format: Format) -> Result<()> {
    if let Some(v) = a.min_sup {
        cfg.mine.min_sup = v;
    }
    if let Some(v) = a.min_conf {
        cfg.mine.min_conf = v;
    }
    if let Some(v) = a.max_len {
        cfg.mine.max_len = v;
    }
    if a.numeric_as_variable {
        cfg.numeric_as_variable = true;
    }
    let d = load(&a.data, &cfg)?;
    let rules = report::read_rules(open(&a.input)?, d.schema())?;
    let transactions = itemize(&rules, cfg.numeric_as_variable);
    let mined: Vec<_> = mine(&transactions, &cfg.mine)?
        .into_iter()
        .filter(|r| r.lhs.len() >= a.min_items)
        .collect();
    let mut ranked = rank_interactions(
        &mined,
        &[InteractionKey::SupportDesc, InteractionKey::ConfidenceDesc],
    );
    if let Some(top) = a.top {
        ranked.truncate(top);
    }
    emit(&a.out, &cfg, |w| {
        match format {
            Format::Csv => report::write_interactions(w, &ranked, d.schema())?,
            Format::Pretty => {
                w.write_all(report::pretty_interactions(&ranked, d.schema()).as_bytes())?
            }
        }
        Ok(())
    })
}

fn stel(a: StelArgs, mut cfg: PipelineConfig, format: Format) -> Result<()> {
    if let Some(t) = a.threshold {
        cfg.stel_threshold = t;
    }
    let d = load(&a.data, &cfg)?;
    let rules = report::read_rules(open(&a.input)?, d.schema())?;
    let rules = if rules.iter().all(|r| r.metrics.is_some()) {
        rules
    } else {
        measure_rules(&rules, &d)?
    };
    let list = build_stel(&rules, &d, cfg.stel_threshold)?;
    eprintln!("training error: {}", list.evaluate(&d));
    emit(&a.out, &cfg, |w| {
        match format {
            Format::Csv => report::write_rule_list(w, &list, d.schema())?,
            Format::Pretty => {
                w.write_all(report::pretty_rule_list(&list, d.schema()).as_bytes())?
            }
        }
        Ok(())
    })
}

fn predict(a: PredictArgs) -> Result<()> {
    let cfg = PipelineConfig::default();
    let train = load_path(&a.train, a.target.clone())?;
    let list = report::read_rule_list(open(&a.model)?, train.schema())
        .with_context(|| format!("reading model {}", a.model.display()))?;
    let data = load_path(&a.data, a.target)?.conform(train.schema())?;
    let schema = train.schema();
    eprintln!("error: {}", list.evaluate(&data));
    emit(&a.out, &cfg, |w| {
        writeln!(w, "pred")?;
        for row in 0..data.n_rows() {
            writeln!(
                w,
                "{}",
                schema.format_outcome(&list.predict_row(&data, row))
            )?;
        }
        Ok(())
    })
}

fn bench_cmd(a: BenchArgs, mut cfg: PipelineConfig, format: Format) -> Result<()> {
    apply_forest(&a.forest, &mut cfg);
    if let Some(r) = a.runs {
        cfg.bench_runs = r;
    }
    if let Some(f) = a.fraction {
        cfg.train_fraction = f;
    }
    if let Some(v) = a.max_depth {
        cfg.max_depth = limit(v, "max-depth")?;
    }
    if let Some(v) = a.cap {
        cfg.cap = limit(v, "cap")?;
    }
    let d = load(&a.data, &cfg)?;
    let report = bench(&d, &cfg)?;
    let p = report
        .p_value
        .map_or_else(|| "NA".to_string(), |p| format!("{p:.4}"));
    emit(&a.out, &cfg, |w| {
        match format {
            Format::Csv => {
                writeln!(w, "run,seed,stel_error,cart_error,stel_rules,conditions")?;
                for (i, r) in report.runs.iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        i + 1,
                        r.seed,
                        r.stel_error,
                        r.cart_error,
                        r.stel_rules,
                        r.conditions
                    )?;
                }
            }
            Format::Pretty => {
                writeln!(w, "runs                 {}", report.runs.len())?;
                writeln!(w, "mean STEL error      {:.4}", report.mean_stel)?;
                writeln!(w, "mean tree error      {:.4}", report.mean_cart)?;
                writeln!(w, "relative difference  {:.4}", report.relative_difference)?;
                writeln!(w, "paired t             {:.4}", report.t_statistic)?;
                writeln!(w, "p-value              {p}")?;
            }
        }
        Ok(())
    })?;
    eprintln!(
        "mean STEL error {:.4}, mean tree error {:.4}, relative difference {:.4}, t = {:.4}, p = {p}, {:.1?}",
        report.mean_stel,
        report.mean_cart,
        report.relative_difference,
        report.t_statistic,
        report.elapsed
    );
    Ok(())
}
