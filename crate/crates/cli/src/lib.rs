//! Subcommand implementations shared by the `chemlinker` and `molstring`
//! binaries.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use chemlinker::adapternet::{
    init_model, pretrain_decoder, read_checkpoint, train_adapter, write_checkpoint, Example, MolSyntax, MolTokenizer,
    TextTokenizer, TrainConfig,
};
use chemlinker::consensus::{background_report, default_sigma, ecr_scores, read_score_list, Direction, ScoreTable};
use chemlinker::datasetpipe::{
    compat_filter, filter_pubchem, normalize_description, read_records_file, sample_subset, write_records, CompatFilter,
    DatasetRecord, PubchemFilter,
};
use chemlinker::fingerprints::{tanimoto, FpSpec};
use chemlinker::metrics::{evaluate_pairs_with, read_pairs_tsv, EvalReport, Families};
use chemlinker::molstring::{decode_selfies, encode_selfies, parse_smiles, write_smiles};
use chemlinker::par::{self, Exec};
use chemlinker::sampler::{generate_unique_set, ConditionedModel, GenerationConfig, GenerationError};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Domain failures exit with 1; clap handles usage errors with 2.
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "chemlinker", version, about = "Molecule strings, fingerprints, text-conditioned generation and docking consensus")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Run data-parallel stages on one thread, in order.
    #[arg(long, global = true)]
    pub sequential: bool,
    /// Where to write the run manifest. Defaults to `<output>.manifest.json`
    /// for commands that write files; stdout-only commands write none unless
    /// this is given.
    #[arg(long, global = true, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    #[command(flatten)]
    Strings(StringCommand),
    /// Print a fingerprint as `<scheme>/<nbits>:<hex>`.
    Fp {
        /// circ, circN, path, pathN or keys
        scheme: String,
        smiles: String,
    },
    /// Exact match, validity and similarity means over generated/reference pairs.
    Eval(EvalArgs),
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train the adapter (and optionally pretrain the decoder) on CID/SMILES/description rows.
    Train(TrainArgs),
    /// Sample a unique, filtered molecule set for one text prompt.
    Generate(GenerateArgs),
    /// Exponential consensus ranking over several docking programs.
    Consensus(ConsensusArgs),
    /// Compare a candidate score set against background sets.
    Compare(CompareArgs),
}

#[derive(Subcommand, Debug, Clone)]
pub enum StringCommand {
    /// Print the canonical SMILES.
    Canon { smiles: String },
    /// Encode SMILES as SELFIES.
    SelfiesEncode { smiles: String },
    /// Decode SELFIES tokens to canonical SMILES.
    SelfiesDecode { tokens: String },
}

#[derive(Parser, Debug)]
#[command(name = "molstring", version, about = "Canonical SMILES and SELFIES conversion")]
pub struct MolstringCli {
    #[command(subcommand)]
    pub command: StringCommand,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Generated SMILES, one per line (paired with --ref by line).
    #[arg(long, requires = "reference", conflicts_with = "pairs")]
    pub pred: Option<PathBuf>,
    /// Reference SMILES, one per line.
    #[arg(long = "ref", id = "reference", requires = "pred")]
    pub reference: Option<PathBuf>,
    /// `generated<TAB>reference` TSV instead of --pred/--ref.
    #[arg(long, required_unless_present = "pred")]
    pub pairs: Option<PathBuf>,
    /// Print the report as JSON instead of a TSV line.
    #[arg(long)]
    pub json: bool,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-pair CSV (validity, exact, three similarities) for plotting.
    #[arg(long)]
    pub per_pair: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum DatasetCommand {
    /// Description-quality filter for PubChem-style rows.
    Filter(FilterArgs),
    /// Restrict rows to what a decoder's tokenizer can represent.
    Compat(CompatArgs),
    /// Seeded subset of rows, kept in input order.
    Sample(SampleArgs),
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Per-rule drop counts as JSON.
    #[arg(long)]
    pub report: PathBuf,
    /// Descriptions need strictly more words than this.
    #[arg(long, default_value_t = 30)]
    pub min_words: usize,
    /// Rows (TSV with header) or bare SMILES lines whose molecules are removed.
    #[arg(long, num_args = 1..)]
    pub exclude: Vec<PathBuf>,
    /// Case-insensitive phrases that drop a row; replaces the default list.
    #[arg(long = "banned")]
    pub banned: Vec<String>,
    /// Rewrite kept descriptions to start with "This molecule".
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Args, Debug)]
pub struct CompatArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Keep chirality and bond direction marks.
    #[arg(long)]
    pub keep_stereo: bool,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SyntaxArg {
    Smiles,
    Selfies,
}

impl From<SyntaxArg> for MolSyntax {
    fn from(s: SyntaxArg) -> Self {
        match s {
            SyntaxArg::Smiles => MolSyntax::Smiles,
            SyntaxArg::Selfies => MolSyntax::Selfies,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON training config; missing fields take defaults. Vocabulary sizes
    /// are always taken from the data.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rows `CID<TAB>SMILES<TAB>description` with a header line.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Molecule syntax of the decoder vocabulary.
    #[arg(long, value_enum, default_value = "smiles")]
    pub syntax: SyntaxArg,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Text prompt; the whole file is one description.
    #[arg(long)]
    pub prompt_file: PathBuf,
    /// Unique molecules wanted.
    #[arg(long, default_value_t = 100)]
    pub n: u64,
    /// JSON generation config; --n and --seed override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ConsensusArgs {
    /// Long CSV `molecule_id,program,score`.
    #[arg(long)]
    pub scores: PathBuf,
    /// JSON object mapping program to lower_is_better or higher_is_better.
    #[arg(long)]
    pub dirs: PathBuf,
    /// Defaults to max(1, 5% of the molecule count).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Output CSV `molecule_id,ecr`; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Candidate scores, one per line (last column of CSV lines).
    #[arg(long)]
    pub candidates: PathBuf,
    /// Background set as NAME=FILE; repeatable.
    #[arg(long = "background", value_parser = parse_named, required = true)]
    pub backgrounds: Vec<(String, PathBuf)>,
    /// Score of a reference ligand to place within each background.
    #[arg(long)]
    pub probe: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_named(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected NAME=FILE")?;
    if name.is_empty() {
        return Err("empty name".into());
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

#[derive(Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub input_hashes: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub wall_time_s: f64,
    pub threads: Option<usize>,
}

struct Run {
    exec: Exec,
    threads: Option<usize>,
    inputs: Vec<PathBuf>,
    config: serde_json::Value,
    seed: Option<u64>,
    primary_out: Option<PathBuf>,
    stdout: String,
}

impl Run {
    fn new(exec: Exec, threads: Option<usize>) -> Self {
        Run { exec, threads, inputs: vec![], config: serde_json::Value::Null, seed: None, primary_out: None, stdout: String::new() }
    }

    fn read(&mut self, path: &Path) -> Result<String> {
        self.inputs.push(path.to_path_buf());
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }

    fn read_bytes(&mut self, path: &Path) -> Result<Vec<u8>> {
        self.inputs.push(path.to_path_buf());
        fs::read(path).with_context(|| format!("reading {}", path.display()))
    }

    fn write(&mut self, path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
        if self.primary_out.is_none() {
            self.primary_out = Some(path.to_path_buf());
        }
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
    }

    fn say(&mut self, line: impl AsRef<str>) {
        self.stdout.push_str(line.as_ref());
        self.stdout.push('\n');
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest_path(explicit: Option<&Path>, out: Option<&Path>) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| {
        out.map(|o| {
            let mut name = o.file_name().unwrap_or_default().to_os_string();
            name.push(".manifest.json");
            o.with_file_name(name)
        })
    })
}

/// Parses argv, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => return clap_exit(e),
    };
    let threads = par::configure_threads_from_env();
    let exec = if cli.global.sequential { Exec::Sequential } else { Exec::Parallel };
    let name = subcommand_name(&cli.command);
    let started = Instant::now();
    let mut run = Run::new(exec, threads);
    let outcome = dispatch(&cli.command, &mut run);
    print!("{}", run.stdout);
    if let Some(path) = manifest_path(cli.global.manifest.as_deref(), run.primary_out.as_deref()) {
        let mut hashes = BTreeMap::new();
        for p in &run.inputs {
            if let Ok(bytes) = fs::read(p) {
                hashes.insert(p.display().to_string(), sha256_hex(&bytes));
            }
        }
        let m = RunManifest {
            subcommand: name,
            config: run.config.clone(),
            input_hashes: hashes,
            seed: run.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s: started.elapsed().as_secs_f64(),
            threads: run.threads,
        };
        let text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        if let Err(e) = fs::write(&path, text + "\n") {
            eprintln!("error: writing manifest {}: {e}", path.display());
            return EXIT_DOMAIN;
        }
    }
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_DOMAIN
        }
    }
}

/// Entry point for the `molstring` binary.
pub fn molstring_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match MolstringCli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => return clap_exit(e),
    };
    match strings(&cli.command) {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_DOMAIN
        }
    }
}

fn clap_exit(e: clap::Error) -> i32 {
    let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
    let _ = e.print();
    code
}

fn subcommand_name(c: &Command) -> String {
    match c {
        Command::Strings(StringCommand::Canon { .. }) => "canon",
        Command::Strings(StringCommand::SelfiesEncode { .. }) => "selfies-encode",
        Command::Strings(StringCommand::SelfiesDecode { .. }) => "selfies-decode",
        Command::Fp { .. } => "fp",
        Command::Eval(_) => "eval",
        Command::Dataset(DatasetCommand::Filter(_)) => "dataset filter",
        Command::Dataset(DatasetCommand::Compat(_)) => "dataset compat",
        Command::Dataset(DatasetCommand::Sample(_)) => "dataset sample",
        Command::Train(_) => "train",
        Command::Generate(_) => "generate",
        Command::Consensus(_) => "consensus",
        Command::Compare(_) => "compare",
    }
    .to_string()
}

fn dispatch(c: &Command, run: &mut Run) -> Result<()> {
    match c {
        Command::Strings(s) => {
            run.config = serde_json::json!({ "input": match s {
                StringCommand::Canon { smiles } | StringCommand::SelfiesEncode { smiles } => smiles,
                StringCommand::SelfiesDecode { tokens } => tokens,
            }});
            let line = strings(s)?;
            run.say(line);
            Ok(())
        }
        Command::Fp { scheme, smiles } => {
            run.config = serde_json::json!({ "scheme": scheme, "smiles": smiles });
            let spec = FpSpec::parse(scheme).ok_or_else(|| anyhow!("unknown fingerprint scheme {scheme:?}"))?;
            let m = parse_smiles(smiles).with_context(|| format!("parsing {smiles:?}"))?;
            run.say(spec.compute(&m)?.to_hex());
            Ok(())
        }
        Command::Eval(a) => eval(a, run),
        Command::Dataset(d) => dataset(d, run),
        Command::Train(a) => train(a, run),
        Command::Generate(a) => generate(a, run),
        Command::Consensus(a) => consensus(a, run),
        Command::Compare(a) => compare(a, run),
    }
}

fn strings(c: &StringCommand) -> Result<String> {
    Ok(match c {
        StringCommand::Canon { smiles } => {
            let m = parse_smiles(smiles).with_context(|| format!("parsing {smiles:?}"))?;
            write_smiles(&m, true)
        }
        StringCommand::SelfiesEncode { smiles } => {
            let m = parse_smiles(smiles).with_context(|| format!("parsing {smiles:?}"))?;
            encode_selfies(&m)?.to_string()
        }
        StringCommand::SelfiesDecode { tokens } => write_smiles(&decode_selfies(tokens)?, true),
    })
}

fn lines(text: &str) -> Vec<String> {
    text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect()
}

fn eval(a: &EvalArgs, run: &mut Run) -> Result<()> {
    run.config = serde_json::json!({ "json": a.json });
    let pairs: Vec<(String, String)> = match (&a.pred, &a.reference, &a.pairs) {
        (Some(p), Some(r), _) => {
            let (g, r) = (lines(&run.read(p)?), lines(&run.read(r)?));
            if g.len() != r.len() {
                return Err(anyhow!("{} generated lines but {} reference lines", g.len(), r.len()));
            }
            g.into_iter().zip(r).collect()
        }
        (_, _, Some(t)) => read_pairs_tsv(&run.read(t)?).map_err(|e| anyhow!(e))?,
        _ => unreachable!("clap enforces one input form"),
    };
    let families = Families::default();
    let report = evaluate_pairs_with(run.exec, &families, &pairs)?;
    let text = render_eval(&report, a.json);
    if let Some(out) = &a.out {
        run.write(out, format!("{text}\n"))?;
    }
    if let Some(path) = &a.per_pair {
        let rows = par::map(run.exec, &pairs, |(g, r)| per_pair_row(&families, g, r));
        let mut csv = String::from("index,valid,exact,maccs_fts,rdk_fts,morgan_fts\n");
        for (i, row) in rows.iter().enumerate() {
            csv.push_str(&format!("{i},{row}\n"));
        }
        run.write(path, csv)?;
    }
    run.say(text);
    Ok(())
}

fn render_eval(r: &EvalReport, json: bool) -> String {
    if json {
        serde_json::to_string(r).expect("report serializes")
    } else {
        format!("{}\n{}", EvalReport::TSV_HEADER, r.to_tsv())
    }
}

fn per_pair_row(f: &Families, generated: &str, reference: &str) -> String {
    let (Ok(g), Ok(r)) = (parse_smiles(generated), parse_smiles(reference)) else {
        return "0,0,,,".to_string();
    };
    let sim = |spec: &FpSpec| {
        let (a, b) = (spec.compute(&g).expect("default parameters"), spec.compute(&r).expect("default parameters"));
        tanimoto(&a, &b).expect("same scheme")
    };
    let exact = write_smiles(&g, true) == write_smiles(&r, true);
    format!("1,{},{:.6},{:.6},{:.6}", u8::from(exact), sim(&f.maccs), sim(&f.rdk), sim(&f.morgan))
}

fn load_rows(run: &mut Run, path: &Path) -> Result<Vec<DatasetRecord>> {
    run.inputs.push(path.to_path_buf());
    Ok(read_records_file(path)?)
}

fn records_tsv(records: &[DatasetRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_records(&mut buf, records).expect("writing to memory");
    buf
}

fn dataset(c: &DatasetCommand, run: &mut Run) -> Result<()> {
    match c {
        DatasetCommand::Filter(a) => {
            let rows = load_rows(run, &a.input)?;
            let mut cfg = PubchemFilter { min_words: a.min_words, ..PubchemFilter::default() };
            if !a.banned.is_empty() {
                cfg.banned_phrases = a.banned.clone();
            }
            for path in &a.exclude {
                let text = run.read(path)?;
                cfg = cfg.exclude_smiles(exclusion_smiles(&text));
            }
            run.config = serde_json::json!({
                "min_words": cfg.min_words, "banned_phrases": cfg.banned_phrases,
                "exclude_files": a.exclude, "excluded_molecules": cfg.exclude.len(), "normalize": a.normalize,
            });
            let (mut kept, report) = filter_pubchem(&rows, &cfg, run.exec);
            if a.normalize {
                for r in &mut kept {
                    r.description = normalize_description(&r.description);
                }
            }
            run.write(&a.out, records_tsv(&kept))?;
            run.write(&a.report, serde_json::to_string_pretty(&report)? + "\n")?;
            run.say(format!("kept {} of {}", report.kept, report.input));
        }
        DatasetCommand::Compat(a) => {
            let rows = load_rows(run, &a.input)?;
            let cfg = CompatFilter { strip_stereo: !a.keep_stereo, ..CompatFilter::default() };
            run.config = serde_json::json!({ "strip_stereo": cfg.strip_stereo });
            let (kept, report) = compat_filter(&rows, &cfg, run.exec);
            run.write(&a.out, records_tsv(&kept))?;
            run.write(&a.report, serde_json::to_string_pretty(&report)? + "\n")?;
            run.say(format!("kept {} of {}", report.kept, report.input));
        }
        DatasetCommand::Sample(a) => {
            let rows = load_rows(run, &a.input)?;
            run.config = serde_json::json!({ "n": a.n });
            run.seed = Some(a.seed);
            let subset = sample_subset(&rows, a.n, a.seed)?;
            run.write(&a.out, records_tsv(&subset))?;
        }
    }
    Ok(())
}

/// SMILES from a dataset TSV (second column after its header) or from bare
/// one-per-line text.
fn exclusion_smiles(text: &str) -> Vec<&str> {
    let mut it = text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.trim().is_empty()).peekable();
    let tabular = it.peek().is_some_and(|h| h.starts_with("CID\t"));
    if tabular {
        it.skip(1).filter_map(|l| l.split('\t').nth(1)).map(str::trim).collect()
    } else {
        it.map(|l| l.split_whitespace().next().unwrap_or("")).collect()
    }
}

fn train(a: &TrainArgs, run: &mut Run) -> Result<()> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => serde_json::from_str(&run.read(p)?).context("parsing training config")?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let rows = load_rows(run, &a.data)?;
    if rows.is_empty() {
        return Err(anyhow!("no training rows"));
    }
    let syntax = MolSyntax::from(a.syntax);
    let text = TextTokenizer::fit(rows.iter().map(|r| r.description.as_str()));
    let mol = MolTokenizer::fit(syntax, rows.iter().map(|r| r.smiles.as_str()));
    cfg.model.text_vocab = text.vocab.len();
    cfg.model.mol_vocab = mol.vocab.len();
    let data = rows
        .iter()
        .map(|r| {
            let m = mol.encode(&r.smiles).with_context(|| format!("CID {}", r.cid))?;
            Ok(Example { text: text.encode(&r.description), mol: m })
        })
        .collect::<Result<Vec<_>>>()?;
    run.config = serde_json::to_value(&cfg)?;
    run.seed = Some(cfg.seed);

    let mut params = init_model(&cfg.model, cfg.seed)?;
    if cfg.pretrain_steps > 0 {
        let corpus: Vec<Vec<u32>> = data.iter().map(|e| e.mol.clone()).collect();
        params = pretrain_decoder(&params, &corpus, &cfg, cfg.pretrain_steps)?.0;
    }
    let (params, losses) = train_adapter(&params, &data, &cfg)?;
    let extra = serde_json::json!({ "text_tokenizer": text, "mol_tokenizer": mol, "train": cfg });
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &params, &extra)?;
    run.write(&a.out, buf)?;
    if let Some(last) = losses.last() {
        run.say(format!("steps {} final loss {last:.4}", losses.len()));
    }
    Ok(())
}

fn generate(a: &GenerateArgs, run: &mut Run) -> Result<()> {
    let bytes = run.read_bytes(&a.model)?;
    let (params, extra) = read_checkpoint(&mut bytes.as_slice())?;
    let text: TextTokenizer = serde_json::from_value(extra["text_tokenizer"].clone()).context("checkpoint has no text tokenizer")?;
    let mol: MolTokenizer = serde_json::from_value(extra["mol_tokenizer"].clone()).context("checkpoint has no molecule tokenizer")?;
    let mut cfg: GenerationConfig = match &a.config {
        Some(p) => serde_json::from_str(&run.read(p)?).context("parsing generation config")?,
        None => GenerationConfig::default(),
    };
    cfg.target_unique = a.n;
    if let Some(s) = a.seed {
        cfg.base_seed = s;
    }
    let prompt = run.read(&a.prompt_file)?;
    let model = ConditionedModel::new(&params, &mol, &text.encode(prompt.trim()))?;
    cfg.max_len = cfg.max_len.min(model.max_len());
    run.config = serde_json::to_value(&cfg)?;
    run.seed = Some(cfg.base_seed);
    let (result, run_out) = match generate_unique_set(&model, &cfg) {
        Ok(r) => (Ok(()), r),
        Err(GenerationError::TargetUnreached { target, partial }) => {
            let got = partial.molecules.len();
            (Err(anyhow!("reached {got} of {target} molecules at max temperature")), *partial)
        }
        Err(e) => return Err(e.into()),
    };
    let mut smi = String::new();
    for m in &run_out.molecules {
        smi.push_str(m);
        smi.push('\n');
    }
    run.write(&a.out, smi)?;
    let stats = serde_json::json!({
        "stats": run_out.stats,
        "success_rate": run_out.stats.success_rate(),
        "temperatures": run_out.temperatures,
    });
    run.write(&a.stats, serde_json::to_string_pretty(&stats)? + "\n")?;
    run.say(format!("{} molecules from {} samples", run_out.molecules.len(), run_out.stats.sample));
    result
}

fn consensus(a: &ConsensusArgs, run: &mut Run) -> Result<()> {
    let dirs: HashMap<String, Direction> = serde_json::from_str(&run.read(&a.dirs)?).context("parsing directions")?;
    let table = ScoreTable::from_csv(run.read(&a.scores)?.as_bytes(), &dirs)?;
    let sigma = a.sigma.unwrap_or_else(|| default_sigma(table.molecules.len()));
    run.config = serde_json::json!({ "sigma": sigma, "directions": dirs.iter().collect::<BTreeMap<_, _>>() });
    let ecr = ecr_scores(&table, sigma, run.exec)?;
    let mut csv = String::from("molecule_id,ecr\n");
    for (m, e) in table.molecules.iter().zip(&ecr) {
        csv.push_str(&format!("{m},{e:.12e}\n"));
    }
    match &a.out {
        Some(p) => run.write(p, csv)?,
        None => run.say(csv.trim_end()),
    }
    Ok(())
}

fn compare(a: &CompareArgs, run: &mut Run) -> Result<()> {
    let candidates = read_score_list(run.read(&a.candidates)?.as_bytes())?;
    let mut backgrounds = BTreeMap::new();
    for (name, path) in &a.backgrounds {
        backgrounds.insert(name.clone(), read_score_list(run.read(path)?.as_bytes())?);
    }
    run.config = serde_json::json!({ "probe": a.probe, "backgrounds": a.backgrounds.iter().map(|b| &b.0).collect::<Vec<_>>() });
    let report = background_report(&candidates, &backgrounds, a.probe)?;
    let text = serde_json::to_string_pretty(&report)?;
    match &a.out {
        Some(p) => run.write(p, text + "\n")?,
        None => run.say(text),
    }
    Ok(())
}
