//! `matalign` command line: data generation through evaluation and reporting.

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use matalign_core::checkpoint::{load_checkpoint, save_checkpoint};
use matalign_core::dataset::{Condition, Dataset, Split};
use matalign_core::descriptor::color_histogram;
use matalign_core::encoder::{embed_material, embed_part, init_params, EncoderConfig};
use matalign_core::format::{read_matrix, write_atomic, write_matrix};
use matalign_core::image::{Image, Mask};
use matalign_core::maskcrop::{crop, largest_inscribed_rectangle};
use matalign_core::retrieval::{
    ablate, ablation_csv, ablation_markdown, evaluate, metrics_csv, metrics_markdown,
    AblationRow, BaselineMode, Method, MetricsRow, MaterialIndex,
};
use matalign_core::subspace::{thin, KdTree};
use matalign_core::synthdata::{
    generate, load_manifest, read_split, write_split, SynthConfig, MANIFEST_FILE, SPLIT_FILE,
};
use matalign_core::tensor::Tensor;
use matalign_core::trainer::{
    history_csv, history_pairs, split_by_object, train_until, TrainConfig, TrainState,
};
use matalign_core::{Error, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.mcpt";
pub const STATE_FILE: &str = "state.mcpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_MD: &str = "metrics.md";
pub const RANKINGS_CSV: &str = "rankings.csv";
pub const ABLATION_CSV: &str = "ablation.csv";
pub const ABLATION_MD: &str = "ablation.md";
pub const REPORT_MD: &str = "report.md";
pub const TREE_FILE: &str = "tree.mceb";

#[derive(Parser, Debug)]
#[command(name = "matalign", version, about = "Part-to-material retrieval pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset (manifest, view grids, part descriptors, split)
    Gen(GenArgs),
    /// Masked color histograms for every image/mask pair
    Descriptors(DescriptorArgs),
    /// Crop an image to the largest axis-aligned rectangle inside a mask
    Crop(CropArgs),
    /// Object-level train/test split
    Split(SplitArgs),
    /// Train the encoders
    Train(TrainArgs),
    /// Top-1/Top-5 retrieval metrics
    Eval(EvalArgs),
    /// Retrain on view sub-grids and compare
    Ablate(AblateArgs),
    /// Descriptor-space membership structure
    #[command(subcommand)]
    Subspace(SubspaceCommand),
    /// Merge metrics CSVs into one markdown report
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
    /// JSON generator config; unspecified fields take defaults
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DescriptorArgs {
    /// Directory of binary PPM images
    #[arg(long)]
    images: PathBuf,
    /// Directory of PGM masks named like the images
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CropArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Output PPM file
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Manifest file or the directory holding manifest.json
    #[arg(long)]
    data: PathBuf,
    /// Split file overriding the manifest's split
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    test_fraction: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    seed: u64,
    /// JSON run config: {"train": {...}, "encoder": {...}}
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Training state to continue from
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    V1,
    V2,
    Matclip,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Methods to evaluate (repeatable); defaults to all three
    #[arg(long, value_enum)]
    mode: Vec<Mode>,
    /// Trained checkpoint, required for matclip
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Ranking depth written to rankings.csv
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated SHAPESxENVS sub-grids, e.g. 1x1,3x1,6x7
    #[arg(long)]
    subsets: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum SubspaceCommand {
    /// Build a tree from an MCEB point matrix
    Build {
        #[arg(long)]
        points: PathBuf,
        /// JSON array of point ids; defaults to row numbers
        #[arg(long)]
        ids: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nearest stored point and membership for each query row
    Query {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        radius: f32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy thinning of an MCEB point matrix
    Thin {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        radius: f32,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Metrics or ablation CSV files
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Training-side JSON config.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// `d_in` and `n_views` are taken from the dataset.
    pub encoder: EncoderConfig,
}

/// Output directory that forgets everything it wrote if the command fails.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
            dirs: Vec::new(),
        })
    }

    /// Single output file; its parent directory is not managed.
    fn single(path: &Path) -> Self {
        Self {
            dir: path.parent().unwrap_or(Path::new(".")).to_path_buf(),
            created_dir: false,
            files: vec![path.to_path_buf()],
            dirs: Vec::new(),
        }
    }

    fn file(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn subdir(&mut self, name: &str) {
        let p = self.dir.join(name);
        if !p.exists() {
            self.dirs.push(p);
        }
    }

    fn discard(self) {
        if self.created_dir {
            let _ = fs::remove_dir_all(&self.dir);
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        for d in &self.dirs {
            let _ = fs::remove_dir_all(d);
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> Error {
    Error::io(path.display().to_string(), e)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::SchemaError(format!("{}: {e}", path.display())))
}

fn manifest_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(MANIFEST_FILE)
    } else {
        data.to_path_buf()
    }
}

fn load_data(args: &DataArgs) -> Result<Dataset> {
    let (_, mut ds) = load_manifest(&manifest_path(&args.data))?;
    if let Some(split) = &args.split {
        ds.apply_split(&read_split(split)?)?;
    }
    Ok(ds)
}

fn run_config(path: Option<&Path>, seed: u64) -> Result<RunConfig> {
    let mut cfg: RunConfig = match path {
        Some(p) => read_json(p)?,
        None => RunConfig::default(),
    };
    cfg.train.seed = seed;
    cfg.train.validate()?;
    Ok(cfg)
}

fn encoder_for(cfg: &RunConfig, ds: &Dataset) -> EncoderConfig {
    EncoderConfig {
        d_in: ds.d_in,
        n_views: ds.n_views(),
        ..cfg.encoder
    }
}

fn cmd_gen(args: &GenArgs, out: &mut Outputs) -> Result<()> {
    let mut cfg: SynthConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    cfg.seed = args.seed;
    out.subdir("views");
    for f in [MANIFEST_FILE, "parts.mceb", SPLIT_FILE] {
        out.file(f);
    }
    let manifest = generate(&cfg, &out.dir)?;
    println!(
        "generated {} materials, {} parts",
        manifest.materials.len(),
        manifest.parts.len()
    );
    Ok(())
}

fn cmd_descriptors(args: &DescriptorArgs, out: &mut Outputs) -> Result<()> {
    let mut names: Vec<PathBuf> = fs::read_dir(&args.images)
        .map_err(|e| io_err(&args.images, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::InvalidConfig(format!("no .ppm images in {}", args.images.display())));
    }
    let mut ids = Vec::with_capacity(names.len());
    let mut data = Vec::new();
    for img_path in &names {
        let stem = img_path.file_stem().unwrap_or_default().to_string_lossy().to_string();
        let mask_path = args.masks.join(format!("{stem}.pgm"));
        let image = Image::read_ppm(img_path)?;
        let mask = Mask::read_pgm(&mask_path)?;
        let h: Vec<f32> = color_histogram(&image, &mask)
            .map_err(|e| Error::InvalidConfig(format!("{stem}: {e}")))?;
        data.extend(h);
        ids.push(stem);
    }
    let n = ids.len();
    let m = Tensor::from_vec(&[n, data.len() / n], data)?;
    write_matrix(&out.file("descriptors.mceb"), &m)?;
    let json = serde_json::to_vec_pretty(&ids).map_err(|e| Error::SchemaError(e.to_string()))?;
    write_atomic(&out.file("descriptors.ids.json"), &json)?;
    println!("wrote {n} descriptors");
    Ok(())
}

fn cmd_crop(args: &CropArgs) -> Result<()> {
    let mask = Mask::read_pgm(&args.mask)?;
    let image = Image::read_ppm(&args.image)?;
    let rect = largest_inscribed_rectangle(&mask)?;
    crop(&image, rect)?.write_ppm(&args.out)?;
    println!("{} {} {} {}", rect.x, rect.y, rect.w, rect.h);
    Ok(())
}

fn cmd_split(args: &SplitArgs, out: &mut Outputs) -> Result<()> {
    let (_, ds) = load_manifest(&manifest_path(&args.data))?;
    let split = split_by_object(&ds, args.test_fraction, args.seed)?;
    write_split(&split, &out.file(SPLIT_FILE))?;
    println!(
        "{} train objects, {} test objects",
        split.count(Split::Train),
        split.count(Split::Test)
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs, out: &mut Outputs) -> Result<()> {
    let cfg = run_config(args.config.as_deref(), args.seed)?;
    let ds = load_data(&args.data)?;
    let enc = encoder_for(&cfg, &ds);
    let mut state = match &args.resume {
        Some(p) => {
            let s = TrainState::load(p, cfg.train.adam())?;
            if s.params.config != enc {
                return Err(Error::ShapeMismatch(format!(
                    "resume state encoder {:?} does not match run {:?}",
                    s.params.config, enc
                )));
            }
            s
        }
        None => TrainState::new(&cfg.train, init_params(enc, args.seed)?),
    };
    train_until(&cfg.train, &ds, &mut state, cfg.train.steps, |_, _| {})?;
    save_checkpoint(&state.params, &out.file(CHECKPOINT_FILE))?;
    state.save(&out.file(STATE_FILE))?;
    write_text(&out.file(HISTORY_FILE), &history_csv(&history_pairs(&state.history)))?;
    match state.history.last() {
        Some(l) => println!("trained to step {}, last loss {l:.4}", state.step()),
        None => println!("trained to step 0"),
    }
    Ok(())
}

fn cmd_eval(args: &EvalArgs, out: &mut Outputs) -> Result<()> {
    let ds = load_data(&args.data)?;
    let modes = if args.mode.is_empty() {
        vec![Mode::Matclip, Mode::V1, Mode::V2]
    } else {
        args.mode.clone()
    };
    let params = match (&args.checkpoint, modes.contains(&Mode::Matclip)) {
        (Some(p), _) => Some(load_checkpoint(p)?),
        (None, true) => {
            return Err(Error::InvalidConfig("matclip evaluation needs --checkpoint".into()))
        }
        (None, false) => None,
    };
    if args.k == 0 {
        return Err(Error::InvalidConfig("--k must be at least 1".into()));
    }
    let methods: Vec<Method<'_>> = modes
        .iter()
        .map(|m| match m {
            Mode::Matclip => Method::MatClip(params.as_ref().expect("checked above")),
            Mode::V1 => Method::Baseline(BaselineMode::V1Max),
            Mode::V2 => Method::Baseline(BaselineMode::V2Mean),
        })
        .collect();
    let mut rows: Vec<MetricsRow> = Vec::new();
    for method in &methods {
        for condition in Condition::ALL {
            if ds.parts_in(Split::Test, condition).next().is_some() {
                rows.push(evaluate(*method, &ds, Split::Test, condition)?);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::InvalidConfig("dataset has no test parts".into()));
    }
    write_text(&out.file(METRICS_CSV), &metrics_csv(&rows))?;
    let md = metrics_markdown(&rows);
    write_text(&out.file(METRICS_MD), &md)?;
    if let Some(p) = &params {
        write_text(&out.file(RANKINGS_CSV), &rankings_csv(p, &ds, args.k)?)?;
    }
    print!("{md}");
    Ok(())
}

/// Top-k learned ranking of every test part.
fn rankings_csv(params: &matalign_core::Params, ds: &Dataset, k: usize) -> Result<String> {
    let pairs = ds
        .materials
        .iter()
        .map(|m| Ok((m.material_id.clone(), embed_material(params, m)?)))
        .collect::<Result<Vec<_>>>()?;
    let index = MaterialIndex::build(pairs)?;
    let mut out = String::from("sample_id,condition,rank,material_id,score\n");
    for p in ds.parts.iter().filter(|p| p.split == Split::Test) {
        for (r, (id, score)) in index.rank(&embed_part(params, p)?, k)?.iter().enumerate() {
            out.push_str(&format!("{},{},{},{id},{score:.6}\n", p.sample_id, p.condition.key(), r + 1));
        }
    }
    Ok(out)
}

fn parse_subsets(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|s| {
            let (a, b) = s
                .trim()
                .split_once('x')
                .ok_or_else(|| Error::InvalidConfig(format!("subset {s:?} is not SHAPESxENVS")))?;
            let parse = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::InvalidConfig(format!("subset {s:?} is not SHAPESxENVS")))
            };
            Ok((parse(a)?, parse(b)?))
        })
        .collect()
}

fn cmd_ablate(args: &AblateArgs, out: &mut Outputs) -> Result<()> {
    let cfg = run_config(args.config.as_deref(), args.seed)?;
    let ds = load_data(&args.data)?;
    let subsets = parse_subsets(&args.subsets)?;
    let rows: Vec<AblationRow> = ablate(&cfg.train, encoder_for(&cfg, &ds), args.seed, &ds, &subsets)?;
    write_text(&out.file(ABLATION_CSV), &ablation_csv(&rows))?;
    let md = ablation_markdown(&rows);
    write_text(&out.file(ABLATION_MD), &md)?;
    print!("{md}");
    Ok(())
}

fn cmd_subspace(cmd: &SubspaceCommand, out: &mut Outputs) -> Result<()> {
    match cmd {
        SubspaceCommand::Build { points, ids, .. } => {
            let m = read_matrix(points)?;
            let ids: Vec<String> = match ids {
                Some(p) => read_json(p)?,
                None => (0..m.rows()).map(|i| i.to_string()).collect(),
            };
            if ids.len() != m.rows() {
                return Err(Error::ShapeMismatch(format!("{} ids for {} points", ids.len(), m.rows())));
            }
            let tree = KdTree::build(ids.into_iter().enumerate().map(|(i, id)| (id, m.row(i).to_vec())).collect())?;
            let path = out.file(TREE_FILE);
            out.file(&format!("{TREE_FILE}.ids.json"));
            tree.save(&path)?;
            println!("built tree over {} points, depth {}", tree.len(), tree.depth());
        }
        SubspaceCommand::Query {
            tree, queries, radius, ..
        } => {
            let tree = KdTree::<f32>::load(tree)?;
            let q = read_matrix(queries)?;
            let mut csv = String::from("row,nearest_id,distance,contains\n");
            for i in 0..q.rows() {
                let (id, d) = tree.nearest(q.row(i))?;
                let inside = tree.contains(q.row(i), *radius)?;
                csv.push_str(&format!("{i},{id},{d},{inside}\n"));
            }
            write_text(&out.file("query.csv"), &csv)?;
        }
        SubspaceCommand::Thin { points, radius, .. } => {
            let m = read_matrix(points)?;
            let rows: Vec<Vec<f32>> = (0..m.rows()).map(|i| m.row(i).to_vec()).collect();
            let kept = thin(&rows, *radius)?;
            let data: Vec<f32> = kept.iter().flat_map(|&i| rows[i].clone()).collect();
            write_matrix(&out.file("thinned.mceb"), &Tensor::from_vec(&[kept.len(), m.cols()], data)?)?;
            let csv: String = std::iter::once("index\n".to_string())
                .chain(kept.iter().map(|i| format!("{i}\n")))
                .collect();
            write_text(&out.file("kept.csv"), &csv)?;
            println!("kept {} of {} points", kept.len(), rows.len());
        }
    }
    Ok(())
}

fn parse_metrics_csv(text: &str, path: &Path) -> Result<Vec<MetricsRow>> {
    let bad = |line: usize| Error::SchemaError(format!("{}: malformed metrics row {line}", path.display()));
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 5 {
                return Err(bad(i + 1));
            }
            Ok(MetricsRow {
                method: f[0].to_string(),
                condition: Condition::from_key(f[1]).ok_or_else(|| bad(i + 1))?,
                top1: f[2].parse().map_err(|_| bad(i + 1))?,
                top5: f[3].parse().map_err(|_| bad(i + 1))?,
                n: f[4].parse().map_err(|_| bad(i + 1))?,
            })
        })
        .collect()
}

fn cmd_report(args: &ReportArgs, out: &mut Outputs) -> Result<()> {
    let mut metrics = Vec::new();
    let mut ablations = Vec::new();
    for p in &args.inputs {
        let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        match text.lines().next().unwrap_or_default() {
            "method,condition,top1,top5,n" => metrics.extend(parse_metrics_csv(&text, p)?),
            "label,shapes,envs,top1,top5" => ablations.push(text),
            other => {
                return Err(Error::SchemaError(format!(
                    "{}: unrecognised CSV header {other:?}",
                    p.display()
                )))
            }
        }
    }
    let mut md = String::new();
    if !metrics.is_empty() {
        md.push_str("## Retrieval accuracy (%)\n\n");
        md.push_str(&metrics_markdown(&metrics));
    }
    for text in ablations {
        let rows = text
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let (label, rest) = l
                    .strip_prefix('"')
                    .and_then(|l| l.split_once("\","))
                    .ok_or_else(|| Error::SchemaError(format!("malformed ablation row {l:?}")))?;
                let f: Vec<&str> = rest.split(',').collect();
                let num = |i: usize| -> Result<f64> {
                    f.get(i)
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| Error::SchemaError(format!("malformed ablation row {l:?}")))
                };
                Ok(AblationRow {
                    label: label.to_string(),
                    shapes: num(0)? as usize,
                    envs: num(1)? as usize,
                    top1: num(2)?,
                    top5: num(3)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if !md.is_empty() {
            md.push('\n');
        }
        md.push_str("## View-grid ablation (%)\n\n");
        md.push_str(&ablation_markdown(&rows));
    }
    write_text(&out.file(REPORT_MD), &md)?;
    print!("{md}");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let (out, result) = match &cli.command {
        Command::Crop(a) => {
            let out = Outputs::single(&a.out);
            (out, cmd_crop(a))
        }
        cmd => {
            let dir = match cmd {
                Command::Gen(a) => &a.out,
                Command::Descriptors(a) => &a.out,
                Command::Split(a) => &a.out,
                Command::Train(a) => &a.out,
                Command::Eval(a) => &a.out,
                Command::Ablate(a) => &a.out,
                Command::Report(a) => &a.out,
                Command::Subspace(
                    SubspaceCommand::Build { out, .. }
                    | SubspaceCommand::Query { out, .. }
                    | SubspaceCommand::Thin { out, .. },
                ) => out,
                Command::Crop(_) => unreachable!(),
            };
            let mut out = Outputs::new(dir)?;
            let r = match cmd {
                Command::Gen(a) => cmd_gen(a, &mut out),
                Command::Descriptors(a) => cmd_descriptors(a, &mut out),
                Command::Split(a) => cmd_split(a, &mut out),
                Command::Train(a) => cmd_train(a, &mut out),
                Command::Eval(a) => cmd_eval(a, &mut out),
                Command::Ablate(a) => cmd_ablate(a, &mut out),
                Command::Subspace(s) => cmd_subspace(s, &mut out),
                Command::Report(a) => cmd_report(a, &mut out),
                Command::Crop(_) => unreachable!(),
            };
            (out, r)
        }
    };
    if result.is_err() {
        out.discard();
    }
    result
}

/// Runs one invocation; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            1
        }
    }
}
