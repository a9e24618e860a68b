//! Command-line front end: soup sampling utilities that dump raw data, and
//! runners for the registered statistical experiments. Experiment commands
//! exit 0 only when every asserted criterion passes (1 = a criterion failed,
//! 2 = the run itself errored), so they slot into scripts and CI directly.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};

use loopsoup::brownian::{
    killing_functional, sample_brownian_soup, BrownianSoup, BrownianSoupConfig,
};
use loopsoup::geometry::{build_clusters, point_set_diameter, Pt};
use loopsoup::harness::{run_experiment, run_replicas, RunConfig, StatReport};
use loopsoup::harness::{Check, CriterionReport, EXPERIMENTS};
use loopsoup::lattice::{green_function, killing_from_mass, precision_matrix, Domain};
use loopsoup::occupation::occupation_field;
use loopsoup::rng::StreamKey;
use loopsoup::soup::{dump_soup, sample_soup};

#[derive(Parser)]
#[command(
    name = "loopsoup",
    version,
    about = "Random-walk and Brownian loop soups: samplers, couplings, and statistical checks"
)]
struct Cli {
    /// Run-config TOML; defaults to the subcommand's pinned configuration
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override the config's seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's replica count
    #[arg(long, global = true)]
    replicas: Option<u64>,
    /// Worker threads, 0 = one per core; results are identical at any setting
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Directory for report.json / raw CSV output
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample one lattice loop soup and dump it as JSON
    SampleSoup,
    /// Sample one Brownian loop soup; per-loop stats as CSV
    BrownianSoup,
    /// Occupation-field means against the Green-function diagonal
    Occupation,
    /// Squared-field vs occupation covariance checks (iso-covariance)
    GffVerify,
    /// Cluster decomposition of one Brownian soup as CSV
    Clusters {
        /// Raster resolution for cluster adjacency
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
    },
    /// Carpet box-counting dimension against the exponent formula
    CarpetDim,
    /// Vacant-set crossing probabilities across intensity and span
    Crossing,
    /// Laplace-transform identity for the occupation field
    Laplace,
    /// Rescaled-walk vs Brownian soup comparison across lattice scales
    Scaling,
    /// Survival dichotomy for near-critical mass profiles
    Dichotomy,
    /// Run a registered experiment end to end; no name lists the registry
    Report {
        /// Registered experiment name
        experiment: Option<String>,
    },
}

fn main() {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn dispatch(cli: &Cli) -> anyhow::Result<bool> {
    match &cli.cmd {
        Cmd::SampleSoup => sample_soup_cmd(cli),
        Cmd::BrownianSoup => brownian_soup_cmd(cli),
        Cmd::Occupation => occupation_cmd(cli),
        Cmd::GffVerify => run_named(cli, "iso-covariance"),
        Cmd::Clusters { eps } => clusters_cmd(cli, *eps),
        Cmd::CarpetDim => run_direct(cli, "geometry", loopsoup::harness::plane::carpet_experiment),
        Cmd::Crossing => run_direct(cli, "geometry", loopsoup::harness::plane::crossing_experiment),
        Cmd::Laplace => run_named(cli, "laplace-identity"),
        Cmd::Scaling => run_direct(cli, "near-critical", loopsoup::harness::scaling_comparison),
        Cmd::Dichotomy => run_direct(cli, "near-critical", loopsoup::harness::dichotomy_experiment),
        Cmd::Report { experiment } => report_cmd(cli, experiment.as_deref()),
    }
}

/// Resolve the effective config: `--config` wins over the pinned default for
/// `experiment`, then the individual flag overrides are applied on top.
fn resolve_config(cli: &Cli, experiment: &str) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default_for(experiment)?,
    };
    cfg.experiment = experiment.to_owned();
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(replicas) = cli.replicas {
        cfg.replicas = replicas;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run_named(cli: &Cli, name: &str) -> anyhow::Result<bool> {
    let cfg = resolve_config(cli, name)?;
    let report = run_experiment(&cfg, cli.workers)?;
    print_report(&report);
    Ok(report.passed)
}

/// Run one of the row-family runners that is not a registry entry of its own
/// (a slice of a registered experiment), handling artifacts the same way.
fn run_direct(
    cli: &Cli,
    parent: &str,
    runner: fn(&RunConfig, usize) -> loopsoup::Result<StatReport>,
) -> anyhow::Result<bool> {
    let cfg = resolve_config(cli, parent)?;
    let start = Instant::now();
    let mut report = runner(&cfg, cli.workers)?;
    report.timings.push(("total".into(), start.elapsed().as_secs_f64()));
    if let Some(dir) = &cfg.out {
        report.write(dir)?;
    }
    print_report(&report);
    Ok(report.passed)
}

fn report_cmd(cli: &Cli, experiment: Option<&str>) -> anyhow::Result<bool> {
    match (experiment, &cli.config) {
        (Some(name), _) => run_named(cli, name),
        (None, Some(path)) => {
            let mut cfg = RunConfig::load(path)
                .with_context(|| format!("loading config {}", path.display()))?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(replicas) = cli.replicas {
                cfg.replicas = replicas;
            }
            if let Some(out) = &cli.out {
                cfg.out = Some(out.clone());
            }
            let report = run_experiment(&cfg, cli.workers)?;
            print_report(&report);
            Ok(report.passed)
        }
        (None, None) => {
            println!("{:<24} {:>3}  about", "experiment", "#");
            for e in EXPERIMENTS {
                println!("{:<24} {:>3}  {}", e.name, e.criterion, e.about);
            }
            Ok(true)
        }
    }
}

fn print_report(rep: &StatReport) {
    println!(
        "{}  seed {}  replicas {}",
        rep.experiment, rep.config.seed, rep.config.replicas
    );
    for c in &rep.criteria {
        // Reported-only rows are diagnostics: their estimate is the point,
        // their pass flag gates nothing.
        let flag = if !c.asserted {
            "info"
        } else if c.pass {
            "pass"
        } else {
            "FAIL"
        };
        println!(
            "  {flag}  {:<44} est {:>13.6e}  target {:>13.6e}  tol {:.3e}",
            c.name, c.estimate, c.target, c.tolerance
        );
    }
    let total = rep
        .timings
        .iter()
        .find(|(k, _)| k == "total")
        .map(|(_, v)| *v)
        .unwrap_or(0.0);
    println!(
        "{}: {} ({} rows, {:.1}s)",
        rep.experiment,
        if rep.passed { "PASS" } else { "FAIL" },
        rep.criteria.len(),
        total
    );
}

/// Either print `body` to stdout or, with --out, write it to `name` there and
/// print the one-line `summary` instead.
fn emit(cli: &Cli, name: &str, body: &str, summary: &str) -> anyhow::Result<()> {
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            println!("{summary}");
            println!("wrote {}", path.display());
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn sample_soup_cmd(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = resolve_config(cli, "massive-thinning")?;
    let spec = cfg
        .domain
        .clone()
        .context("sample-soup needs a [domain] table in the config")?;
    let domain = Domain::from_spec(&spec)?;
    let mass = cfg.mass_field()?;
    let killing = killing_from_mass(&domain, &mass)?;
    let key = StreamKey::root(cfg.seed).child("cli").child("soup");
    let soup = sample_soup(&domain, &killing, cfg.lambda, cfg.cutoffs.maxlen, key)?;
    let dump = dump_soup(&domain, &spec, &soup, &cfg.mass, cfg.seed);
    let mut body = serde_json::to_string_pretty(&dump)?;
    body.push('\n');
    let steps: usize = soup.loops.iter().map(|l| l.class.len()).sum();
    let summary = format!(
        "{} sites, {} loops, {} steps total, lambda {}, maxlen {}",
        domain.len(),
        soup.loops.len(),
        steps,
        cfg.lambda,
        cfg.cutoffs.maxlen
    );
    emit(cli, "soup.json", &body, &summary)?;
    Ok(true)
}

fn sample_plane_soup(cfg: &RunConfig, tag: &str) -> anyhow::Result<BrownianSoup> {
    let domain = cfg
        .plane
        .clone()
        .context("this command needs a [plane] domain in the config")?;
    let bcfg = BrownianSoupConfig {
        domain,
        lambda: cfg.lambda,
        t0: cfg.cutoffs.t0,
        spatial_step: cfg.cutoffs.spatial_step,
    };
    let key = StreamKey::root(cfg.seed).child("cli").child(tag);
    Ok(sample_brownian_soup(&bcfg, key)?)
}

fn brownian_soup_cmd(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = resolve_config(cli, "brownian-sanity")?;
    let soup = sample_plane_soup(&cfg, "brownian")?;
    let mass = cfg.mass_field()?;
    let mut body = String::from("root_x,root_y,duration,diameter,kept\n");
    let mut kept = 0usize;
    for l in &soup.loops {
        let keep = killing_functional(l, &mass)? <= l.mark;
        kept += keep as usize;
        let d = point_set_diameter(&l.path);
        writeln!(
            body,
            "{:?},{:?},{:?},{:?},{}",
            l.root.0, l.root.1, l.duration, d, keep as u8
        )?;
    }
    let mean_t = if soup.loops.is_empty() {
        0.0
    } else {
        soup.loops.iter().map(|l| l.duration).sum::<f64>() / soup.loops.len() as f64
    };
    let summary = format!(
        "{} loops sampled ({} before restriction), {} kept under mass \"{}\", mean duration {:.4}",
        soup.loops.len(),
        soup.pre_count,
        kept,
        cfg.mass,
        mean_t
    );
    emit(cli, "loops.csv", &body, &summary)?;
    Ok(true)
}

fn clusters_cmd(cli: &Cli, eps: f64) -> anyhow::Result<bool> {
    let cfg = resolve_config(cli, "geometry")?;
    let soup = sample_plane_soup(&cfg, "clusters")?;
    let mass = cfg.mass_field()?;
    let mut paths: Vec<Vec<Pt>> = Vec::new();
    for l in &soup.loops {
        if killing_functional(l, &mass)? <= l.mark {
            paths.push(l.path.clone());
        }
    }
    let set = build_clusters(&paths, eps)?;
    let mut body = String::from("cluster,loops,cells,diameter\n");
    for (i, c) in set.clusters.iter().enumerate() {
        let pts: Vec<Pt> = c
            .loops
            .iter()
            .flat_map(|&j| paths[j].iter().copied())
            .collect();
        writeln!(
            body,
            "{},{},{},{:?}",
            i,
            c.loops.len(),
            c.cells.len(),
            point_set_diameter(&pts)
        )?;
    }
    let largest = set.clusters.iter().map(|c| c.loops.len()).max().unwrap_or(0);
    let summary = format!(
        "{} loops in {} clusters at eps {} (largest holds {} loops)",
        paths.len(),
        set.clusters.len(),
        eps,
        largest
    );
    emit(cli, "clusters.csv", &body, &summary)?;
    Ok(true)
}

fn occupation_cmd(cli: &Cli) -> anyhow::Result<bool> {
    let cfg = resolve_config(cli, "iso-covariance")?;
    let spec = cfg
        .domain
        .clone()
        .context("occupation needs a [domain] table in the config")?;
    let domain = Domain::from_spec(&spec)?;
    let mass = cfg.mass_field()?;
    let killing = killing_from_mass(&domain, &mass)?;
    let g = green_function(&precision_matrix(&domain, &killing)?)?;
    let n_sites = domain.len();
    let root = StreamKey::root(cfg.seed).child("cli").child("occupation");
    let start = Instant::now();
    let fields = run_replicas(cfg.replicas, cli.workers, |i| {
        let key = root.index(i);
        let soup = sample_soup(
            &domain,
            &killing,
            cfg.lambda,
            cfg.cutoffs.maxlen,
            key.child("soup"),
        )?;
        let occ = occupation_field(&domain, &soup, &killing, key.child("occ"))?;
        Ok(occ.l)
    })?;
    let n = fields.len() as f64;
    let mut rows = Vec::with_capacity(n_sites + 1);
    let mut max_z = 0.0f64;
    for x in 0..n_sites {
        let mean = fields.iter().map(|f| f[x]).sum::<f64>() / n;
        let var = fields.iter().map(|f| (f[x] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        // E[L_x] is linear in the intensity: lambda * G_xx.
        let target = cfg.lambda * g[(x, x)];
        let z = if se > 0.0 { (mean - target) / se } else { f64::INFINITY };
        max_z = max_z.max(z.abs());
        let s = domain.site(x);
        rows.push(
            CriterionReport::new(
                &format!("occupation-mean-x{}-y{}", s.x, s.y),
                mean,
                target,
                4.0 * se,
                Check::AbsWithin,
            )
            .stderr(se)
            .replicas(cfg.replicas)
            .reported_only(),
        );
    }
    rows.push(
        CriterionReport::new("occupation-max-abs-z", max_z, 0.0, 4.0, Check::AtMost)
            .replicas(cfg.replicas)
            .cutoff("maxlen", cfg.cutoffs.maxlen as f64),
    );
    let mut report = StatReport::new(&cfg, rows);
    report.experiment = "occupation-means".into();
    report
        .timings
        .push(("total".into(), start.elapsed().as_secs_f64()));
    if let Some(dir) = &cfg.out {
        report.write(dir)?;
    }
    print_report(&report);
    Ok(report.passed)
}
