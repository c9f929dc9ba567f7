use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use octree_poisson::harness::config::{parse_assignment, read_pairs};
use octree_poisson::harness::scaling::scaling_csv;
use octree_poisson::harness::{run_case, scaling_probe, write_outputs, CaseConfig};
use octree_poisson::Error;

#[derive(Parser)]
#[command(version, about = "Multigrid Poisson solver on octree meshes with embedded Dirichlet boundaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its outputs.
    Run {
        /// sphere_uniform, sphere_refined, shape2d[:shape], shape3d_cyl[:shape],
        /// two_electrodes, manufactured, sphere2d or sphere3d.
        #[arg(long)]
        case: Option<String>,
        /// File with `key = value` lines.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one key; may be repeated.
        #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
        set: Vec<(String, String)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time FMG cycles across grid and block sizes.
    Scaling {
        /// sphere2d or sphere3d.
        #[arg(long, default_value = "sphere3d")]
        case: String,
        /// Cells per axis of the finest grid.
        #[arg(long, value_delimiter = ',', default_value = "64,128,256")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32")]
        blocks: Vec<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_assignment)]
        set: Vec<(String, String)>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Expands case aliases into configuration pairs.
fn case_pairs(arg: &str) -> Vec<(String, String)> {
    let kv = |k: &str, v: &str| (k.to_owned(), v.to_owned());
    match arg.split_once(':') {
        Some((case, shape)) => vec![kv("case", case), kv("shape", shape)],
        None => match arg {
            "sphere2d" => vec![kv("case", "sphere_uniform"), kv("dim", "2")],
            "sphere3d" => vec![kv("case", "sphere_uniform"), kv("dim", "3")],
            _ => vec![kv("case", arg)],
        },
    }
}

fn run(
    case: Option<String>,
    config: Option<PathBuf>,
    set: Vec<(String, String)>,
    out: Option<PathBuf>,
) -> Result<ExitCode, Error> {
    let mut pairs = match &config {
        Some(path) => read_pairs(path)?,
        None => Vec::new(),
    };
    if let Some(c) = &case {
        pairs.extend(case_pairs(c));
    }
    pairs.extend(set);
    if let Some(o) = out {
        pairs.push(("out".into(), o.display().to_string()));
    }
    let cfg = CaseConfig::from_pairs(&pairs)?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("no output directory (use --out or the out key)".into()))?;

    println!("case {} dim {} max_level {}", cfg.case.name(), cfg.dim, cfg.max_level);
    let result = run_case(&cfg, |rec| {
        println!(
            "cycle {:3}  max_resid {:.4e}  l2_resid {:.4e}  {:.3} s",
            rec.cycle, rec.max_resid, rec.l2_resid, rec.seconds
        );
    })?;
    write_outputs(&result, &out)?;

    let r = &result.report;
    let s = &r.stats;
    println!(
        "{} leaf cells, {} blocks ({} boundary), {} levels",
        s.leaf_cells, s.blocks, s.boundary_blocks, s.levels
    );
    if let Some(e) = r.errors.as_ref().and_then(|e| e.last()) {
        println!("error l_inf {:.4e}  l2 {:.4e}", e.l_inf, e.l2);
    }
    if let Some(f) = &r.failure {
        eprintln!("solver failed: {f}");
    }
    println!("outputs written to {}", out.display());
    Ok(if r.converged {
        ExitCode::SUCCESS
    } else {
        println!("not converged");
        ExitCode::from(2)
    })
}

fn scaling(
    case: String,
    sizes: Vec<usize>,
    blocks: Vec<usize>,
    set: Vec<(String, String)>,
    out: PathBuf,
) -> Result<ExitCode, Error> {
    let mut pairs = case_pairs(&case);
    pairs.push(("dump".into(), "false".into()));
    pairs.extend(set);
    let cfg = CaseConfig::from_pairs(&pairs)?;
    let rows = scaling_probe(&cfg, &sizes, &blocks)?;
    let csv = scaling_csv(&rows);
    print!("{csv}");
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let path = out.join("scaling.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { case, config, set, out } => run(case, config, set, out),
        Command::Scaling {
            case,
            sizes,
            blocks,
            set,
            out,
        } => scaling(case, sizes, blocks, set, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
