use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fpinfo::analysis::{fk_probes, run_trajectory, run_verify, summarize, Status};
use fpinfo::config::{self, Experiment, Method};
use fpinfo::field::csv::{grid_metadata, write_atomic};
use fpinfo::solver_fd::{build_transition_kernel, evolve};
use fpinfo::solver_fk::probes_to_csv;
use fpinfo::{Error, ErrorKind, Result};

/// Fokker-Planck flows, information functionals and their identity checks.
#[derive(Debug, Parser)]
#[command(name = "fpinfo", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve the initial density and write one CSV per save time plus a manifest.
    Flow(Common),
    /// Tabulate the functionals over time and write report.csv and verdicts.txt.
    Info(Common),
    /// Run the configured identity checks; exit 0 iff all pass.
    Verify(Common),
    /// Write the transition kernel at one time as kernel.csv.
    Kernel {
        #[command(flatten)]
        common: Common,
        /// Kernel time (default: time.t_end).
        #[arg(long)]
        time: Option<f64>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `output` from the config, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<(Experiment, PathBuf)> {
        let mut exp = config::load(&self.config)?;
        if let Some(seed) = self.seed {
            exp = exp.with_seed(seed);
        }
        let out = self
            .out
            .clone()
            .or_else(|| exp.output.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out)?;
        Ok((exp, out))
    }
}

fn flow(c: &Common) -> Result<()> {
    let (exp, out) = c.load()?;
    let traj = if exp.method != Method::Fk {
        let traj = evolve(&exp.mu0, &exp.potential, exp.t_end, exp.dt, &exp.save_times)?;
        let files = traj.write_to_dir(&out)?;
        println!("wrote {} files to {}", files.len(), out.display());
        Some(traj)
    } else {
        None
    };
    if exp.method != Method::Fd {
        let dim = exp.grid.dim();
        let rows: Vec<_> = fk_probes(&exp, traj.as_ref())?
            .into_iter()
            .map(|p| (p.x[..dim].to_vec(), p.t, p.estimate))
            .collect();
        let path = out.join("probes.csv");
        write_atomic(&path, &probes_to_csv(&rows))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn info(c: &Common) -> Result<()> {
    let (exp, out) = c.load()?;
    let run = run_trajectory(&exp)?;
    let verdicts = summarize(&exp, &run).to_text();
    write_atomic(&out.join("report.csv"), &run.report.to_csv())?;
    write_atomic(&out.join("verdicts.txt"), &verdicts)?;
    print!("{verdicts}");
    Ok(())
}

/// Returns whether every member passed.
fn verify(c: &Common) -> Result<bool> {
    let (exp, out) = c.load()?;
    let lines = run_verify(&exp)?;
    let mut text = String::new();
    for l in &lines {
        let _ = writeln!(text, "{}", l.to_line());
    }
    write_atomic(&out.join("verify.txt"), &text)?;
    print!("{text}");
    Ok(lines.iter().all(|l| l.status != Status::Fail))
}

fn kernel(c: &Common, time: Option<f64>) -> Result<()> {
    let (exp, out) = c.load()?;
    let t = time.unwrap_or(exp.t_end);
    let k = build_transition_kernel(&exp.potential, &exp.grid, t, exp.dt, exp.bandwidth)?;
    let grid = &exp.grid;
    let dim = grid.dim();
    let mut s = format!(
        "# kernel t={t:.16e} dt={:.16e} bandwidth={:.16e}\n{}\n",
        exp.dt,
        exp.bandwidth,
        grid_metadata(grid)
    );
    s.push_str(if dim == 1 { "x0,x,p\n" } else { "x0,y0,x,y,p\n" });
    for j in 0..grid.len() {
        let y = grid.node(j);
        for (i, p) in k.column(j).iter().enumerate() {
            let x = grid.node(i);
            if dim == 1 {
                let _ = writeln!(s, "{:.16e},{:.16e},{p:.16e}", y[0], x[0]);
            } else {
                let _ = writeln!(s, "{:.16e},{:.16e},{:.16e},{:.16e},{p:.16e}", y[0], y[1], x[0], x[1]);
            }
        }
    }
    let path = out.join("kernel.csv");
    write_atomic(&path, &s)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Solver => 3,
        ErrorKind::Analysis => 4,
        ErrorKind::Io => 1,
    }
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Flow(c) => flow(c).map(|_| true),
        Command::Info(c) => info(c).map(|_| true),
        Command::Verify(c) => verify(c),
        Command::Kernel { common, time } => kernel(common, *time).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FPINFO_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
