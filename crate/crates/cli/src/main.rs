use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use localsgd::theory::{GammaRule, HRule};
use localsgd_cli::acceptance::{results_json, Level, Status, Suite};
use localsgd_cli::commands::{cmd_run, cmd_solve_ref, cmd_variances, plan_gamma_report, plan_h_report, write_file};
use localsgd_cli::config::ExperimentConfig;
use localsgd_cli::data::DATA_DIR_ENV;
use localsgd_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "localsgd", version, about = "Deterministic Local SGD simulator and bound checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure sigma_opt^2 and sigma_dif^2 over the configured M and batch sizes.
    Variances(ExpArgs),
    /// Run a schedule sweep and check every applicable bound.
    Run(ExpArgs),
    /// Solve for the reference optimum only.
    SolveRef(ExpArgs),
    /// Run the acceptance suite.
    Verify {
        /// fast (50 seeds) or full (200 seeds)
        level: Level,
        /// Also write verify.json here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
        #[arg(long, env = DATA_DIR_ENV, default_value = "data")]
        data_dir: PathBuf,
    },
    /// Interval and stepsize planners.
    #[command(subcommand)]
    Plan(PlanCommand),
}

#[derive(Subcommand)]
enum PlanCommand {
    /// Largest admissible H: sc-iid, sc-iid-fs, wc-iid, wc-het.
    H {
        rule: HRule,
        #[arg(short = 'T', long = "T")]
        t: usize,
        #[arg(short = 'M', long = "M")]
        m: usize,
        #[arg(long)]
        kappa: Option<f64>,
    },
    /// Stepsize: sc-ubv:<t>, wc-ubv, sc-fs:<t>, wc-fs, wc-het.
    Gamma {
        rule: GammaRule,
        #[arg(short = 'L', long = "L")]
        l: f64,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(short = 'M', long = "M")]
        m: usize,
        #[arg(short = 'T', long = "T")]
        t: usize,
        #[arg(short = 'H', long = "H", default_value_t = 1)]
        h: usize,
    },
}

#[derive(Args)]
struct ExpArgs {
    /// INI file with [data], [run] and [output] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. --set nodes=8.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(short = 'T', long = "T")]
    t: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl ExpArgs {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let mut pairs = Vec::new();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let flags = [
            ("dataset", &self.dataset),
            ("data_dir", &self.data_dir),
            ("lambda", &self.lambda),
            ("nodes", &self.nodes),
            ("regime", &self.regime),
            ("batch", &self.batch),
            ("gamma", &self.gamma),
            ("schedule", &self.schedule),
            ("T", &self.t),
            ("seeds", &self.seeds),
            ("dir", &self.out),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.push((k.to_string(), v.clone()));
            }
        }
        ExperimentConfig::load(self.config.as_deref(), &pairs)
    }
}

fn out(s: &str) {
    let _ = std::io::stdout().lock().write_all(s.as_bytes());
}

fn execute(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::Variances(a) => {
            let cfg = a.load()?;
            for r in cmd_variances(&cfg)? {
                out(&format!(
                    "M={} batch={} sigma_opt_sq={:e} sigma_dif_sq={:e}\n",
                    r.nodes, r.report.batch, r.report.sigma_opt_sq, r.report.sigma_dif_sq
                ));
            }
            Ok(true)
        }
        Command::SolveRef(a) => {
            let cfg = a.load()?;
            out(&cmd_solve_ref(&cfg)?.to_kv());
            Ok(true)
        }
        Command::Run(a) => {
            let cfg = a.load()?;
            let report = cmd_run(&cfg)?;
            for s in &report.summary {
                out(&format!("{} H={} gamma={:e} rounds={} status={}\n", s.label, s.h, s.gamma, s.comm_rounds, s.status));
            }
            for v in &report.verdicts {
                match &v.verdict {
                    Some(vd) => out(&format!("{} {}\n", v.label, vd.summary())),
                    None => out(&format!("{} {} not applicable: {}\n", v.label, v.theorem, v.note)),
                }
            }
            if let Some(gap) = report.minibatch_gap {
                out(&format!("minibatch_gap={gap:e}\n"));
            }
            out(&format!("wrote {} files to {}\n", report.files.len(), cfg.out_dir.display()));
            Ok(!report.any_violation())
        }
        Command::Verify { level, out: dir, only, data_dir } => {
            let suite = Suite::new(level, data_dir);
            let ids: Vec<u8> = if only.is_empty() { (1..=11).collect() } else { only };
            let mut results = Vec::new();
            for id in ids {
                if !(1..=11).contains(&id) {
                    return Err(CliError::Config(format!("no criterion {id}")));
                }
                let r = suite.run(id);
                out(&format!("{}\n", r.line()));
                results.push(r);
            }
            if let Some(dir) = dir {
                let json = serde_json::to_string_pretty(&results_json(level, &results))
                    .map_err(|e| CliError::Failed(e.to_string()))?;
                write_file(&dir, "verify.json", &json)?;
            }
            Ok(results.iter().all(|r| r.status != Status::Fail))
        }
        Command::Plan(PlanCommand::H { rule, t, m, kappa }) => {
            out(&plan_h_report(rule, t, m, kappa)?);
            Ok(true)
        }
        Command::Plan(PlanCommand::Gamma { rule, l, mu, m, t, h }) => {
            out(&plan_gamma_report(rule, l, mu, m, t, h)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
