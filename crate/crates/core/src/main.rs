use asc_moment::cli::{
    export_measure, export_ortho, export_spectrum, run_verify, transform_json, Format, Preset, RunConfig, DEFAULT_SEED,
};
use asc_moment::{Result, C64};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ascm", version, about = "q^-1 Al-Salam-Chihara spectral toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every verification suite; exit code 0 iff all pass.
    Verify,
    /// Dump the spectral measure.
    Measure,
    /// List the discrete spectrum.
    Spectrum,
    /// Gram matrix of the moment polynomials.
    Ortho {
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
    /// Apply F to a grid function given as JSON records.
    Transform {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Generic,
    Symmetric,
    Laguerre,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    #[arg(long, global = true, allow_hyphen_values = true, default_value_t = 0.5)]
    q: f64,
    #[arg(long, global = true, allow_hyphen_values = true, default_value_t = 0.6)]
    a: f64,
    #[arg(long, global = true, allow_hyphen_values = true, default_value_t = 0.5)]
    s_re: f64,
    #[arg(long, global = true, allow_hyphen_values = true, default_value_t = 0.866_025_403_784_438_6)]
    s_im: f64,
    #[arg(long, global = true, allow_hyphen_values = true, default_value_t = 1.0)]
    z: f64,
    /// Atom truncation tolerance of the measure.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    n_quad: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = PresetArg::Generic)]
    preset: PresetArg,
    /// Laguerre parameter, used with --preset laguerre.
    #[arg(long, global = true, allow_hyphen_values = true, default_value_t = -0.75)]
    alpha: f64,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let preset = match self.preset {
            PresetArg::Generic => Preset::Generic,
            PresetArg::Symmetric => Preset::Symmetric,
            PresetArg::Laguerre => Preset::Laguerre { alpha: self.alpha },
        };
        let mut cfg = RunConfig::new(self.q, self.a, C64::new(self.s_re, self.s_im), self.z, preset)?;
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        if let Some(n) = self.n_quad {
            cfg.n_quad = n;
        }
        cfg.seed = self.seed;
        Ok(cfg)
    }

    fn format(&self) -> Format {
        match self.format {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }

    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => std::fs::write(p, text)?,
            None => println!("{text}"),
        }
        Ok(())
    }
}

fn run(cli: &Cli) -> Result<bool> {
    let c = &cli.common;
    let cfg = c.config()?;
    match &cli.cmd {
        Cmd::Verify => {
            let report = run_verify(&cfg);
            c.emit(&report.to_json()?)?;
            for e in &report.suite {
                eprintln!("{} {:<40} {:.3e} (tol {:.0e})", if e.pass { "PASS" } else { "FAIL" }, e.name, e.residual, e.tol);
            }
            return Ok(report.passes());
        }
        Cmd::Measure => c.emit(&export_measure(&cfg.measure()?, c.format())?)?,
        Cmd::Spectrum => c.emit(&export_spectrum(&cfg.measure()?, c.format())?)?,
        Cmd::Ortho { n } => c.emit(&export_ortho(&cfg.measure()?, *n, c.format())?)?,
        Cmd::Transform { input } => c.emit(&transform_json(&cfg, &std::fs::read_to_string(input)?, c.format())?)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
