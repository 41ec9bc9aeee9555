mod args;
mod commands;
mod config;
mod error;
mod header;

use std::io::IsTerminal;

use clap::Parser;
use tracing::level_filters::LevelFilter;

use args::{Cli, LogLevel};
use config::FileConfig;
use error::{classify, ExitCode};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { ExitCode::Usage } else { ExitCode::Ok };
            let _ = e.print();
            std::process::exit(code as i32);
        }
    };
    let level = match cli.log_level {
        LogLevel::Error => LevelFilter::ERROR,
        LogLevel::Warn => LevelFilter::WARN,
        LogLevel::Info => LevelFilter::INFO,
        LogLevel::Debug => LevelFilter::DEBUG,
        LogLevel::Trace => LevelFilter::TRACE,
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(level)
        .with_target(false)
        .with_ansi(std::io::stderr().is_terminal())
        .init();

    let result = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(anyhow::Error::from),
        None => Ok(FileConfig::default()),
    }
    .and_then(|cfg| commands::run(cli.command, &cfg));

    if let Err(e) = result {
        let code = classify(&e);
        eprintln!("okret: {}: {e:#}", code.label());
        std::process::exit(code as i32);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use error::UsageError;

    #[test]
    fn error_categories() {
        let usage = anyhow::Error::from(UsageError("x".into()));
        assert_eq!(classify(&usage), ExitCode::Usage);
        let data = anyhow::Error::from(okret_core::Error::Empty("corpus")).context("loading");
        assert_eq!(classify(&data), ExitCode::Data);
        let adapter = anyhow::Error::from(okret_core::genpipeline::AdapterError::Unavailable {
            endpoint: "caption".into(),
            reason: "refused".into(),
        })
        .context("health");
        assert_eq!(classify(&adapter), ExitCode::Adapter);
    }

    #[test]
    fn every_flag_is_documented() {
        use clap::CommandFactory;
        let cmd = Cli::command();
        cmd.clone().debug_assert();
        for sub in cmd.get_subcommands() {
            for arg in sub.get_arguments() {
                assert!(
                    arg.get_help().is_some(),
                    "`{} --{}` has no help text",
                    sub.get_name(),
                    arg.get_id()
                );
            }
        }
    }
}
