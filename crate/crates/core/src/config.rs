//! TOML run configuration.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::simulate::SimulationConfig;

/// Read and validate a configuration file.
pub fn load_config(path: &Path) -> Result<SimulationConfig> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg = parse_config(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    let cfg: SimulationConfig = toml::from_str(text).map_err(|e| Error::Parse {
        path: "<string>".into(),
        message: e.to_string().trim_end().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// The default configuration with every field written out.
pub fn dump_config(cfg: &SimulationConfig) -> String {
    let body = toml::to_string_pretty(cfg).expect("config serializes");
    format!(
        "# sdgbp run configuration. Times in ps, doping in 1/m^3, bias in V.\n\
         # mode: stochastic_recombination | no_recombination\n\
         # collision.density_of_states: well_balanced | analytic\n\
         # random.basis: orthonormal | paper_unnormalized\n\n{body}"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::RunMode;

    #[test]
    fn dump_round_trips() {
        let cfg = SimulationConfig::default();
        let back = parse_config(&dump_config(&cfg)).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = parse_config("mode = \"no_recombination\"\nfinal_time = 2.5\n[grid]\nnx = 20\n").unwrap();
        assert_eq!(cfg.mode, RunMode::NoRecombination);
        assert_eq!(cfg.grid.nx, 20);
        assert_eq!(cfg.grid.nr, 24);
        assert_eq!(cfg.device.bias, 0.5);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_config("final_time = 1.0\ncfl = \"fast\"\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_config("[grid]\nnx = 10\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        assert!(matches!(parse_config("cfl = 1.5\n"), Err(Error::Config(_))));
    }

    #[test]
    fn missing_file_is_named() {
        let err = load_config(Path::new("/nonexistent/run.toml")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/run.toml"));
        assert_eq!(err.exit_code(), 2);
    }
}
