//! Plain-text sweep configuration: one `key = value` pair per line, `#`
//! comments. Unknown keys and malformed values are reported with the file
//! name and line number.
//!
//! Keys (all optional, desk-scale defaults apply):
//!   mesh_n = 128            boundary node count
//!   cells = 240             target partition cells
//!   j_max = 8               trigonometric current order (2*j_max currents)
//!   members = 100           sample members per configuration
//!   p_grid = 1.5:3:16       either lo:hi:count or a comma list
//!   taus = 0,0.1            smoothing values for the linearization table
//!   recon_taus = 0          smoothing values for the reconstruction table
//!   samples = A,B,C,D       prior configurations A..F
//!   params = std,inv,nat,exp
//!   lambda = 1e-2           noise level / regularization weight
//!   seed = 7
//!   snapshot_members = 3
//!   tables = linerr,reconerr,misspecified
//!   tol = 1e-10             Newton tolerance
//!   max_newton_steps = 200
//!   out = sweep-out         output directory

use crate::Failure;
use plap_core::conductivity::Parametrization;
use plap_core::experiments::{linspace, SweepConfig, SweepTables};
use plap_core::prior::SampleId;
use std::path::{Path, PathBuf};

pub fn parse_sweep_config(path: &Path) -> Result<SweepConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let mut config = SweepConfig::desk_defaults(PathBuf::from("sweep-out"));
    let file = path.display();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Failure::config(format!("{file}:{line_no}: expected 'key = value'")))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| Failure::config(format!("{file}:{line_no}: bad {what} '{value}'"));

        match key {
            "mesh_n" => config.mesh_n = value.parse().map_err(|_| bad("mesh_n"))?,
            "cells" => config.cells = value.parse().map_err(|_| bad("cells"))?,
            "j_max" => config.j_max = value.parse().map_err(|_| bad("j_max"))?,
            "members" => config.members = value.parse().map_err(|_| bad("members"))?,
            "p_grid" => config.p_grid = parse_grid(value).ok_or_else(|| bad("p_grid"))?,
            "taus" => config.taus = parse_f64_list(value).ok_or_else(|| bad("taus"))?,
            "recon_taus" => {
                config.recon_taus = parse_f64_list(value).ok_or_else(|| bad("recon_taus"))?
            }
            "samples" => {
                config.samples = value
                    .split(',')
                    .map(|s| SampleId::parse(s.trim()))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| bad("samples"))?
            }
            "params" => {
                config.parametrizations = value
                    .split(',')
                    .map(|s| Parametrization::parse(s.trim()))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| bad("params"))?
            }
            "lambda" => config.lambda = value.parse().map_err(|_| bad("lambda"))?,
            "seed" => config.seed = value.parse().map_err(|_| bad("seed"))?,
            "snapshot_members" => {
                config.snapshot_members = value.parse().map_err(|_| bad("snapshot_members"))?
            }
            "tables" => {
                let mut tables = SweepTables {
                    linerr: false,
                    reconerr: false,
                    misspecified: false,
                };
                for t in value.split(',') {
                    match t.trim() {
                        "linerr" => tables.linerr = true,
                        "reconerr" => tables.reconerr = true,
                        "misspecified" => tables.misspecified = true,
                        _ => return Err(bad("tables entry")),
                    }
                }
                config.tables = tables;
            }
            "tol" => config.solver.tol = value.parse().map_err(|_| bad("tol"))?,
            "max_newton_steps" => {
                config.solver.max_newton_steps = value.parse().map_err(|_| bad("max_newton_steps"))?
            }
            "out" => config.out_dir = PathBuf::from(value),
            _ => {
                return Err(Failure::config(format!(
                    "{file}:{line_no}: unknown key '{key}'"
                )))
            }
        }
    }
    Ok(config)
}

fn parse_f64_list(value: &str) -> Option<Vec<f64>> {
    value
        .split(',')
        .map(|t| t.trim().parse().ok())
        .collect::<Option<Vec<f64>>>()
        .filter(|v| !v.is_empty())
}

/// Either `lo:hi:count` or a comma list of values.
fn parse_grid(value: &str) -> Option<Vec<f64>> {
    if let Some((lo, rest)) = value.split_once(':') {
        let (hi, count) = rest.split_once(':')?;
        let (lo, hi) = (lo.trim().parse().ok()?, hi.trim().parse().ok()?);
        let count: usize = count.trim().parse().ok()?;
        if count == 0 {
            return None;
        }
        Some(linspace(lo, hi, count))
    } else {
        parse_f64_list(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_a_full_config() {
        let f = write_temp(
            "# desk run\nmesh_n = 64\ncells = 60\np_grid = 1.5:3:4\ntaus = 0,0.1\nsamples = A, E\nparams = std,exp\nlambda = 1e-3\ntables = linerr\nout = results\n",
        );
        let config = parse_sweep_config(f.path()).unwrap();
        assert_eq!(config.mesh_n, 64);
        assert_eq!(config.p_grid.len(), 4);
        assert_eq!(config.samples, vec![SampleId::A, SampleId::E]);
        assert!(config.tables.linerr && !config.tables.reconerr);
        assert_eq!(config.out_dir, PathBuf::from("results"));
    }

    #[test]
    fn reports_line_numbers() {
        let f = write_temp("mesh_n = 64\nwhat = 3\n");
        let err = parse_sweep_config(f.path()).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains(":2:"), "{}", err.message);
    }

    #[test]
    fn rejects_malformed_values() {
        let f = write_temp("p_grid = 1.5:3\n");
        let err = parse_sweep_config(f.path()).unwrap_err();
        assert!(err.message.contains("p_grid"));
    }
}
