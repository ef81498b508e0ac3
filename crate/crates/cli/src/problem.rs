//! Problem-source resolution: built-in fixtures, the grid generator, or a
//! `.pomdp` file on disk.

use anyhow::{bail, Context, Result};

use aafib::fixtures;
use aafib::model::PomdpModel;
use aafib::parser::parse_pomdp;

/// Accepted forms:
/// - `tiger` — the built-in tiger instance;
/// - `grid-nav:W,H,SLIP,NOISE,SEED` (trailing parameters optional, defaults
///   `0.1,0.1,0`) — the built-in generator;
/// - anything else — a path to a `.pomdp` file.
pub fn load_problem(spec: &str) -> Result<PomdpModel> {
    if spec == "tiger" {
        return Ok(fixtures::tiger());
    }
    if let Some(params) = spec
        .strip_prefix("grid-nav:")
        .or_else(|| spec.strip_prefix("grid_nav:"))
    {
        return grid_from_spec(params).with_context(|| format!("invalid generator spec `{spec}`"));
    }
    let text = std::fs::read_to_string(spec)
        .with_context(|| format!("cannot read problem file {spec}"))?;
    let model =
        parse_pomdp(&text).with_context(|| format!("cannot parse problem file {spec}"))?;
    Ok(model)
}

fn grid_from_spec(params: &str) -> Result<PomdpModel> {
    let parts: Vec<&str> = params.split(',').collect();
    if parts.len() < 2 || parts.len() > 5 {
        bail!("expected W,H[,SLIP[,NOISE[,SEED]]], got `{params}`");
    }
    let width: usize = parts[0].trim().parse().context("bad width")?;
    let height: usize = parts[1].trim().parse().context("bad height")?;
    let slip: f64 = parts
        .get(2)
        .map(|s| s.trim().parse())
        .transpose()
        .context("bad slip probability")?
        .unwrap_or(0.1);
    let noise: f64 = parts
        .get(3)
        .map(|s| s.trim().parse())
        .transpose()
        .context("bad observation noise")?
        .unwrap_or(0.1);
    let seed: u64 = parts
        .get(4)
        .map(|s| s.trim().parse())
        .transpose()
        .context("bad seed")?
        .unwrap_or(0);
    Ok(fixtures::generate_grid_nav(width, height, slip, noise, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_and_generator_specs_resolve() {
        assert_eq!(load_problem("tiger").unwrap().num_states(), 2);
        let grid = load_problem("grid-nav:3,4,0.2,0.1,9").unwrap();
        assert_eq!(grid.num_states(), 13);
        let defaults = load_problem("grid-nav:3,4").unwrap();
        assert_eq!(defaults.num_states(), 13);
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_problem("/no/such/file.pomdp").unwrap_err();
        assert!(format!("{err:#}").contains("/no/such/file.pomdp"));
    }
}
