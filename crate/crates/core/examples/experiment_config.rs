//! Resolving an experiment from a TOML file plus command-line style overrides.

use impatient::harness::{load_config, ConfigFile, Overrides};

const FILE: &str = r#"
preset = "seqelim"
replications = 20
seed = 3

[env]
alpha = 0.4

[policy.seq_elim_1pct]
threshold = 0.02
n_mc = 512
"#;

fn main() -> impatient::Result<()> {
    let file = ConfigFile::parse(FILE)?;
    let flags = Overrides {
        horizon: Some(30),
        ..Default::default()
    };
    let config = load_config(Some(&file), &flags)?;
    println!("{}", config.describe());

    match ConfigFile::parse("replications = 3\nalhpa = 0.4\n") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
