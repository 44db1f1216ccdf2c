use crate::checks;
use crate::cli::CheckArgs;
use crate::error::{CliError, Result};

pub fn run(args: &CheckArgs) -> Result<()> {
    let results = checks::all(args.seed);
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Numerical(format!("{failed} check(s) failed")));
    }
    Ok(())
}
