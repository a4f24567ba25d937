//! `hflow`: generate synthetic clips, score them against the physics priors,
//! evaluate predictions, run the refinement demo and check gradients.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
mod app;
mod ppm;
mod report;

use std::io::Write;

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let result = match app::configure_threads(std::env::var("HFLOW_THREADS").ok().as_deref()) {
        Ok(()) => app::dispatch(&argv),
        Err(e) => app::CommandResult::failure(1, e),
    };
    print!("{}", result.report);
    let _ = std::io::stdout().flush();
    if !result.diagnostic.is_empty() {
        eprint!("{}", result.diagnostic);
        if !result.diagnostic.ends_with('\n') {
            eprintln!();
        }
    }
    std::process::exit(result.code);
}
