use boostseq::cli::{run, Cli};
use clap::Parser;

fn main() {
    // the only environment override: worker count
    if let Ok(threads) = std::env::var("BOOSTSEQ_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
