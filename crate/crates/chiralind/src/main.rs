use clap::Parser;

use chiralind::cli;

fn main() {
    let args = cli::Cli::parse();
    if let Some(n) = cli::thread_count(args.threads) {
        // a failure here means a pool already exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    std::process::exit(cli::run(&args));
}
