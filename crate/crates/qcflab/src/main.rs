use clap::Parser;

fn main() {
    let cli = qcflab::cli::Cli::parse();
    let code = match qcflab::cli::run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("qcflab: {e}");
            qcflab::cli::exit_code(&e)
        }
    };
    std::process::exit(code);
}
