fn main() {
    if let Err(e) = gibbs_ibp_cli::run(std::env::args_os()) {
        eprintln!("gibbs-ibp: {e}");
        std::process::exit(e.exit_code());
    }
}
