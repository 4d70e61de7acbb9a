fn main() {
    std::process::exit(rsgd_cli::run_cli(std::env::args_os().collect()));
}
