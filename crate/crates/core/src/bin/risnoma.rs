fn main() {
    std::process::exit(leo_ris_noma::harness::cli::run_cli(std::env::args_os()));
}
