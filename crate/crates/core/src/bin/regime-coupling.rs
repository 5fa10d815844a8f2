fn main() {
    std::process::exit(regime_coupling::cli::run_command(std::env::args_os()));
}
