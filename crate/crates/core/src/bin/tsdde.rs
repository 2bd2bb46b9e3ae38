fn main() {
    std::process::exit(timescale_dde::cli::run_command(std::env::args_os()));
}
