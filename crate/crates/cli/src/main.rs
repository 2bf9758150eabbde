fn main() {
    std::process::exit(faircompose_cli::run_cli(std::env::args_os()));
}
