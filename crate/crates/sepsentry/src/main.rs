fn main() {
    std::process::exit(sepsentry::cli::run_cli(std::env::args_os()));
}
