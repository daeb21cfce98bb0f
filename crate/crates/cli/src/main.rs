fn main() {
    std::process::exit(lgl_cli::run_cli(std::env::args_os()));
}
