fn main() {
    std::process::exit(pane_core::cli::run_cli(std::env::args_os()));
}
