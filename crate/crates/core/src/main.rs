fn main() {
    std::process::exit(fairalloc::cli::run_cli(std::env::args_os()));
}
