fn main() {
    std::process::exit(confcal::cli::main_with_args(std::env::args_os()));
}
