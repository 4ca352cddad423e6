fn main() {
    std::process::exit(fplsr::cli::main_with_args(std::env::args_os()));
}
