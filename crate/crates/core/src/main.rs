fn main() {
    std::process::exit(stablequeue::cli::main_with_args(std::env::args_os()));
}
