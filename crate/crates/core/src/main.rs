fn main() {
    std::process::exit(sdplan::cli::main_with_args(std::env::args_os()));
}
