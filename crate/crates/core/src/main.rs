fn main() {
    std::process::exit(afdforge::cli::main_with_args(std::env::args_os()));
}
