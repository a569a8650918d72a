fn main() {
    std::process::exit(convoy::cli::main_with_args(std::env::args_os()));
}
