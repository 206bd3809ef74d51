fn main() {
    std::process::exit(qnas_core::cli::main_with_args(std::env::args_os()));
}
