fn main() {
    std::process::exit(nnxp::cli::main_with_args(std::env::args_os()));
}
