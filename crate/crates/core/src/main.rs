fn main() {
    std::process::exit(coalgene::cli::main_with_args(std::env::args_os()));
}
