fn main() {
    std::process::exit(srdelab::cli::main_with_args(std::env::args_os()));
}
