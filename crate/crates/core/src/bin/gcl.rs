fn main() {
    std::process::exit(gcl::cli::main_with_args(std::env::args_os()));
}
