fn main() {
    std::process::exit(drikit::cli::main_with_args(std::env::args_os()));
}
