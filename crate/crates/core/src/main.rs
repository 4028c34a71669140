fn main() {
    std::process::exit(donq::cli::main_with_args(std::env::args_os()));
}
