fn main() {
    std::process::exit(dabag_cli::main_with_args(std::env::args_os()));
}
