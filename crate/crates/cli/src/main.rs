fn main() {
    std::process::exit(endqt_cli::main_with_args(std::env::args_os()));
}
