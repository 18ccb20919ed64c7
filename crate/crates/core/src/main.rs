fn main() {
    std::process::exit(dualrep::cli::main_with_args(std::env::args_os()));
}
