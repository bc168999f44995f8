fn main() {
    std::process::exit(extremis::cli::main_with_args(std::env::args_os()));
}
