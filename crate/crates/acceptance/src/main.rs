fn main() {
    std::process::exit(snips::cli::main_with_args(std::env::args_os()));
}
