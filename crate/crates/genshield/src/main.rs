fn main() {
    std::process::exit(genshield::cli::main_with_args(std::env::args_os()));
}
