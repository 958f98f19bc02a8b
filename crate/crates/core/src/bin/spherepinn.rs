fn main() {
    std::process::exit(spherepinn::cli::main_with_args(std::env::args_os()));
}
