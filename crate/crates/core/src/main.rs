fn main() {
    std::process::exit(permanental::cli::main_with_args(std::env::args_os()));
}
