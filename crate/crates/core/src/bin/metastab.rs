fn main() {
    std::process::exit(metastab::cli::main_with_args(std::env::args_os()));
}
