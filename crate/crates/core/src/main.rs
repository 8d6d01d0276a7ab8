fn main() {
    std::process::exit(genbench::cli::main_with_args(std::env::args_os()));
}
