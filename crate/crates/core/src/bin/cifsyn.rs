fn main() {
    std::process::exit(cifsyn::cli::main_with_args(std::env::args_os()));
}
