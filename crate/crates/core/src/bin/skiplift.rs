fn main() {
    std::process::exit(skiplift::cli::main_with_args(std::env::args_os()));
}
