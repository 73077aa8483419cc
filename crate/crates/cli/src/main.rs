fn main() {
    std::process::exit(bbmsf_cli::main_with_args(std::env::args_os()));
}
