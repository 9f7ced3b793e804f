fn main() {
    std::process::exit(mclt_sgd_cli::main_with(std::env::args_os()));
}
