fn main() {
    std::process::exit(fedwsm_cli::cli::main_with_args(std::env::args_os()));
}
