fn main() {
    std::process::exit(spc_cli::run_cli(std::env::args_os()));
}
