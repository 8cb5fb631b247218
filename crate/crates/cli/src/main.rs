fn main() {
    std::process::exit(vulnscan_cli::main_with(std::env::args_os()));
}
