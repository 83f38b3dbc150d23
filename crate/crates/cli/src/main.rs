fn main() {
    std::process::exit(ogc_cli::main_with(std::env::args_os()));
}
