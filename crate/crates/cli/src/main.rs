fn main() {
    std::process::exit(svdd_cfar_cli::run(std::env::args_os()));
}
