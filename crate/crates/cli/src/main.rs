fn main() {
    std::process::exit(rdalm_cli::run(std::env::args_os()));
}
