fn main() {
    std::process::exit(hctm_cli::run(std::env::args_os()));
}
