fn main() {
    std::process::exit(jsq_cli::run(std::env::args_os()));
}
