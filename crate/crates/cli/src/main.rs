fn main() {
    std::process::exit(npica_cli::run(std::env::args_os()));
}
