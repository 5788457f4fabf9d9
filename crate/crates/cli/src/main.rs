fn main() {
    std::process::exit(gradvoc_cli::run(std::env::args_os()));
}
