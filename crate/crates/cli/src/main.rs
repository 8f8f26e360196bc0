fn main() {
    std::process::exit(coldrec_cli::run(std::env::args_os()));
}
