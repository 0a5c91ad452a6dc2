fn main() {
    std::process::exit(dnetag::cli::run(std::env::args_os()));
}
