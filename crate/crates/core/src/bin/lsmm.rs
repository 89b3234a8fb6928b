fn main() {
    std::process::exit(lsmm::cli::parse_and_dispatch(std::env::args_os()));
}
