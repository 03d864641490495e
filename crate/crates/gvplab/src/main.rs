fn main() {
    std::process::exit(gvplab::harness::cli::cli_main(std::env::args()));
}
