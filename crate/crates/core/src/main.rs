fn main() {
    std::process::exit(countnet::harness::cli_main(std::env::args().collect()));
}
