fn main() {
    std::process::exit(fairfal::harness::cli(std::env::args_os()));
}
