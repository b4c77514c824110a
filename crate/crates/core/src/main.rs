fn main() {
    std::process::exit(ccknap::harness::cli::cli_main(std::env::args_os()));
}
