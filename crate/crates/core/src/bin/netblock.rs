fn main() {
    std::process::exit(netblock::cli::cli_main(std::env::args_os()));
}
