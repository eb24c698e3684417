fn main() {
    std::process::exit(rtp_arb_cli::run(std::env::args_os()));
}
