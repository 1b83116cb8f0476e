fn main() {
    std::process::exit(bdpnp::cli::run(std::env::args_os()));
}
