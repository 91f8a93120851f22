fn main() {
    std::process::exit(paracontact_cli::run(std::env::args()));
}
