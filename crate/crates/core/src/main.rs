fn main() {
    std::process::exit(scproof::run_cli())
}
