fn main() {
    std::process::exit(gaussdimred::cli::run(std::env::args()));
}
