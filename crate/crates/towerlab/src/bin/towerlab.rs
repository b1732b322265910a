fn main() {
    std::process::exit(towerlab::cli::run(std::env::args_os()));
}
