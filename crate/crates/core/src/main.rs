fn main() {
    std::process::exit(commitgen::cli::run(std::env::args_os()));
}
