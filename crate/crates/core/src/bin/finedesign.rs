fn main() {
    std::process::exit(finedesign::cli::run(std::env::args_os()));
}
