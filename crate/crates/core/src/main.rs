fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(radiomic_ssl::cli::run(&args));
}
