fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(anthracnose::cli::run_cli(&args));
}
