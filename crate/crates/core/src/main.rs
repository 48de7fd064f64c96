fn main() {
    std::process::exit(causal_glm::cli::run(std::env::args_os()));
}
