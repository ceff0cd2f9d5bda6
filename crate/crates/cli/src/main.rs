fn main() {
    std::process::exit(dialogbench_cli::run(std::env::args_os()));
}
