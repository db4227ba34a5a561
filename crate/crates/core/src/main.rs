use env_logger::Env;

fn main() {
    env_logger::Builder::from_env(Env::new().filter_or("EUDOXIA_LOG", "error")).init();
    std::process::exit(eudoxia::cli::main_with_args(std::env::args_os()));
}
