fn main() -> std::process::ExitCode {
    wamdf::cli::run(std::env::args_os())
}
