fn main() -> std::process::ExitCode {
    fleetpool::cli::main_with_args(std::env::args_os())
}
