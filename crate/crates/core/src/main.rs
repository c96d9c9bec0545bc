fn main() -> std::process::ExitCode {
    apptraffic::cli::main_with_args(std::env::args_os())
}
