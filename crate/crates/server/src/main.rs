fn main() -> std::process::ExitCode {
    litknow_server::cli::main()
}
