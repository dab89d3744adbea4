fn main() -> std::process::ExitCode {
    avae::cli::main()
}
