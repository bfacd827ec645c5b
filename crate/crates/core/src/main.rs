fn main() -> std::process::ExitCode {
    condaj::cli::main()
}
