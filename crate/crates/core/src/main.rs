fn main() -> std::process::ExitCode {
    earthstrata::cli::main()
}
