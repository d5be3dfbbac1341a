fn main() -> std::process::ExitCode {
    renormtrace::cli::main()
}
