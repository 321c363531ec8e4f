fn main() -> std::process::ExitCode {
    tdrs::cli::main()
}
